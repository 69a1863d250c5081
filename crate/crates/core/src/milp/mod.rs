//! Linear and mixed-binary models, an exact rational simplex, branch-and-bound
//! and LP/MPS export.

mod bnb;
pub mod export;
mod simplex;

use std::collections::HashMap;
use std::fmt;
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::Rational;

pub use export::{export_model, write_lp, write_mps, ExportFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    /// `None` is minus infinity.
    pub lower: Option<Rational>,
    /// `None` is plus infinity.
    pub upper: Option<Rational>,
    /// Free-form tag such as `"x"`, `"y"` or `"z"`.
    pub role: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, Rational)>,
    pub sense: Sense,
    pub rhs: Rational,
}

impl Constraint {
    pub fn lhs(&self, x: &[Rational]) -> Rational {
        self.coeffs.iter().map(|(j, c)| c * &x[*j]).sum()
    }

    pub fn satisfied(&self, x: &[Rational]) -> bool {
        let lhs = self.lhs(x);
        match self.sense {
            Sense::Le => lhs <= self.rhs,
            Sense::Eq => lhs == self.rhs,
            Sense::Ge => lhs >= self.rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObjSense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone)]
pub struct MilpModel {
    pub name: String,
    vars: Vec<Variable>,
    cons: Vec<Constraint>,
    obj_sense: ObjSense,
    objective: Vec<(usize, Rational)>,
    index: HashMap<String, usize>,
}

fn merge_terms(terms: impl IntoIterator<Item = (usize, Rational)>) -> Vec<(usize, Rational)> {
    let mut v: Vec<(usize, Rational)> = terms.into_iter().collect();
    v.sort_by_key(|(j, _)| *j);
    let mut out: Vec<(usize, Rational)> = Vec::with_capacity(v.len());
    for (j, c) in v {
        match out.last_mut() {
            Some((k, acc)) if *k == j => *acc += c,
            _ => out.push((j, c)),
        }
    }
    out.retain(|(_, c)| !c.is_zero());
    out
}

impl MilpModel {
    pub fn new(name: impl Into<String>, sense: ObjSense) -> Self {
        MilpModel {
            name: name.into(),
            vars: Vec::new(),
            cons: Vec::new(),
            obj_sense: sense,
            objective: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: Option<Rational>,
        upper: Option<Rational>,
        role: impl Into<String>,
    ) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Model(format!("duplicate variable name {name:?}")));
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (Some(Rational::zero()), Some(Rational::one())),
            VarKind::Continuous => (lower, upper),
        };
        if let (Some(l), Some(u)) = (&lower, &upper) {
            if l > u {
                return Err(Error::Model(format!("variable {name:?} has lower > upper")));
            }
        }
        let j = self.vars.len();
        self.index.insert(name.clone(), j);
        self.vars.push(Variable {
            name,
            kind,
            lower,
            upper,
            role: role.into(),
        });
        Ok(j)
    }

    /// Continuous variable in `[0, upper]`.
    pub fn add_nonneg(
        &mut self,
        name: impl Into<String>,
        upper: Option<Rational>,
        role: impl Into<String>,
    ) -> Result<usize> {
        self.add_var(name, VarKind::Continuous, Some(Rational::zero()), upper, role)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, role: impl Into<String>) -> Result<usize> {
        self.add_var(name, VarKind::Binary, None, None, role)
    }

    /// Adds a constraint; repeated variables are merged and zero terms dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (usize, Rational)>,
        sense: Sense,
        rhs: Rational,
    ) -> usize {
        let coeffs = merge_terms(terms);
        assert!(
            coeffs.iter().all(|(j, _)| *j < self.vars.len()),
            "constraint references an undeclared variable"
        );
        self.cons.push(Constraint {
            name: name.into(),
            coeffs,
            sense,
            rhs,
        });
        self.cons.len() - 1
    }

    pub fn set_objective(&mut self, terms: impl IntoIterator<Item = (usize, Rational)>) {
        self.objective = merge_terms(terms);
    }

    pub fn set_bounds(&mut self, j: usize, lower: Option<Rational>, upper: Option<Rational>) {
        self.vars[j].lower = lower;
        self.vars[j].upper = upper;
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.cons
    }

    pub fn objective(&self) -> &[(usize, Rational)] {
        &self.objective
    }

    pub fn obj_sense(&self) -> ObjSense {
        self.obj_sense
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.vars.len())
            .filter(|&j| self.vars[j].kind == VarKind::Binary)
            .collect()
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        self.objective.iter().map(|(j, c)| c * &x[*j]).sum()
    }

    /// Copy with every binary relaxed to a continuous `[0, 1]` variable.
    pub fn relaxed(&self) -> MilpModel {
        let mut m = self.clone();
        for v in &mut m.vars {
            v.kind = VarKind::Continuous;
        }
        m
    }

    /// Every violated bound, integrality requirement and constraint.
    pub fn violations(&self, x: &[Rational]) -> Vec<String> {
        let mut out = Vec::new();
        if x.len() != self.vars.len() {
            out.push(format!(
                "assignment has {} values for {} variables",
                x.len(),
                self.vars.len()
            ));
            return out;
        }
        for (v, val) in self.vars.iter().zip(x) {
            if v.lower.as_ref().is_some_and(|l| val < l) || v.upper.as_ref().is_some_and(|u| val > u) {
                out.push(format!("{} = {} violates its bounds", v.name, val));
            }
            if v.kind == VarKind::Binary && !val.is_integer() {
                out.push(format!("{} = {} is not integral", v.name, val));
            }
        }
        for c in &self.cons {
            if !c.satisfied(x) {
                out.push(format!(
                    "{}: lhs {} {} {} fails",
                    c.name,
                    c.lhs(x),
                    c.sense,
                    c.rhs
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    FeasibleAtLimit,
    Infeasible,
    Unbounded,
    LimitNoIncumbent,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::FeasibleAtLimit => "feasible-at-limit",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::LimitNoIncumbent => "limit-no-incumbent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnapshotTrigger {
    Nodes(u64),
    Seconds(f64),
}

/// Search state captured when a snapshot trigger fires.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub trigger: SnapshotTrigger,
    pub nodes: u64,
    pub elapsed: Duration,
    /// Bound and LP solution of the open node with the best bound, or of the
    /// incumbent's node once the tree is exhausted.
    pub lp_bound: Option<Rational>,
    pub lp_assignment: Option<Vec<Rational>>,
    pub incumbent_value: Option<Rational>,
    pub incumbent: Option<Vec<Rational>>,
}

#[derive(Debug, Clone)]
pub struct MilpResult {
    pub status: Status,
    pub objective: Option<Rational>,
    pub assignment: Option<Vec<Rational>>,
    /// Best proven bound on the optimum (upper for maximization).
    pub best_bound: Option<Rational>,
    pub root_bound: Option<Rational>,
    pub root_assignment: Option<Vec<Rational>>,
    pub nodes: u64,
    pub elapsed: Duration,
    pub snapshots: Vec<Snapshot>,
}

impl MilpResult {
    pub fn value_of(&self, m: &MilpModel, name: &str) -> Option<Rational> {
        let j = m.var_index(name)?;
        self.assignment.as_ref().map(|x| x[j].clone())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Limits {
    pub time: Option<Duration>,
    pub nodes: Option<u64>,
}

/// A start assignment already checked against its model.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart(Vec<Rational>);

impl WarmStart {
    pub fn assignment(&self) -> &[Rational] {
        &self.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub limits: Limits,
    pub snapshots: Vec<SnapshotTrigger>,
    pub warm_start: Option<WarmStart>,
}

/// LP relaxation: binaries are treated as continuous `[0, 1]` variables.
pub fn solve_lp(m: &MilpModel) -> MilpResult {
    bnb::solve_relaxation(m)
}

/// Best-bound branch-and-bound over the binary variables.
pub fn solve_milp(m: &MilpModel, opts: &SolveOptions) -> MilpResult {
    bnb::branch_and_bound(m, opts)
}

/// Validates a start given by variable name.
///
/// A complete assignment is checked as is. A partial assignment must cover
/// every binary; it is completed by the best solution with all given values
/// fixed.
pub fn warm_start(m: &MilpModel, values: &HashMap<String, Rational>) -> Result<WarmStart> {
    for name in values.keys() {
        if m.var_index(name).is_none() {
            return Err(Error::Model(format!("unknown variable {name:?} in start")));
        }
    }
    if values.len() == m.vars.len() {
        let x: Vec<Rational> = m.vars.iter().map(|v| values[&v.name].clone()).collect();
        let bad = m.violations(&x);
        return if bad.is_empty() {
            Ok(WarmStart(x))
        } else {
            Err(Error::RejectedStart(bad))
        };
    }
    let mut fixed = m.clone();
    let mut bad = Vec::new();
    for j in m.binaries() {
        let name = &m.vars[j].name;
        match values.get(name) {
            None => bad.push(format!("{name} is not assigned")),
            Some(v) if *v != Rational::zero() && *v != Rational::one() => {
                bad.push(format!("{name} = {v} is not binary"))
            }
            Some(v) => fixed.set_bounds(j, Some(v.clone()), Some(v.clone())),
        }
    }
    if !bad.is_empty() {
        return Err(Error::RejectedStart(bad));
    }
    for (name, v) in values {
        let j = m.index[name];
        if m.vars[j].kind == VarKind::Continuous {
            fixed.set_bounds(j, Some(v.clone()), Some(v.clone()));
        }
    }
    // constraints touching binaries only can be checked directly
    let bin: Vec<bool> = m.vars.iter().map(|v| v.kind == VarKind::Binary).collect();
    let mut x = vec![Rational::zero(); m.vars.len()];
    for j in m.binaries() {
        x[j] = values[&m.vars[j].name].clone();
    }
    for c in &m.cons {
        if c.coeffs.iter().all(|(j, _)| bin[*j]) && !c.satisfied(&x) {
            bad.push(format!("{}: lhs {} {} {} fails", c.name, c.lhs(&x), c.sense, c.rhs));
        }
    }
    if !bad.is_empty() {
        return Err(Error::RejectedStart(bad));
    }
    let lp = solve_lp(&fixed);
    match (lp.status, lp.assignment) {
        (Status::Optimal, Some(x)) => Ok(WarmStart(x)),
        (status, _) => Err(Error::RejectedStart(vec![format!(
            "no feasible completion of the binaries (LP {status})"
        )])),
    }
}

#[cfg(test)]
mod tests;
