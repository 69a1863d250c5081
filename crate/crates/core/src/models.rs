//! MILP formulations: the continuous-time model (CTIP), the time-discretized
//! upper-bound model (TDIP) and its binary conformal lower-bound variant
//! (TDIP-LB), with schedule/z extraction, warm starts and the side
//! constraints for precedences, incompatible job sets and simultaneous jobs.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::add_flow_block;
use crate::instance::{ensure_feasible, ensure_valid, Arc, Instance, Job, Schedule};
use crate::milp::{self, MilpModel, MilpResult, ObjSense, Sense, VarKind, WarmStart};
use crate::rational::Rational;
use crate::timegrid::{is_conformal, Discretization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetVariant {
    /// Definitions of the upper-bound model.
    UpperBound,
    /// Re-defined `P_ai` and `mu` for conformal grids.
    LowerBound,
}

/// Index sets of one job on a fixed grid. Intervals are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JobSets {
    /// Intervals the job can start in.
    pub s: Vec<usize>,
    /// Intervals the job can be (partially) processed in.
    pub t: Vec<usize>,
    /// `Q_ai` for `i` in `S_a`.
    pub q: BTreeMap<usize, Vec<usize>>,
    /// `P_ai` for `i` in `T_a`.
    pub p: BTreeMap<usize, Vec<usize>>,
    pub p_star: BTreeMap<usize, Vec<usize>>,
    /// `mu+_aki` and `mu-_aki`, keyed by `(k, i)`.
    pub mu_plus: BTreeMap<(usize, usize), Rational>,
    pub mu_minus: BTreeMap<(usize, usize), Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSets {
    pub variant: SetVariant,
    /// One entry per job, in instance order.
    pub jobs: Vec<JobSets>,
}

pub fn job_sets(job: &Job, grid: &Discretization, variant: SetVariant) -> JobSets {
    let n = grid.n();
    let t = |i: usize| grid.t(i);
    let (r, d, p) = (&job.r, &job.d, &job.p);
    let latest = job.latest_start();
    let s: Vec<usize> = (1..=n).filter(|&i| r < t(i) && latest >= *t(i - 1)).collect();
    let tt: Vec<usize> = (1..=n).filter(|&i| d > t(i - 1) && r < t(i)).collect();
    let mut out = JobSets {
        s: s.clone(),
        t: tt.clone(),
        ..Default::default()
    };
    for &i in &s {
        let reach = t(i) + p;
        let q = tt.iter().copied().filter(|&k| k >= i && reach > *t(k - 1)).collect();
        out.q.insert(i, q);
    }
    for &i in &tt {
        let avail = t(i).min(d).clone() - t(i - 1).max(r).clone();
        match variant {
            SetVariant::UpperBound => {
                let pk: Vec<usize> = s
                    .iter()
                    .copied()
                    .filter(|&k| t(k - 1) <= t(i - 1) && *t(i - 1) < t(k) + p)
                    .collect();
                let star: Vec<usize> = pk
                    .iter()
                    .copied()
                    .filter(|&k| t(k - 1).max(r).clone() + p >= *t(i).min(d))
                    .collect();
                for &k in &pk {
                    let end = t(i).min(d).clone().min(t(k) + p);
                    let plus = end - t(i - 1).max(r).clone();
                    let minus = if k == i {
                        (t(k).min(d).clone() - &latest).max(Rational::zero())
                    } else if star.contains(&k) {
                        avail.clone()
                    } else {
                        (t(k - 1).max(r).clone() + p - t(i - 1)).max(Rational::zero())
                    };
                    out.mu_plus.insert((k, i), plus);
                    out.mu_minus.insert((k, i), minus);
                }
                out.p.insert(i, pk);
                out.p_star.insert(i, star);
            }
            SetVariant::LowerBound => {
                let pk: Vec<usize> = s
                    .iter()
                    .copied()
                    .filter(|&k| k <= i && t(k - 1) + p >= *t(i))
                    .collect();
                for &k in &pk {
                    out.mu_plus.insert((k, i), grid.len(i));
                    out.mu_minus.insert((k, i), grid.len(i));
                }
                out.p_star.insert(i, pk.clone());
                out.p.insert(i, pk);
            }
        }
    }
    out
}

pub fn interval_sets(inst: &Instance, grid: &Discretization, variant: SetVariant) -> IntervalSets {
    IntervalSets {
        variant,
        jobs: inst.jobs.iter().map(|j| job_sets(j, grid, variant)).collect(),
    }
}

/// Per-interval processing fractions `z_ai`, stored on `T_a` only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZVector {
    pub grid: Discretization,
    /// Arc id -> interval -> value.
    pub values: BTreeMap<String, BTreeMap<usize, Rational>>,
}

impl ZVector {
    pub fn get(&self, arc: &str, i: usize) -> Rational {
        self.values
            .get(arc)
            .and_then(|m| m.get(&i))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }
}

/// Length of `[start, start + p)` inside interval `i`.
pub fn overlap(grid: &Discretization, i: usize, start: &Rational, p: &Rational) -> Rational {
    let hi = grid.t(i).min(&(start + p)).clone();
    let lo = grid.t(i - 1).max(start).clone();
    (hi - lo).max(Rational::zero())
}

/// `xi_ai`: the share of interval `i` during which job `a` is processed.
pub fn induced_xi(inst: &Instance, grid: &Discretization, sched: &Schedule) -> Result<ZVector> {
    ensure_feasible(inst, sched)?;
    grid.check_for(inst)?;
    let mut values = BTreeMap::new();
    for job in &inst.jobs {
        let start = &sched.starts[&job.arc];
        let sets = job_sets(job, grid, SetVariant::UpperBound);
        let row = sets
            .t
            .iter()
            .map(|&i| (i, overlap(grid, i, start, &job.p) / grid.len(i)))
            .collect();
        values.insert(job.arc.clone(), row);
    }
    Ok(ZVector {
        grid: grid.clone(),
        values,
    })
}

/// Default start: `floor((r + d - p) / 2)`, raised to `r` if the floor falls
/// before the release date.
pub fn midpoint_schedule(inst: &Instance) -> Schedule {
    Schedule::from_pairs(inst.jobs.iter().map(|j| {
        let mid = ((&j.r + &j.d - &j.p) / Rational::from_int(2)).floor();
        (j.arc.clone(), mid.max(j.r.clone()))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulationKind {
    Ctip,
    Tdip,
    TdipLb,
}

/// A built model together with the variable maps needed to read it.
#[derive(Debug, Clone)]
pub struct Formulation {
    pub kind: FormulationKind,
    pub model: MilpModel,
    pub instance: Instance,
    /// Fixed grid of the time-discretized models.
    pub grid: Option<Discretization>,
    pub sets: Option<IntervalSets>,
    /// Number of intervals (`M` for CTIP, `n` otherwise).
    pub intervals: usize,
    /// Per job: start indicators (`y_ai` in TDIP, `z_ai` in CTIP).
    start_vars: Vec<BTreeMap<usize, usize>>,
    /// Per job: shut indicators (`z_ai` in TDIP, `w_ai` in CTIP).
    shut_vars: Vec<BTreeMap<usize, usize>>,
    /// CTIP breakpoints `t_1..t_{M-1}`.
    time_vars: Vec<usize>,
    /// `x[a][i - 1]`
    flow_vars: Vec<Vec<usize>>,
}

/// Linear expression `sum c_j x_j + constant`.
#[derive(Debug, Clone, Default)]
struct Expr {
    terms: Vec<(usize, Rational)>,
    constant: Rational,
}

impl Expr {
    fn scaled(mut self, c: &Rational) -> Expr {
        for (_, v) in &mut self.terms {
            *v *= c;
        }
        self.constant *= c;
        self
    }

    fn plus(mut self, other: Expr) -> Expr {
        self.terms.extend(other.terms);
        self.constant += other.constant;
        self
    }

    fn term(j: usize, c: Rational) -> Expr {
        Expr {
            terms: vec![(j, c)],
            constant: Rational::zero(),
        }
    }
}

fn constrain(m: &mut MilpModel, name: String, e: Expr, sense: Sense, rhs: Rational) {
    let rhs = rhs - e.constant;
    m.add_constraint(name, e.terms, sense, rhs);
}

/// The continuous-time model with `M = 2|A_1| + 1` variable-length intervals.
pub fn build_ctip(inst: &Instance) -> Result<Formulation> {
    ensure_valid(inst)?;
    let big_t = inst.horizon.clone();
    let m_int = 2 * inst.jobs.len() + 1;
    let mut m = MilpModel::new("ctip", ObjSense::Maximize);

    let time_vars = (1..m_int)
        .map(|i| m.add_nonneg(format!("t_{i}"), Some(big_t.clone()), "t"))
        .collect::<Result<Vec<_>>>()?;
    let tv = |i: usize| -> Expr {
        if i == 0 {
            Expr::default()
        } else if i == m_int {
            Expr {
                terms: Vec::new(),
                constant: big_t.clone(),
            }
        } else {
            Expr::term(time_vars[i - 1], Rational::one())
        }
    };
    let one = Rational::one;
    let len = |i: usize| tv(i).plus(tv(i - 1).scaled(&-one()));
    for i in 2..m_int {
        constrain(&mut m, format!("order_{i}"), len(i), Sense::Ge, Rational::zero());
    }

    let job_of_arc = inst.job_of_arc();
    let mut start_vars = Vec::new();
    let mut shut_vars = Vec::new();
    let mut shut_free = Vec::new();
    for job in &inst.jobs {
        let a = &job.arc;
        let (r, d, p) = (&job.r, &job.d, &job.p);
        let mut w = BTreeMap::new();
        let mut z = BTreeMap::new();
        let mut delta = Vec::new();
        let mut delta_bar = BTreeMap::new();
        for i in 1..=m_int {
            w.insert(i, m.add_binary(format!("w_{a}_{i}"), "w")?);
            z.insert(i, m.add_binary(format!("z_{a}_{i}"), "z")?);
            delta.push(m.add_nonneg(format!("delta_{a}_{i}"), None, "delta")?);
            delta_bar.insert(i, m.add_nonneg(format!("deltabar_{a}_{i}"), None, "delta")?);
        }
        for i in 1..=m_int {
            let (wi, zi, di, dbi) = (w[&i], z[&i], delta[i - 1], delta_bar[&i]);
            let e = tv(i - 1).plus(Expr::term(wi, -r.clone()));
            constrain(&mut m, format!("release_{a}_{i}"), e, Sense::Ge, Rational::zero());
            let e = tv(i).plus(Expr::term(wi, &big_t - d));
            constrain(&mut m, format!("deadline_{a}_{i}"), e, Sense::Le, big_t.clone());
            let mut terms = vec![(zi, one()), (wi, -one())];
            if i > 1 {
                terms.push((w[&(i - 1)], one()));
            }
            m.add_constraint(format!("onset_{a}_{i}"), terms, Sense::Ge, Rational::zero());
            let e = Expr {
                terms: vec![(di, one()), (dbi, one())],
                constant: Rational::zero(),
            }
            .plus(len(i).scaled(&-one()));
            constrain(&mut m, format!("split_{a}_{i}"), e, Sense::Eq, Rational::zero());
            m.add_constraint(format!("shut_{a}_{i}"), [(di, one()), (wi, -p.clone())], Sense::Le, Rational::zero());
            m.add_constraint(
                format!("open_{a}_{i}"),
                [(dbi, one()), (wi, &big_t - p)],
                Sense::Le,
                &big_t - p,
            );
        }
        m.add_constraint(format!("one_start_{a}"), z.values().map(|&j| (j, one())), Sense::Eq, one());
        m.add_constraint(format!("duration_{a}"), delta.iter().map(|&j| (j, one())), Sense::Eq, p.clone());
        start_vars.push(z);
        shut_vars.push(w);
        shut_free.push(delta_bar);
    }

    let flow = add_flow_block(&mut m, inst, m_int, |_, _| None)?;
    for (a, arc) in inst.network.arcs.iter().enumerate() {
        for i in 1..=m_int {
            let x = Expr::term(flow.x[a][i - 1], one());
            let cap = match job_of_arc[a] {
                Some(k) => Expr::term(shut_free[k][&i], arc.cap.clone()),
                None => len(i).scaled(&arc.cap),
            };
            let e = x.plus(cap.scaled(&-one()));
            constrain(&mut m, format!("cap_{}_{i}", arc.id), e, Sense::Le, Rational::zero());
        }
    }
    Ok(Formulation {
        kind: FormulationKind::Ctip,
        model: m,
        instance: inst.clone(),
        grid: None,
        sets: None,
        intervals: m_int,
        start_vars,
        shut_vars,
        time_vars,
        flow_vars: flow.x,
    })
}

fn build_discretized(inst: &Instance, grid: &Discretization, kind: FormulationKind) -> Result<Formulation> {
    ensure_valid(inst)?;
    grid.check_for(inst)?;
    let variant = match kind {
        FormulationKind::TdipLb => {
            if !is_conformal(inst, grid) {
                return Err(Error::Grid("the lower-bound model needs a conformal grid".into()));
            }
            SetVariant::LowerBound
        }
        _ => SetVariant::UpperBound,
    };
    let sets = interval_sets(inst, grid, variant);
    let n = grid.n();
    let name = if kind == FormulationKind::TdipLb { "tdip_lb" } else { "tdip" };
    let mut m = MilpModel::new(name, ObjSense::Maximize);
    let one = Rational::one;
    let job_of_arc = inst.job_of_arc();

    let flow = add_flow_block(&mut m, inst, n, |a, i| Some(grid.len(i) * &inst.network.arcs[a].cap))?;

    let mut start_vars = Vec::new();
    let mut shut_vars = Vec::new();
    for (job, js) in inst.jobs.iter().zip(&sets.jobs) {
        let a = &job.arc;
        if js.s.is_empty() {
            return Err(Error::Model(format!("job {a:?} cannot start in any interval")));
        }
        let y: BTreeMap<usize, usize> = js
            .s
            .iter()
            .map(|&i| Ok((i, m.add_binary(format!("y_{a}_{i}"), "y")?)))
            .collect::<Result<_>>()?;
        let mut z = BTreeMap::new();
        for &i in &js.t {
            let avail = grid.t(i).min(&job.d).clone() - grid.t(i - 1).max(&job.r).clone();
            let cap = avail.clone() / grid.len(i);
            let j = if kind == FormulationKind::TdipLb {
                let j = m.add_binary(format!("z_{a}_{i}"), "z")?;
                if cap < one() {
                    m.add_constraint(format!("zcap_{a}_{i}"), [(j, grid.len(i))], Sense::Le, avail);
                }
                j
            } else {
                m.add_nonneg(format!("z_{a}_{i}"), Some(cap.min(one())), "z")?
            };
            z.insert(i, j);
        }
        m.add_constraint(format!("one_start_{a}"), y.values().map(|&j| (j, one())), Sense::Eq, one());
        m.add_constraint(
            format!("duration_{a}"),
            js.t.iter().map(|&i| (z[&i], grid.len(i))),
            Sense::Eq,
            job.p.clone(),
        );
        for &i in &js.s {
            // the interval lengths are those of the covered intervals k
            let mut terms: Vec<(usize, Rational)> = js.q[&i].iter().map(|&k| (z[&k], grid.len(k))).collect();
            terms.push((y[&i], -job.p.clone()));
            m.add_constraint(format!("complete_{a}_{i}"), terms, Sense::Ge, Rational::zero());
        }
        for &i in &js.t {
            let pk = &js.p[&i];
            match variant {
                SetVariant::UpperBound => {
                    let mut lo = vec![(z[&i], grid.len(i))];
                    let mut hi = lo.clone();
                    for &k in pk {
                        lo.push((y[&k], -js.mu_minus[&(k, i)].clone()));
                        hi.push((y[&k], -js.mu_plus[&(k, i)].clone()));
                    }
                    m.add_constraint(format!("zlo_{a}_{i}"), lo, Sense::Ge, Rational::zero());
                    m.add_constraint(format!("zhi_{a}_{i}"), hi, Sense::Le, Rational::zero());
                }
                SetVariant::LowerBound => {
                    let mut terms = vec![(z[&i], one())];
                    terms.extend(pk.iter().map(|&k| (y[&k], -one())));
                    m.add_constraint(format!("zlink_{a}_{i}"), terms, Sense::Eq, Rational::zero());
                }
            }
        }
        start_vars.push(y);
        shut_vars.push(z);
    }
    for (a, arc) in inst.network.arcs.iter().enumerate() {
        if let Some(k) = job_of_arc[a] {
            for (&i, &z) in &shut_vars[k] {
                let c = grid.len(i) * &arc.cap;
                m.add_constraint(
                    format!("cap_{}_{i}", arc.id),
                    [(flow.x[a][i - 1], one()), (z, c.clone())],
                    Sense::Le,
                    c,
                );
            }
        }
    }
    Ok(Formulation {
        kind,
        model: m,
        instance: inst.clone(),
        grid: Some(grid.clone()),
        sets: Some(sets),
        intervals: n,
        start_vars,
        shut_vars,
        time_vars: Vec::new(),
        flow_vars: flow.x,
    })
}

/// Upper-bound model on any grid; `z` is continuous.
pub fn build_tdip(inst: &Instance, grid: &Discretization) -> Result<Formulation> {
    build_discretized(inst, grid, FormulationKind::Tdip)
}

/// Lower-bound model on a conformal grid; `z` is binary.
pub fn build_tdip_lb(inst: &Instance, grid: &Discretization) -> Result<Formulation> {
    build_discretized(inst, grid, FormulationKind::TdipLb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    Inbound,
    Outbound,
    Both,
}

/// Maintenance window of a node job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeJob {
    pub r: Rational,
    pub d: Rational,
    pub p: Rational,
}

#[derive(Debug, Clone)]
pub struct SplitNode {
    pub instance: Instance,
    /// Arcs carrying the node's job; two arcs must be processed simultaneously.
    pub job_arcs: Vec<String>,
}

/// Replaces `v` by a chain of nodes so a job on `v` becomes an arc job.
///
/// A plain node becomes `v' -> v''` with capacity `min(sum in, sum out)`. A
/// storage node becomes `v' -> v'' -> v'''`, where `v''` keeps the storage,
/// the first arc carries the inbound capacity and the second the outbound.
pub fn split_node(inst: &Instance, v: &str, mode: SplitMode, job: Option<NodeJob>) -> Result<SplitNode> {
    let net = &inst.network;
    if net.node_index(v).is_none() {
        return Err(Error::UnknownNode(v.to_string()));
    }
    if v == net.source || v == net.sink {
        return Err(Error::InvalidArgument(format!("cannot split the source or sink {v:?}")));
    }
    let cap_in: Rational = net.arcs.iter().filter(|a| a.head == v).map(|a| a.cap.clone()).sum();
    let cap_out: Rational = net.arcs.iter().filter(|a| a.tail == v).map(|a| a.cap.clone()).sum();
    let storage = net.storage.get(v).cloned();
    let first = format!("{v}'");
    let mid = format!("{v}''");
    let last = if storage.is_some() { format!("{v}'''") } else { mid.clone() };
    let mut out = inst.clone();
    let new_net = &mut out.network;
    let mut chain: Vec<Arc> = Vec::new();
    match &storage {
        None => chain.push(Arc {
            id: format!("{v}_node"),
            tail: first.clone(),
            head: mid.clone(),
            cap: cap_in.min(cap_out),
        }),
        Some(_) => {
            chain.push(Arc {
                id: format!("{v}_in"),
                tail: first.clone(),
                head: mid.clone(),
                cap: cap_in,
            });
            chain.push(Arc {
                id: format!("{v}_out"),
                tail: mid.clone(),
                head: last.clone(),
                cap: cap_out,
            });
        }
    }
    for name in [&first, &mid, &last] {
        if net.node_index(name).is_some() {
            return Err(Error::InvalidArgument(format!("node {name:?} already exists")));
        }
    }
    for a in &chain {
        if net.arc_index(&a.id).is_some() {
            return Err(Error::InvalidArgument(format!("arc {:?} already exists", a.id)));
        }
    }
    let pos = new_net.nodes.iter().position(|n| n == v).expect("checked above");
    new_net.nodes.remove(pos);
    let mut added = vec![first.clone(), mid.clone()];
    if storage.is_some() {
        added.push(last.clone());
    }
    for (k, name) in added.into_iter().enumerate() {
        new_net.nodes.insert(pos + k, name);
    }
    for a in &mut new_net.arcs {
        if a.head == v {
            a.head = first.clone();
        }
        if a.tail == v {
            a.tail = last.clone();
        }
    }
    if let Some(u) = new_net.storage.remove(v) {
        new_net.storage.insert(mid.clone(), u);
    }
    let job_arcs: Vec<String> = match (&storage, mode) {
        (None, _) => vec![chain[0].id.clone()],
        (Some(_), SplitMode::Inbound) => vec![chain[0].id.clone()],
        (Some(_), SplitMode::Outbound) => vec![chain[1].id.clone()],
        (Some(_), SplitMode::Both) => chain.iter().map(|a| a.id.clone()).collect(),
    };
    new_net.arcs.extend(chain);
    if let Some(j) = job {
        for a in &job_arcs {
            out.jobs.push(Job {
                arc: a.clone(),
                r: j.r.clone(),
                d: j.d.clone(),
                p: j.p.clone(),
            });
        }
    }
    ensure_valid(&out)?;
    Ok(SplitNode {
        instance: out,
        job_arcs,
    })
}

impl Formulation {
    fn job_index(&self, arc: &str) -> Result<usize> {
        self.instance
            .job_index(arc)
            .ok_or_else(|| Error::UnknownArc(arc.to_string()))
    }

    /// Shut indicator of job `arc` in interval `i`, if the model has one.
    pub fn shut_var(&self, arc: &str, i: usize) -> Option<usize> {
        let k = self.instance.job_index(arc)?;
        self.shut_vars[k].get(&i).copied()
    }

    pub fn start_var(&self, arc: &str, i: usize) -> Option<usize> {
        let k = self.instance.job_index(arc)?;
        self.start_vars[k].get(&i).copied()
    }

    pub fn flow_var(&self, arc: &str, i: usize) -> Option<usize> {
        let a = self.instance.network.arc_index(arc)?;
        self.flow_vars[a].get(i.checked_sub(1)?).copied()
    }

    /// Breakpoint values `t_0..t_M` of a CTIP assignment.
    pub fn breakpoints(&self, x: &[Rational]) -> Result<Vec<Rational>> {
        if self.kind != FormulationKind::Ctip {
            return Err(Error::Unsupported("breakpoints are variables only in CTIP".into()));
        }
        let mut pts = vec![Rational::zero()];
        pts.extend(self.time_vars.iter().map(|&j| x[j].clone()));
        pts.push(self.instance.horizon.clone());
        Ok(pts)
    }

    /// Start times encoded in an integral assignment.
    ///
    /// CTIP: the earliest `t_{i-1}` with `w_ai = 1`. TDIP-LB: `t_{i-1}` for the
    /// interval with `y_ai = 1`. The upper-bound model does not determine
    /// start times.
    pub fn schedule_from(&self, x: &[Rational]) -> Result<Schedule> {
        let one = Rational::one();
        let mut starts = Vec::new();
        match self.kind {
            FormulationKind::Ctip => {
                let pts = self.breakpoints(x)?;
                for (job, w) in self.instance.jobs.iter().zip(&self.shut_vars) {
                    let t = w
                        .iter()
                        .filter(|(_, &j)| x[j] == one)
                        .map(|(&i, _)| pts[i - 1].clone())
                        .min()
                        .ok_or_else(|| Error::Model(format!("job {:?} is never shut", job.arc)))?;
                    starts.push((job.arc.clone(), t));
                }
            }
            FormulationKind::TdipLb => {
                let grid = self.grid.as_ref().expect("discretized model");
                for (job, y) in self.instance.jobs.iter().zip(&self.start_vars) {
                    let (&i, _) = y
                        .iter()
                        .find(|(_, &j)| x[j] == one)
                        .ok_or_else(|| Error::Model(format!("job {:?} has no start", job.arc)))?;
                    starts.push((job.arc.clone(), grid.t(i - 1).clone()));
                }
            }
            FormulationKind::Tdip => {
                return Err(Error::Unsupported(
                    "the upper-bound model does not fix start times".into(),
                ))
            }
        }
        let sched = Schedule::from_pairs(starts);
        ensure_feasible(&self.instance, &sched)?;
        Ok(sched)
    }

    pub fn extract_schedule(&self, result: &MilpResult) -> Result<Schedule> {
        let x = result.assignment.as_ref().ok_or(Error::NoIncumbent)?;
        self.schedule_from(x)
    }

    /// `z` values of an assignment, clipped to `[0, 1]`.
    pub fn extract_zvector(&self, x: &[Rational]) -> Result<ZVector> {
        let grid = self
            .grid
            .clone()
            .ok_or_else(|| Error::Unsupported("CTIP has no fixed grid".into()))?;
        if x.len() != self.model.vars().len() {
            return Err(Error::InvalidArgument(format!(
                "assignment has {} values, model has {} variables",
                x.len(),
                self.model.vars().len()
            )));
        }
        let values = self
            .instance
            .jobs
            .iter()
            .zip(&self.shut_vars)
            .map(|(job, z)| {
                let row = z
                    .iter()
                    .map(|(&i, &j)| (i, x[j].clone().max(Rational::zero()).min(Rational::one())))
                    .collect();
                (job.arc.clone(), row)
            })
            .collect();
        Ok(ZVector { grid, values })
    }

    /// Values of the start-pattern variables that encode `sched`.
    ///
    /// The result covers every binary; flows are left to the LP completion in
    /// [`milp::warm_start`].
    pub fn start_values(&self, sched: &Schedule) -> Result<HashMap<String, Rational>> {
        ensure_feasible(&self.instance, sched)?;
        let vars = self.model.vars();
        let mut out = HashMap::new();
        let mut set = |j: usize, v: Rational| {
            out.insert(vars[j].name.clone(), v);
        };
        let zero = Rational::zero;
        let one = Rational::one;
        match self.kind {
            FormulationKind::Ctip => {
                let (grid, outages) = crate::timegrid::induced_grid(&self.instance, sched)?;
                let mut pts = grid.points().to_vec();
                pts.resize(self.intervals + 1, self.instance.horizon.clone());
                for (i, &j) in self.time_vars.iter().enumerate() {
                    set(j, pts[i + 1].clone());
                }
                for (k, job) in self.instance.jobs.iter().enumerate() {
                    let down = &outages[&job.arc];
                    let first = down.iter().min().copied();
                    for i in 1..=self.intervals {
                        let shut = down.contains(&i);
                        set(self.shut_vars[k][&i], if shut { one() } else { zero() });
                        set(self.start_vars[k][&i], if first == Some(i) { one() } else { zero() });
                        let len = &pts[i] - &pts[i - 1];
                        let (d, db) = if shut { (len, zero()) } else { (zero(), len) };
                        set(self.model.var_index(&format!("delta_{}_{i}", job.arc)).expect("built"), d);
                        set(self.model.var_index(&format!("deltabar_{}_{i}", job.arc)).expect("built"), db);
                    }
                }
            }
            FormulationKind::Tdip | FormulationKind::TdipLb => {
                let grid = self.grid.as_ref().expect("discretized model");
                let xi = induced_xi(&self.instance, grid, sched)?;
                for (k, job) in self.instance.jobs.iter().enumerate() {
                    let t = &sched.starts[&job.arc];
                    let (lo, hi) = (grid.t(0), grid.horizon());
                    let start_iv = (1..=grid.n())
                        .find(|&i| grid.t(i - 1) <= t && (t < grid.t(i) || (t == hi && i == grid.n())))
                        .filter(|_| t >= lo);
                    if self.kind == FormulationKind::TdipLb && !grid.contains(t) {
                        return Err(Error::RejectedStart(vec![format!(
                            "start {t} of job {:?} is not a grid point",
                            job.arc
                        )]));
                    }
                    for (&i, &j) in &self.start_vars[k] {
                        set(j, if Some(i) == start_iv { one() } else { zero() });
                    }
                    for (&i, &j) in &self.shut_vars[k] {
                        set(j, xi.get(&job.arc, i));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Validated warm start encoding `sched`.
    pub fn warm_start(&self, sched: &Schedule) -> Result<WarmStart> {
        milp::warm_start(&self.model, &self.start_values(sched)?)
    }

    /// Job on `before` must finish before the job on `after` starts.
    pub fn add_precedence(&mut self, before: &str, after: &str) -> Result<()> {
        if before == after {
            return Err(Error::InvalidArgument(format!("job {before:?} cannot precede itself")));
        }
        let (a, b) = (self.job_index(before)?, self.job_index(after)?);
        let one = Rational::one;
        match self.kind {
            FormulationKind::Ctip => {
                for i in 1..=self.intervals {
                    for j in 1..=i {
                        self.model.add_constraint(
                            format!("prec_{before}_{after}_{i}_{j}"),
                            [(self.shut_vars[a][&i], one()), (self.shut_vars[b][&j], one())],
                            Sense::Le,
                            one(),
                        );
                    }
                }
            }
            FormulationKind::Tdip | FormulationKind::TdipLb => {
                let grid = self.grid.as_ref().expect("discretized model");
                let p = &self.instance.jobs[a].p;
                for &i in self.start_vars[a].keys() {
                    let limit = grid.t(i - 1) + p;
                    let mut terms: Vec<(usize, Rational)> =
                        self.start_vars[a].range(i..).map(|(_, &j)| (j, one())).collect();
                    terms.extend(
                        self.start_vars[b]
                            .iter()
                            .filter(|(&k, _)| *grid.t(k) <= limit)
                            .map(|(_, &j)| (j, one())),
                    );
                    self.model
                        .add_constraint(format!("prec_{before}_{after}_{i}"), terms, Sense::Le, one());
                }
            }
        }
        Ok(())
    }

    /// At most `limit` jobs of `arcs` in progress in any interval.
    pub fn add_incompatibility(&mut self, arcs: &[&str], limit: usize) -> Result<()> {
        if arcs.len() < 2 {
            return Err(Error::InvalidArgument("an incompatible set needs at least two jobs".into()));
        }
        let ks = arcs.iter().map(|a| self.job_index(a)).collect::<Result<Vec<_>>>()?;
        let tag = arcs.join("_");
        for i in 1..=self.intervals {
            let terms: Vec<(usize, Rational)> = ks
                .iter()
                .filter_map(|&k| self.shut_vars[k].get(&i).map(|&j| (j, Rational::one())))
                .collect();
            if terms.len() > limit {
                self.model.add_constraint(
                    format!("incompat_{tag}_{i}"),
                    terms,
                    Sense::Le,
                    Rational::from(limit),
                );
            }
        }
        Ok(())
    }

    /// Jobs on `a` and `b` are processed at the same time.
    pub fn add_simultaneous(&mut self, a: &str, b: &str) -> Result<()> {
        let (ka, kb) = (self.job_index(a)?, self.job_index(b)?);
        let one = Rational::one;
        for i in 1..=self.intervals {
            let terms = match (self.shut_vars[ka].get(&i), self.shut_vars[kb].get(&i)) {
                (None, None) => continue,
                (Some(&x), None) | (None, Some(&x)) => vec![(x, one())],
                (Some(&x), Some(&y)) => vec![(x, one()), (y, -one())],
            };
            self.model
                .add_constraint(format!("simul_{a}_{b}_{i}"), terms, Sense::Eq, Rational::zero());
        }
        Ok(())
    }

    /// Fixes the binaries and breakpoints of a CTIP model to the pattern of
    /// `sched`, leaving an LP over the flows.
    pub fn fixed_to(&self, sched: &Schedule) -> Result<MilpModel> {
        let vals = self.start_values(sched)?;
        let mut m = self.model.clone();
        for (name, v) in vals {
            let j = m.var_index(&name).expect("own variable");
            let keep = self.kind == FormulationKind::Ctip || m.vars()[j].kind == VarKind::Binary;
            if keep {
                m.set_bounds(j, Some(v.clone()), Some(v));
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::schedule_value;
    use crate::instance::load_instance;
    use crate::milp::{solve_lp, solve_milp, SolveOptions, Status};
    use crate::rational::{q, qi};
    use crate::timegrid::{release_deadline_grid, unit_grid};

    fn data(name: &str) -> Instance {
        load_instance(format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    fn grid(pts: &[i64]) -> Discretization {
        Discretization::new(pts.iter().map(|&p| qi(p)).collect()).unwrap()
    }

    #[test]
    fn sets_on_fig1() {
        let inst = data("fig1.json");
        let sets = interval_sets(&inst, &grid(&[0, 1, 3]), SetVariant::UpperBound);
        let a = &sets.jobs[0];
        assert_eq!(a.s, vec![1, 2]);
        assert_eq!(a.t, vec![1, 2]);
        assert_eq!(a.q[&1], vec![1, 2]);
        let b = &sets.jobs[1];
        assert_eq!(b.s, vec![1]);
        assert_eq!(b.t, vec![1]);
    }

    #[test]
    fn one_interval_window() {
        let mut inst = data("fig1.json");
        inst.jobs.truncate(1);
        inst.jobs[0] = Job {
            arc: "a".into(),
            r: qi(1),
            d: qi(3),
            p: qi(2),
        };
        let js = job_sets(&inst.jobs[0], &grid(&[0, 1, 3]), SetVariant::UpperBound);
        assert_eq!(js.s, vec![2]);
        assert_eq!(js.t, vec![2]);
        assert_eq!(js.q[&2], vec![2]);
        assert_eq!(js.p[&2], vec![2]);
    }

    #[test]
    fn set_invariants_hold() {
        let inst = data("example1.json");
        for g in [unit_grid(&inst).unwrap(), release_deadline_grid(&inst), grid(&[0, 3, 5, 6, 7])] {
            for v in [SetVariant::UpperBound, SetVariant::LowerBound] {
                for js in interval_sets(&inst, &g, v).jobs {
                    assert!(js.s.iter().all(|i| js.t.contains(i)));
                    for (i, q) in &js.q {
                        assert_eq!(q.first(), Some(i));
                        assert!(q.iter().all(|k| js.t.contains(k)));
                    }
                    for (i, p) in &js.p {
                        assert!(js.p_star[i].iter().all(|k| p.contains(k)));
                        assert!(p.iter().all(|k| js.s.contains(k)));
                        for k in p {
                            let (lo, hi) = (&js.mu_minus[&(*k, *i)], &js.mu_plus[&(*k, *i)]);
                            assert!(lo <= hi && *hi <= g.len(*i), "{k} {i} {lo} {hi}");
                        }
                    }
                }
            }
        }
    }

    fn solve(f: &Formulation) -> MilpResult {
        let r = solve_milp(&f.model, &SolveOptions::default());
        assert_eq!(r.status, Status::Optimal);
        r
    }

    #[test]
    fn ctip_fig1() {
        let inst = data("fig1.json");
        let f = build_ctip(&inst).unwrap();
        let r = solve(&f);
        assert_eq!(r.objective, Some(qi(1)));
        let s = f.extract_schedule(&r).unwrap();
        assert_eq!(s.starts["a"], qi(0));
        assert_eq!(schedule_value(&inst, &s).unwrap(), qi(1));

        let inst = data("fig1_storage.json");
        let f = build_ctip(&inst).unwrap();
        let r = solve(&f);
        assert_eq!(r.objective, Some(qi(2)));
        let s = f.extract_schedule(&r).unwrap();
        assert_eq!(s.starts["a"], qi(1));
        assert_eq!(schedule_value(&inst, &s).unwrap(), qi(2));
    }

    #[test]
    fn ctip_linearization_matches_evaluator() {
        let inst = data("fig1_storage.json");
        let f = build_ctip(&inst).unwrap();
        for t in [qi(0), q(1, 3), q(1, 2), qi(1)] {
            let s = Schedule::from_vector(&inst, &[t, qi(0)]);
            let lp = solve_lp(&f.fixed_to(&s).unwrap());
            assert_eq!(lp.objective.unwrap(), schedule_value(&inst, &s).unwrap());
        }
    }

    #[test]
    fn midpoint_start_accepted() {
        let inst = data("fig1_storage.json");
        let mid = midpoint_schedule(&inst);
        assert_eq!(mid.starts["a"], qi(0));
        assert_eq!(mid.starts["b"], qi(0));
        let f = build_ctip(&inst).unwrap();
        let ws = f.warm_start(&mid).unwrap();
        assert_eq!(f.model.objective_value(ws.assignment()), qi(1));
        let g = build_tdip(&inst, &release_deadline_grid(&inst)).unwrap();
        g.warm_start(&mid).unwrap();
    }

    #[test]
    fn all_zero_start_rejected() {
        let inst = data("fig1.json");
        let f = build_tdip(&inst, &release_deadline_grid(&inst)).unwrap();
        let zeros: HashMap<String, Rational> = f
            .model
            .binaries()
            .into_iter()
            .map(|j| (f.model.vars()[j].name.clone(), qi(0)))
            .collect();
        match milp::warm_start(&f.model, &zeros) {
            Err(Error::RejectedStart(v)) => assert!(v.iter().any(|s| s.starts_with("one_start_a"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tdip_bounds_on_small_cases() {
        let inst = data("fig1_storage.json");
        let f = build_tdip(&inst, &grid(&[0, 1, 3])).unwrap();
        let r = solve(&f);
        assert!(r.objective.clone().unwrap() >= qi(2));
        assert!(r.root_bound.unwrap() >= r.objective.unwrap());

        let inst = data("example1.json");
        let f = build_tdip(&inst, &grid(&[0, 3, 5, 6, 7])).unwrap();
        let r = solve(&f);
        assert!(r.objective.unwrap() >= qi(16));
    }

    #[test]
    fn job_blocking_only_path() {
        let mut inst = data("fig1.json");
        inst.network.arcs.retain(|a| a.id == "a");
        inst.network.arcs[0].head = "t".into();
        inst.network.nodes.retain(|v| v != "v");
        inst.jobs = vec![Job {
            arc: "a".into(),
            r: qi(0),
            d: qi(3),
            p: qi(3),
        }];
        let f = build_tdip(&inst, &release_deadline_grid(&inst)).unwrap();
        assert_eq!(solve(&f).objective, Some(qi(0)));
    }

    #[test]
    fn tdip_lb_examples() {
        let inst = data("fig1.json");
        let f = build_tdip_lb(&inst, &unit_grid(&inst).unwrap()).unwrap();
        let r = solve(&f);
        assert_eq!(r.objective, Some(qi(1)));
        let s = f.extract_schedule(&r).unwrap();
        assert_eq!(s.as_vector(&inst), vec![qi(0), qi(0)]);
        assert!(matches!(build_tdip_lb(&inst, &grid(&[0, 1, 3])), Err(Error::Grid(_))));

        let inst = data("example1.json");
        let f = build_tdip_lb(&inst, &unit_grid(&inst).unwrap()).unwrap();
        let r = solve(&f);
        let best = [0, 1, 2]
            .iter()
            .map(|&t| schedule_value(&inst, &Schedule::from_vector(&inst, &[qi(t), qi(3), qi(0), qi(0)])).unwrap())
            .max()
            .unwrap();
        assert_eq!(best, qi(15));
        assert_eq!(r.objective, Some(best));
        let s = f.extract_schedule(&r).unwrap();
        assert_eq!(schedule_value(&inst, &s).unwrap(), qi(15));
    }

    #[test]
    fn zvector_extraction() {
        let inst = data("fig1.json");
        let f = build_tdip_lb(&inst, &unit_grid(&inst).unwrap()).unwrap();
        let r = solve(&f);
        let z = f.extract_zvector(r.assignment.as_ref().unwrap()).unwrap();
        assert_eq!(z.values["a"].values().cloned().collect::<Vec<_>>(), vec![qi(1), qi(1), qi(0)]);
        assert_eq!(z.get("b", 1), qi(1));
        let mut empty = inst.clone();
        empty.jobs.clear();
        let f = build_tdip(&empty, &unit_grid(&empty).unwrap()).unwrap();
        let r = solve(&f);
        assert!(f.extract_zvector(r.assignment.as_ref().unwrap()).unwrap().values.is_empty());
    }

    #[test]
    fn induced_xi_examples() {
        let inst = data("fig1.json");
        let g = unit_grid(&inst).unwrap();
        let xi = induced_xi(&inst, &g, &Schedule::from_vector(&inst, &[q(1, 2), qi(0)])).unwrap();
        assert_eq!(xi.values["a"].values().cloned().collect::<Vec<_>>(), vec![q(1, 2), qi(1), q(1, 2)]);
        let xi = induced_xi(&inst, &g, &Schedule::from_vector(&inst, &[qi(1), qi(0)])).unwrap();
        assert_eq!(xi.get("a", 3), qi(1));
    }

    #[test]
    fn precedence_fig1_infeasible() {
        let inst = data("fig1.json");
        let mut f = build_ctip(&inst).unwrap();
        f.add_precedence("a", "b").unwrap();
        assert_eq!(solve_milp(&f.model, &SolveOptions::default()).status, Status::Infeasible);
        assert!(f.add_precedence("a", "a").is_err());
        // b first is possible
        let mut f = build_ctip(&inst).unwrap();
        f.add_precedence("b", "a").unwrap();
        let r = solve(&f);
        assert_eq!(r.objective, Some(qi(0)));
    }

    #[test]
    fn vacuous_precedence_in_tdip() {
        let mut inst = data("fig1.json");
        inst.jobs[0].r = qi(1);
        let g = unit_grid(&inst).unwrap();
        let base = solve(&build_tdip(&inst, &g).unwrap()).objective;
        let mut f = build_tdip(&inst, &g).unwrap();
        f.add_precedence("b", "a").unwrap();
        assert_eq!(solve(&f).objective, base);
    }

    #[test]
    fn incompatible_jobs() {
        let inst = data("fig1.json");
        let mut f = build_ctip(&inst).unwrap();
        f.add_incompatibility(&["a", "b"], 1).unwrap();
        assert_eq!(solve(&f).objective, Some(qi(0)));
        let inst = data("fig1_storage.json");
        let mut f = build_ctip(&inst).unwrap();
        f.add_incompatibility(&["a", "b"], 1).unwrap();
        assert_eq!(solve(&f).objective, Some(qi(2)));
        let mut f = build_ctip(&inst).unwrap();
        f.add_incompatibility(&["a", "b"], 2).unwrap();
        assert_eq!(solve(&f).objective, Some(qi(2)));
        assert!(f.add_incompatibility(&["a"], 1).is_err());
    }

    #[test]
    fn splitting_nodes() {
        let inst = data("fig1.json");
        let split = split_node(&inst, "v", SplitMode::Both, None).unwrap();
        let arc = split.instance.network.arc("v_node").unwrap();
        assert_eq!(arc.cap, qi(1));
        assert!(split_node(&inst, "s", SplitMode::Both, None).is_err());

        let inst = data("fig1_storage.json");
        let split = split_node(&inst, "v", SplitMode::Inbound, None).unwrap();
        assert_eq!(split.instance.network.storage["v''"], qi(2));
        for t in [qi(0), q(1, 2), qi(1)] {
            let s = Schedule::from_vector(&inst, &[t, qi(0)]);
            assert_eq!(
                schedule_value(&inst, &s).unwrap(),
                schedule_value(&split.instance, &s).unwrap()
            );
        }
    }

    #[test]
    fn simultaneous_node_job() {
        let mut inst = data("fig1_storage.json");
        inst.jobs.clear();
        let job = NodeJob {
            r: qi(0),
            d: qi(3),
            p: qi(1),
        };
        let split = split_node(&inst, "v", SplitMode::Both, Some(job)).unwrap();
        assert_eq!(split.job_arcs, vec!["v_in".to_string(), "v_out".to_string()]);
        let mut f = build_ctip(&split.instance).unwrap();
        f.add_simultaneous("v_in", "v_out").unwrap();
        let r = solve(&f);
        let s = f.extract_schedule(&r).unwrap();
        assert_eq!(s.starts["v_in"], s.starts["v_out"]);
        // v blocked for one unit: b delivers during the other two
        assert_eq!(r.objective, Some(qi(2)));
    }
}
