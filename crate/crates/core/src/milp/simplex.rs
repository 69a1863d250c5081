//! Dense bounded-variable simplex over exact rationals.
//!
//! Every column has a finite lower bound; model variables without one are
//! negated or split. Rows are kept as `B^-1 [A | b]`. The primal method uses
//! Dantzig pricing, the dual method an approximate steepest-edge rule priced
//! in floating point. Both switch to Bland's rule for the rest of a solve once
//! a run of degenerate pivots is seen, which rules out cycling. The dual
//! method re-optimizes after bound changes (branching).

use std::time::Instant;

use super::{MilpModel, ObjSense, Sense};
use crate::rational::Rational;

const DEGENERATE_STREAK: usize = 50;
const NONBASIC: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Interrupted,
}

/// Columns representing one model variable.
#[derive(Debug, Clone, Copy)]
pub(super) enum ColMap {
    Direct(usize),
    Negated(usize),
    Split(usize, usize),
}

#[derive(Debug, Clone)]
pub(super) struct Tableau {
    m: usize,
    n: usize,
    rows: Vec<Vec<Rational>>,
    d: Vec<Rational>,
    cost: Vec<Rational>,
    pub lo: Vec<Rational>,
    pub up: Vec<Option<Rational>>,
    pub x: Vec<Rational>,
    pub basis: Vec<usize>,
    row_of: Vec<usize>,
    art_start: usize,
    /// Keep every column current, including fixed nonbasic ones.
    full_updates: bool,
}

/// Basis description sufficient to rebuild a tableau from the root.
#[derive(Debug, Clone)]
pub(super) struct BasisState {
    pub basis: Vec<usize>,
    pub at_upper: Vec<usize>,
}

fn expired(deadline: Option<Instant>) -> bool {
    deadline.is_some_and(|d| Instant::now() >= d)
}

impl Tableau {
    /// Builds the phase-1 tableau. Returns the tableau and the column map of
    /// each model variable. The internal objective is always maximized.
    pub fn build(model: &MilpModel) -> (Tableau, Vec<ColMap>) {
        let mut lo = Vec::new();
        let mut up = Vec::new();
        let mut maps = Vec::with_capacity(model.vars().len());
        for v in model.vars() {
            let map = match (&v.lower, &v.upper) {
                (Some(l), u) => {
                    lo.push(l.clone());
                    up.push(u.clone());
                    ColMap::Direct(lo.len() - 1)
                }
                (None, Some(u)) => {
                    lo.push(-u);
                    up.push(None);
                    ColMap::Negated(lo.len() - 1)
                }
                (None, None) => {
                    lo.push(Rational::zero());
                    up.push(None);
                    lo.push(Rational::zero());
                    up.push(None);
                    ColMap::Split(lo.len() - 2, lo.len() - 1)
                }
            };
            maps.push(map);
        }
        let ns = lo.len();
        let m = model.constraints().len();

        let scatter = |terms: &[(usize, Rational)], out: &mut Vec<Rational>| {
            for (k, c) in terms {
                match maps[*k] {
                    ColMap::Direct(j) => out[j] += c,
                    ColMap::Negated(j) => out[j] -= c,
                    ColMap::Split(a, b) => {
                        out[a] += c;
                        out[b] -= c;
                    }
                }
            }
        };

        let mut struct_rows = Vec::with_capacity(m);
        let mut needs_art = Vec::with_capacity(m);
        let mut slack_val = Vec::with_capacity(m);
        for con in model.constraints() {
            let mut row = vec![Rational::zero(); ns];
            scatter(&con.coeffs, &mut row);
            let activity: Rational = row
                .iter()
                .zip(&lo)
                .filter(|(a, _)| !a.is_zero())
                .map(|(a, l)| a * l)
                .sum();
            let resid = &con.rhs - &activity;
            let sigma_neg = con.sense == Sense::Ge;
            let s = if sigma_neg { -&resid } else { resid.clone() };
            let ok = match con.sense {
                Sense::Eq => s.is_zero(),
                _ => !s.is_negative(),
            };
            needs_art.push(if ok { None } else { Some(resid) });
            slack_val.push(s);
            struct_rows.push(row);
        }
        let n_art = needs_art.iter().filter(|a| a.is_some()).count();
        let art_start = ns + m;
        let n = art_start + n_art;

        for con in model.constraints() {
            lo.push(Rational::zero());
            up.push(if con.sense == Sense::Eq {
                Some(Rational::zero())
            } else {
                None
            });
        }
        for _ in 0..n_art {
            lo.push(Rational::zero());
            up.push(None);
        }

        let mut x: Vec<Rational> = lo.clone();
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut next_art = art_start;
        for (i, con) in model.constraints().iter().enumerate() {
            let mut row = std::mem::take(&mut struct_rows[i]);
            row.resize(n + 1, Rational::zero());
            let sigma = if con.sense == Sense::Ge {
                -Rational::one()
            } else {
                Rational::one()
            };
            row[ns + i] = sigma.clone();
            row[n] = con.rhs.clone();
            match &needs_art[i] {
                None => {
                    if sigma.is_negative() {
                        row.iter_mut().for_each(|v| *v = -&*v);
                    }
                    x[ns + i] = slack_val[i].clone();
                    basis.push(ns + i);
                }
                Some(resid) => {
                    let neg = resid.is_negative();
                    row[next_art] = Rational::one();
                    if neg {
                        // row scaled by -1 so the artificial has coefficient +1
                        row.iter_mut().for_each(|v| *v = -&*v);
                        row[next_art] = Rational::one();
                    }
                    x[next_art] = resid.abs();
                    basis.push(next_art);
                    next_art += 1;
                }
            }
            rows.push(row);
        }

        let sign = match model.obj_sense() {
            ObjSense::Maximize => Rational::one(),
            ObjSense::Minimize => -Rational::one(),
        };
        let mut cost = vec![Rational::zero(); n];
        let signed: Vec<(usize, Rational)> = model
            .objective()
            .iter()
            .map(|(k, c)| (*k, c * &sign))
            .collect();
        scatter(&signed, &mut cost);

        let mut row_of = vec![NONBASIC; n];
        for (r, &b) in basis.iter().enumerate() {
            row_of[b] = r;
        }
        let t = Tableau {
            m,
            n,
            rows,
            d: vec![Rational::zero(); n],
            cost,
            lo,
            up,
            x,
            basis,
            row_of,
            art_start,
            full_updates: false,
        };
        (t, maps)
    }

    /// Runs phase 1 and phase 2 from a freshly built tableau.
    pub fn solve(&mut self, deadline: Option<Instant>) -> LpStatus {
        if self.art_start < self.n {
            let mut c1 = vec![Rational::zero(); self.n];
            for c in &mut c1[self.art_start..] {
                *c = -Rational::one();
            }
            self.compute_d(&c1);
            match self.primal(deadline) {
                LpStatus::Optimal => {}
                other => return other,
            }
            if self.x[self.art_start..].iter().any(|v| !v.is_zero()) {
                return LpStatus::Infeasible;
            }
            self.drive_out_artificials();
            for j in self.art_start..self.n {
                self.up[j] = Some(Rational::zero());
            }
        }
        let cost = self.cost.clone();
        self.compute_d(&cost);
        self.primal(deadline)
    }

    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if self.basis[r] < self.art_start {
                continue;
            }
            let q = (0..self.art_start)
                .find(|&j| self.row_of[j] == NONBASIC && !self.is_fixed(j) && !self.rows[r][j].is_zero());
            if let Some(q) = q {
                // the artificial is at zero, so values do not move
                self.pivot(r, q);
            }
        }
    }

    fn compute_d(&mut self, cost: &[Rational]) {
        let mut d = cost.to_vec();
        for r in 0..self.m {
            let cb = &cost[self.basis[r]];
            if cb.is_zero() {
                continue;
            }
            for (j, a) in self.rows[r][..self.n].iter().enumerate() {
                if !a.is_zero() {
                    d[j] -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            d[b] = Rational::zero();
        }
        self.d = d;
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.up[j].as_ref() == Some(&self.lo[j])
    }

    fn entering(&self, bland: bool) -> Option<(usize, bool)> {
        let mut best: Option<(usize, bool)> = None;
        let mut best_mag = Rational::zero();
        for j in 0..self.n {
            if self.row_of[j] != NONBASIC || self.is_fixed(j) {
                continue;
            }
            let dj = &self.d[j];
            let increase = if self.x[j] == self.lo[j] && dj.is_positive() {
                true
            } else if self.up[j].as_ref() == Some(&self.x[j]) && dj.is_negative() {
                false
            } else {
                continue;
            };
            if bland {
                return Some((j, increase));
            }
            let mag = dj.abs();
            if best.is_none() || mag > best_mag {
                best = Some((j, increase));
                best_mag = mag;
            }
        }
        best
    }

    fn update_values(&mut self, q: usize, delta: &Rational) {
        if delta.is_zero() {
            return;
        }
        self.x[q] += delta;
        for r in 0..self.m {
            let a = &self.rows[r][q];
            if !a.is_zero() {
                let b = self.basis[r];
                let change = a * delta;
                self.x[b] -= change;
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let inv = self.rows[r][q].recip();
        let mut prow = std::mem::take(&mut self.rows[r]);
        // fixed nonbasic columns never enter again, so their entries go stale
        let nz: Vec<usize> = (0..=self.n)
            .filter(|&j| {
                !prow[j].is_zero()
                    && (self.full_updates
                        || j == self.n
                        || j == q
                        || self.row_of[j] != NONBASIC
                        || !self.is_fixed(j))
            })
            .collect();
        for &j in &nz {
            prow[j] *= &inv;
        }
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[q].clone();
            if f.is_zero() {
                continue;
            }
            for &j in &nz {
                let t = &f * &prow[j];
                row[j] -= t;
            }
        }
        let f = self.d[q].clone();
        if !f.is_zero() {
            for &j in &nz {
                if j < self.n {
                    let t = &f * &prow[j];
                    self.d[j] -= t;
                }
            }
        }
        self.rows[r] = prow;
        self.row_of[self.basis[r]] = NONBASIC;
        self.basis[r] = q;
        self.row_of[q] = r;
    }

    fn primal(&mut self, deadline: Option<Instant>) -> LpStatus {
        let mut streak = 0usize;
        let mut bland = false;
        let mut iter = 0u64;
        loop {
            iter += 1;
            if iter.is_multiple_of(32) && expired(deadline) {
                return LpStatus::Interrupted;
            }
            let Some((q, increase)) = self.entering(bland) else {
                return LpStatus::Optimal;
            };
            // (theta, leaving row); None row means a bound flip
            let mut best: Option<(Rational, Option<usize>)> = self.up[q]
                .as_ref()
                .map(|u| (u - &self.lo[q], None));
            for r in 0..self.m {
                let a = &self.rows[r][q];
                if a.is_zero() {
                    continue;
                }
                let b = self.basis[r];
                let decreases = a.is_positive() == increase;
                let lim = if decreases {
                    Some((&self.x[b] - &self.lo[b]) / a.abs())
                } else {
                    self.up[b].as_ref().map(|u| (u - &self.x[b]) / a.abs())
                };
                let Some(lim) = lim else { continue };
                let better = match &best {
                    None => true,
                    Some((t, row)) => {
                        lim < *t
                            || (lim == *t
                                && matches!(row, Some(r0) if self.basis[r] < self.basis[*r0]))
                    }
                };
                if better {
                    best = Some((lim, Some(r)));
                }
            }
            let Some((theta, leave)) = best else {
                return LpStatus::Unbounded;
            };
            if theta.is_zero() {
                streak += 1;
                if streak > DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                streak = 0;
            }
            let delta = if increase { theta } else { -theta };
            match leave {
                None => {
                    self.update_values(q, &delta);
                    // snap exactly onto the opposite bound
                    self.x[q] = if increase {
                        self.up[q].clone().expect("flip needs a finite upper bound")
                    } else {
                        self.lo[q].clone()
                    };
                }
                Some(r) => {
                    let b = self.basis[r];
                    let a_pos = self.rows[r][q].is_positive();
                    self.update_values(q, &delta);
                    let decreases = a_pos == increase;
                    self.x[b] = if decreases {
                        self.lo[b].clone()
                    } else {
                        self.up[b].clone().expect("leaving at a finite upper bound")
                    };
                    self.pivot(r, q);
                }
            }
        }
    }

    /// Dual simplex from a dual-feasible basis.
    pub fn dual(&mut self, deadline: Option<Instant>) -> LpStatus {
        let mut streak = 0usize;
        let mut bland = false;
        let mut iter = 0u64;
        loop {
            iter += 1;
            if iter.is_multiple_of(32) && expired(deadline) {
                return LpStatus::Interrupted;
            }
            let mut leave: Option<(usize, Rational, bool)> = None;
            let mut worst = 0f64;
            for r in 0..self.m {
                let b = self.basis[r];
                let (viol, target, increase) = if self.x[b] < self.lo[b] {
                    (&self.lo[b] - &self.x[b], self.lo[b].clone(), true)
                } else if let Some(u) = self.up[b].as_ref().filter(|u| self.x[b] > **u) {
                    (&self.x[b] - u, u.clone(), false)
                } else {
                    continue;
                };
                if bland {
                    if leave.as_ref().is_none_or(|(r0, _, _)| b < self.basis[*r0]) {
                        leave = Some((r, target, increase));
                    }
                    continue;
                }
                // approximate dual steepest edge, priced in floating point only
                let norm: f64 = 1.0
                    + self.rows[r][..self.n]
                        .iter()
                        .enumerate()
                        .filter(|(j, a)| {
                            !a.is_zero() && self.row_of[*j] == NONBASIC && !self.is_fixed(*j)
                        })
                        .map(|(_, a)| a.to_f64().powi(2))
                        .sum::<f64>();
                let score = viol.to_f64().powi(2) / norm;
                if leave.is_none() || score > worst {
                    worst = score;
                    leave = Some((r, target, increase));
                }
            }
            let Some((r, target, increase)) = leave else {
                return LpStatus::Optimal;
            };
            let mut enter: Option<(usize, Rational)> = None;
            let mut enter_mag = Rational::zero();
            for j in 0..self.n {
                if self.row_of[j] != NONBASIC || self.is_fixed(j) {
                    continue;
                }
                let a = &self.rows[r][j];
                if a.is_zero() {
                    continue;
                }
                let at_lo = self.x[j] == self.lo[j];
                // moving j in its feasible direction changes x_b by -a*dir
                let raises_b = if at_lo { a.is_negative() } else { a.is_positive() };
                if raises_b != increase {
                    continue;
                }
                let mag = a.abs();
                let ratio = self.d[j].abs() / &mag;
                let take = match &enter {
                    None => true,
                    Some((_, best)) => ratio < *best || (!bland && ratio == *best && mag > enter_mag),
                };
                if take {
                    enter = Some((j, ratio));
                    enter_mag = mag;
                }
            }
            let Some((q, ratio)) = enter else {
                return LpStatus::Infeasible;
            };
            if ratio.is_zero() {
                streak += 1;
                if streak > DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                streak = 0;
            }
            let b = self.basis[r];
            let delta = (&self.x[b] - &target) / &self.rows[r][q];
            self.update_values(q, &delta);
            self.x[b] = target;
            self.pivot(r, q);
        }
    }

    /// Re-optimizes after bound changes on columns: fixes nonbasic values
    /// onto the new bounds, then runs the dual and (defensively) primal
    /// method.
    pub fn reoptimize(&mut self, deadline: Option<Instant>) -> LpStatus {
        match self.dual(deadline) {
            LpStatus::Optimal => self.primal(deadline),
            other => other,
        }
    }

    /// Changes the bounds of column `j`, keeping basic values consistent.
    pub fn set_bounds(&mut self, j: usize, lo: Rational, up: Option<Rational>) {
        self.lo[j] = lo;
        self.up[j] = up;
        if self.row_of[j] == NONBASIC {
            let target = if self.x[j] < self.lo[j] {
                self.lo[j].clone()
            } else if let Some(u) = self.up[j].as_ref().filter(|u| self.x[j] > **u) {
                u.clone()
            } else if self.x[j] == self.lo[j] || self.up[j].as_ref() == Some(&self.x[j]) {
                return;
            } else {
                self.lo[j].clone()
            };
            let delta = &target - &self.x[j];
            self.update_values(j, &delta);
            self.x[j] = target;
        }
    }

    /// Nonbasic columns among `cols` whose reduced cost shows that leaving
    /// their current bound loses at least `slack`, paired with that bound.
    pub fn fixable(&self, cols: &[usize], slack: &Rational) -> Vec<(usize, Rational)> {
        let mut out = Vec::new();
        for &j in cols {
            if self.row_of[j] != NONBASIC || self.is_fixed(j) {
                continue;
            }
            let dj = &self.d[j];
            if self.x[j] == self.lo[j] && -dj >= *slack {
                out.push((j, self.lo[j].clone()));
            } else if self.up[j].as_ref() == Some(&self.x[j]) && *dj >= *slack {
                out.push((j, self.x[j].clone()));
            }
        }
        out
    }

    pub fn objective(&self) -> Rational {
        self.cost
            .iter()
            .zip(&self.x)
            .filter(|(c, _)| !c.is_zero())
            .map(|(c, x)| c * x)
            .sum()
    }

    pub fn values(&self, maps: &[ColMap]) -> Vec<Rational> {
        maps.iter()
            .map(|m| match *m {
                ColMap::Direct(j) => self.x[j].clone(),
                ColMap::Negated(j) => -&self.x[j],
                ColMap::Split(a, b) => &self.x[a] - &self.x[b],
            })
            .collect()
    }

    pub fn entries(&self) -> usize {
        self.m * (self.n + 1)
    }

    pub fn basis_state(&self) -> BasisState {
        BasisState {
            basis: self.basis.clone(),
            at_upper: (0..self.n)
                .filter(|&j| {
                    self.row_of[j] == NONBASIC
                        && !self.is_fixed(j)
                        && self.up[j].as_ref() == Some(&self.x[j])
                })
                .collect(),
        }
    }

    /// Rebuilds the optimal tableau described by `state` from this (root)
    /// tableau, whose bounds must already match the node's bounds.
    pub fn rebase(&mut self, state: &BasisState) {
        let mut wanted = vec![false; self.n];
        for &b in &state.basis {
            wanted[b] = true;
        }
        self.full_updates = true;
        for &q in &state.basis {
            if self.row_of[q] != NONBASIC {
                continue;
            }
            let r = (0..self.m)
                .find(|&r| !wanted[self.basis[r]] && !self.rows[r][q].is_zero())
                .expect("stored basis is nonsingular");
            self.pivot(r, q);
        }
        self.full_updates = false;
        let mut upper = vec![false; self.n];
        for &j in &state.at_upper {
            upper[j] = true;
        }
        for j in 0..self.n {
            if self.row_of[j] == NONBASIC {
                self.x[j] = if upper[j] {
                    self.up[j].clone().expect("at upper needs a finite bound")
                } else {
                    self.lo[j].clone()
                };
            }
        }
        for r in 0..self.m {
            let row = &self.rows[r];
            let mut v = row[self.n].clone();
            for j in 0..self.n {
                if self.row_of[j] == NONBASIC && !row[j].is_zero() && !self.x[j].is_zero() {
                    v -= &row[j] * &self.x[j];
                }
            }
            self.x[self.basis[r]] = v;
        }
        let cost = self.cost.clone();
        self.compute_d(&cost);
    }
}
