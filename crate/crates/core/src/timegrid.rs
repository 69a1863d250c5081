//! Time discretizations: schedule-induced breakpoints, the release/deadline
//! grid, the unit grid and conformal closure.
//!
//! Intervals are 1-based: interval `i` is `[t_{i-1}, t_i)` for `i = 1..=n`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{ensure_feasible, Instance, Schedule};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Rational>", into = "Vec<Rational>")]
pub struct Discretization {
    points: Vec<Rational>,
}

impl TryFrom<Vec<Rational>> for Discretization {
    type Error = Error;
    fn try_from(points: Vec<Rational>) -> Result<Self> {
        Discretization::new(points)
    }
}

impl From<Discretization> for Vec<Rational> {
    fn from(d: Discretization) -> Self {
        d.points
    }
}

impl Discretization {
    /// Requires at least two strictly increasing points starting at 0.
    pub fn new(points: Vec<Rational>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Grid("need at least two points".into()));
        }
        if !points[0].is_zero() {
            return Err(Error::Grid(format!("first point is {}, not 0", points[0])));
        }
        if let Some(w) = points.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Grid(format!(
                "points not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Discretization { points })
    }

    /// Sorts and deduplicates `points` together with `0` and `horizon`.
    pub fn from_unsorted(points: impl IntoIterator<Item = Rational>, horizon: &Rational) -> Self {
        let mut set: BTreeSet<Rational> = points.into_iter().collect();
        set.insert(Rational::zero());
        set.insert(horizon.clone());
        Discretization {
            points: set.into_iter().collect(),
        }
    }

    pub fn points(&self) -> &[Rational] {
        &self.points
    }

    /// Number of intervals.
    pub fn n(&self) -> usize {
        self.points.len() - 1
    }

    /// Breakpoint `t_i`, `0 <= i <= n`.
    pub fn t(&self, i: usize) -> &Rational {
        &self.points[i]
    }

    /// Length of interval `i`, `1 <= i <= n`.
    pub fn len(&self, i: usize) -> Rational {
        &self.points[i] - &self.points[i - 1]
    }

    pub fn horizon(&self) -> &Rational {
        self.points.last().expect("grid has points")
    }

    pub fn contains(&self, t: &Rational) -> bool {
        self.points.binary_search(t).is_ok()
    }

    /// Index `i` with `t_i == t`.
    pub fn index_of(&self, t: &Rational) -> Option<usize> {
        self.points.binary_search(t).ok()
    }

    pub fn check_for(&self, inst: &Instance) -> Result<()> {
        if *self.horizon() != inst.horizon {
            return Err(Error::Grid(format!(
                "grid ends at {} but the horizon is {}",
                self.horizon(),
                inst.horizon
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Interval index sets `I_a` during which each job arc is shut.
pub type OutageMap = BTreeMap<String, Vec<usize>>;

/// Outage intervals of a job starting at `start`: `{ i : start < t_i <= start + p }`.
pub fn outage_intervals(grid: &Discretization, start: &Rational, p: &Rational) -> Vec<usize> {
    let end = start + p;
    (1..=grid.n())
        .filter(|&i| grid.t(i) > start && *grid.t(i) <= end)
        .collect()
}

/// Breakpoints induced by a schedule (start and end times plus `0, T`,
/// duplicates collapsed) and the resulting outage map.
pub fn induced_grid(inst: &Instance, sched: &Schedule) -> Result<(Discretization, OutageMap)> {
    ensure_feasible(inst, sched)?;
    let mut pts = Vec::new();
    for j in &inst.jobs {
        let t = &sched.starts[&j.arc];
        pts.push(t.clone());
        pts.push(t + &j.p);
    }
    let grid = Discretization::from_unsorted(pts, &inst.horizon);
    let outages = inst
        .jobs
        .iter()
        .map(|j| {
            let t = &sched.starts[&j.arc];
            (j.arc.clone(), outage_intervals(&grid, t, &j.p))
        })
        .collect();
    Ok((grid, outages))
}

/// Grid on `{r_a} ∪ {d_a} ∪ {0, T}`.
pub fn release_deadline_grid(inst: &Instance) -> Discretization {
    let pts = inst
        .jobs
        .iter()
        .flat_map(|j| [j.r.clone(), j.d.clone()]);
    Discretization::from_unsorted(pts, &inst.horizon)
}

/// Grid `0, 1, ..., T`; the horizon must be an integer.
pub fn unit_grid(inst: &Instance) -> Result<Discretization> {
    let t = inst
        .horizon
        .to_i64()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Grid(format!("horizon {} is not a positive integer", inst.horizon)))?;
    Ok(Discretization {
        points: (0..=t).map(Rational::from_int).collect(),
    })
}

fn images(inst: &Instance, t: &Rational, mut f: impl FnMut(Rational)) {
    for j in &inst.jobs {
        if *t >= j.r && *t <= j.latest_start() {
            f(t + &j.p);
        }
        if *t >= &j.r + &j.p && *t <= j.d {
            f(t - &j.p);
        }
    }
}

/// Conformality: all release dates and deadlines are grid points, and the
/// grid is closed under `+p_a` on `[r_a, d_a - p_a]` and `-p_a` on
/// `[r_a + p_a, d_a]`.
pub fn is_conformal(inst: &Instance, grid: &Discretization) -> bool {
    if inst
        .jobs
        .iter()
        .any(|j| !grid.contains(&j.r) || !grid.contains(&j.d))
    {
        return false;
    }
    let mut ok = true;
    for t in grid.points() {
        images(inst, t, |u| ok &= grid.contains(&u));
        if !ok {
            return false;
        }
    }
    true
}

/// Smallest conformal grid containing `seed` and the release/deadline grid.
///
/// Fails if more than `max_points` breakpoints would be needed.
pub fn conformal_closure(
    inst: &Instance,
    seed: &Discretization,
    max_points: usize,
) -> Result<Discretization> {
    let mut set: BTreeSet<Rational> = seed.points().iter().cloned().collect();
    set.extend(release_deadline_grid(inst).points().iter().cloned());
    let mut work: Vec<Rational> = set.iter().cloned().collect();
    while let Some(t) = work.pop() {
        let mut fresh = Vec::new();
        images(inst, &t, |u| {
            if !set.contains(&u) {
                fresh.push(u);
            }
        });
        for u in fresh {
            if set.insert(u.clone()) {
                if set.len() > max_points {
                    return Err(Error::Grid(format!(
                        "conformal closure needs more than {max_points} points"
                    )));
                }
                work.push(u);
            }
        }
    }
    if set.len() > max_points {
        return Err(Error::Grid(format!(
            "conformal closure needs more than {max_points} points"
        )));
    }
    Discretization::new(set.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn fig1() -> Instance {
        Instance::from_json_str(include_str!("../../../data/fig1.json")).unwrap()
    }

    fn example1() -> Instance {
        Instance::from_json_str(include_str!("../../../data/example1.json")).unwrap()
    }

    fn grid(pts: &[Rational]) -> Discretization {
        Discretization::new(pts.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_points() {
        assert!(Discretization::new(vec![qi(0)]).is_err());
        assert!(Discretization::new(vec![qi(1), qi(2)]).is_err());
        assert!(Discretization::new(vec![qi(0), qi(2), qi(2)]).is_err());
    }

    #[test]
    fn induced_grid_fractional_start() {
        let inst = fig1();
        let th = q(1, 3);
        let s = Schedule::from_pairs([("a", th.clone()), ("b", qi(0))]);
        let (g, out) = induced_grid(&inst, &s).unwrap();
        assert_eq!(g.points(), &[qi(0), th.clone(), qi(1), &th + qi(2), qi(3)]);
        assert_eq!(out["a"], vec![2, 3]);
        assert_eq!(out["b"], vec![1, 2]);
    }

    #[test]
    fn induced_grid_collapses_duplicates() {
        let inst = fig1();
        let s = Schedule::from_pairs([("a", qi(1)), ("b", qi(0))]);
        let (g, out) = induced_grid(&inst, &s).unwrap();
        assert_eq!(g.points(), &[qi(0), qi(1), qi(3)]);
        assert_eq!(out["a"], vec![2]);
        assert_eq!(out["b"], vec![1]);
    }

    #[test]
    fn induced_grid_example1() {
        let inst = example1();
        let s = Schedule::from_pairs([("a", q(3, 2)), ("b", qi(3)), ("c", qi(0)), ("d", qi(0))]);
        let (g, out) = induced_grid(&inst, &s).unwrap();
        assert_eq!(
            g.points(),
            &[qi(0), q(3, 2), qi(3), q(9, 2), qi(5), qi(6), qi(7)]
        );
        for j in &inst.jobs {
            let dur: Rational = out[&j.arc].iter().map(|&i| g.len(i)).sum();
            assert_eq!(dur, j.p);
        }
    }

    #[test]
    fn induced_grid_rejects_infeasible() {
        let s = Schedule::from_pairs([("a", qi(2)), ("b", qi(0))]);
        assert!(induced_grid(&fig1(), &s).is_err());
    }

    #[test]
    fn rd_grids() {
        assert_eq!(release_deadline_grid(&fig1()).points(), &[qi(0), qi(1), qi(3)]);
        assert_eq!(
            release_deadline_grid(&example1()).points(),
            &[qi(0), qi(3), qi(5), qi(6), qi(7)]
        );
        let mut inst = fig1();
        inst.jobs[1].d = qi(3);
        assert_eq!(release_deadline_grid(&inst).points(), &[qi(0), qi(3)]);
    }

    #[test]
    fn unit_grids() {
        assert_eq!(unit_grid(&fig1()).unwrap().points(), &[qi(0), qi(1), qi(2), qi(3)]);
        assert_eq!(unit_grid(&example1()).unwrap().n(), 7);
        let mut inst = fig1();
        inst.horizon = q(7, 2);
        assert!(unit_grid(&inst).is_err());
    }

    #[test]
    fn conformality() {
        let inst = fig1();
        assert!(is_conformal(&inst, &unit_grid(&inst).unwrap()));
        assert!(is_conformal(&example1(), &unit_grid(&example1()).unwrap()));
        assert!(!is_conformal(&inst, &grid(&[qi(0), qi(1), qi(3)])));
        assert!(is_conformal(&inst, &grid(&[qi(0), qi(1), qi(2), qi(3)])));
    }

    #[test]
    fn closure_examples() {
        let inst = fig1();
        let c = conformal_closure(&inst, &grid(&[qi(0), qi(1), qi(3)]), 100).unwrap();
        assert_eq!(c.points(), &[qi(0), qi(1), qi(2), qi(3)]);
        let u = unit_grid(&example1()).unwrap();
        assert_eq!(conformal_closure(&example1(), &u, 8).unwrap(), u);
    }

    #[test]
    fn closure_budget_exhaustion() {
        let mut inst = fig1();
        inst.horizon = qi(1);
        inst.jobs = vec![
            crate::Job { arc: "a".into(), r: qi(0), d: qi(1), p: q(1, 3) },
            crate::Job { arc: "b".into(), r: qi(0), d: qi(1), p: q(1, 2) },
        ];
        let seed = grid(&[qi(0), qi(1)]);
        assert!(conformal_closure(&inst, &seed, 5).is_err());
        let c = conformal_closure(&inst, &seed, 100).unwrap();
        assert!(is_conformal(&inst, &c));
    }

    #[test]
    fn serde_as_array() {
        let g = grid(&[qi(0), q(1, 2), qi(3)]);
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"["0","1/2","3"]"#);
        let back: Discretization = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Discretization>(r#"["1","2"]"#).is_err());
    }
}
