//! Exact solving without storage: candidate start sets, exhaustive search
//! over their product, a brute-force grid oracle, and the closure/free-set
//! machinery used to shift whole job components.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluator::{schedule_value, static_max_flow};
use crate::instance::{ensure_feasible, ensure_valid, Instance, Schedule};
use crate::rational::Rational;
use crate::timegrid::{induced_grid, Discretization};

pub const DEFAULT_BUDGET: u128 = 1_000_000;

/// Sorted candidate start times per job arc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSets {
    pub sets: BTreeMap<String, Vec<Rational>>,
}

impl CandidateSets {
    pub fn get(&self, arc: &str) -> Option<&[Rational]> {
        self.sets.get(arc).map(Vec::as_slice)
    }

    /// Number of start tuples in the product of all sets.
    pub fn product_size(&self) -> u128 {
        self.sets
            .values()
            .fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128))
    }
}

/// `S_k(a)` for every job, with `S_0(a) = {r_a, d_a - p_a}`.
pub fn candidate_sets_k(inst: &Instance, k: usize) -> CandidateSets {
    let mut cur: Vec<BTreeSet<Rational>> = inst
        .jobs
        .iter()
        .map(|j| [j.r.clone(), j.latest_start()].into_iter().collect())
        .collect();
    for _ in 0..k {
        let mut next = cur.clone();
        for (a, ja) in inst.jobs.iter().enumerate() {
            let (lo, hi) = (&ja.r, ja.latest_start());
            for (b, jb) in inst.jobs.iter().enumerate() {
                if a == b {
                    continue;
                }
                for t in &cur[b] {
                    let tp = t + &jb.p;
                    for c in [t.clone(), t - &ja.p, &tp - &ja.p, tp.clone()] {
                        if c >= *lo && c <= hi {
                            next[a].insert(c);
                        }
                    }
                }
            }
        }
        if next == cur {
            break;
        }
        cur = next;
    }
    CandidateSets {
        sets: inst
            .jobs
            .iter()
            .zip(cur)
            .map(|(j, s)| (j.arc.clone(), s.into_iter().collect()))
            .collect(),
    }
}

/// `S(a) = S_{|A_1|-1}(a)`.
pub fn candidate_sets(inst: &Instance) -> CandidateSets {
    candidate_sets_k(inst, inst.jobs.len().saturating_sub(1))
}

/// Decodes a mixed-radix index into per-job positions, first job most
/// significant, so index order is lexicographic order of start vectors.
fn decode(mut idx: u128, radix: &[usize], out: &mut [usize]) {
    for k in (0..radix.len()).rev() {
        out[k] = (idx % radix[k] as u128) as usize;
        idx /= radix[k] as u128;
    }
}

/// Best start vector over a product of per-job lists; ties go to the
/// lexicographically smallest vector.
fn search_product<F, S>(
    lists: &[Vec<Rational>],
    budget: u128,
    init: impl Fn() -> S + Sync + Send,
    eval: F,
) -> Result<(Vec<Rational>, Rational)>
where
    F: Fn(&mut S, &[Rational]) -> Result<Rational> + Sync + Send,
{
    let radix: Vec<usize> = lists.iter().map(Vec::len).collect();
    let total = radix.iter().fold(1u128, |acc, &r| acc.saturating_mul(r as u128));
    if total > budget {
        return Err(Error::Budget {
            needed: total,
            budget,
        });
    }
    if total == 0 {
        return Err(Error::InvalidArgument("empty candidate set".into()));
    }
    let total = total as u64;
    let chunk = 256u64;
    let best = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map_init(
            || (init(), vec![0usize; radix.len()], Vec::with_capacity(radix.len())),
            |(state, pos, starts), c| -> Result<Option<(Rational, u64)>> {
                let mut best: Option<(Rational, u64)> = None;
                for idx in c * chunk..((c + 1) * chunk).min(total) {
                    decode(idx as u128, &radix, pos);
                    starts.clear();
                    starts.extend(pos.iter().zip(lists).map(|(&p, l)| l[p].clone()));
                    let v = eval(state, starts)?;
                    if best.as_ref().is_none_or(|(b, _)| v > *b) {
                        best = Some((v, idx));
                    }
                }
                Ok(best)
            },
        )
        .try_reduce(
            || None,
            |x, y| {
                Ok(match (x, y) {
                    (None, b) | (b, None) => b,
                    (Some(a), Some(b)) => {
                        if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                            Some(b)
                        } else {
                            Some(a)
                        }
                    }
                })
            },
        )?;
    let (value, idx) = best.expect("nonempty product");
    let mut pos = vec![0; radix.len()];
    decode(idx as u128, &radix, &mut pos);
    Ok((pos.iter().zip(lists).map(|(&p, l)| l[p].clone()).collect(), value))
}

/// `Σ (t_i - t_{i-1}) F_i` for a storage-free instance, memoizing the
/// interval max flows `F_i` by the set of shut jobs.
struct Decomposed<'a> {
    inst: &'a Instance,
    job_arc: Vec<usize>,
    memo: HashMap<u64, Rational>,
}

impl Decomposed<'_> {
    fn value(&mut self, starts: &[Rational]) -> Result<Rational> {
        let jobs = &self.inst.jobs;
        let mut pts: Vec<Rational> = vec![Rational::zero(), self.inst.horizon.clone()];
        for (j, t) in jobs.iter().zip(starts) {
            pts.push(t.clone());
            pts.push(t + &j.p);
        }
        pts.sort();
        pts.dedup();
        let mut total = Rational::zero();
        for w in pts.windows(2) {
            let (lo, hi) = (&w[0], &w[1]);
            let mut mask = 0u64;
            for (k, (j, t)) in jobs.iter().zip(starts).enumerate() {
                if t <= lo && *hi <= t + &j.p {
                    mask |= 1 << k;
                }
            }
            let f = match self.memo.get(&mask) {
                Some(f) => f.clone(),
                None => {
                    let mut avail = vec![true; self.inst.network.arcs.len()];
                    for (k, &a) in self.job_arc.iter().enumerate() {
                        if mask & (1 << k) != 0 {
                            avail[a] = false;
                        }
                    }
                    let f = static_max_flow(self.inst, &avail)?;
                    self.memo.insert(mask, f.clone());
                    f
                }
            };
            total += (hi - lo) * f;
        }
        Ok(total)
    }
}

/// Optimal schedule of a storage-free instance by enumerating the
/// candidate product, with the default budget.
pub fn exact_search_no_storage(inst: &Instance) -> Result<(Schedule, Rational)> {
    exact_search_no_storage_with_budget(inst, DEFAULT_BUDGET)
}

pub fn exact_search_no_storage_with_budget(inst: &Instance, budget: u128) -> Result<(Schedule, Rational)> {
    ensure_valid(inst)?;
    if inst.network.has_storage() {
        return Err(Error::Unsupported(
            "exact search requires an instance without storage nodes".into(),
        ));
    }
    if inst.jobs.len() > 64 {
        return Err(Error::Unsupported("exact search supports at most 64 jobs".into()));
    }
    let cands = candidate_sets(inst);
    let lists: Vec<Vec<Rational>> = inst.jobs.iter().map(|j| cands.sets[&j.arc].clone()).collect();
    let job_arc: Vec<usize> = inst
        .jobs
        .iter()
        .map(|j| inst.network.arc_index(&j.arc).ok_or_else(|| Error::UnknownArc(j.arc.clone())))
        .collect::<Result<_>>()?;
    let (starts, value) = search_product(
        &lists,
        budget,
        || Decomposed {
            inst,
            job_arc: job_arc.clone(),
            memo: HashMap::new(),
        },
        |d, starts| d.value(starts),
    )?;
    Ok((Schedule::from_vector(inst, &starts), value))
}

/// Best schedule with every start on `r_a + m * step` inside its window,
/// found by evaluating the whole product. Works with storage; the value is
/// always a lower bound on the optimum.
pub fn grid_oracle(inst: &Instance, step: &Rational, budget: u128) -> Result<(Schedule, Rational)> {
    ensure_valid(inst)?;
    if !step.is_positive() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let mut lists = Vec::with_capacity(inst.jobs.len());
    for j in &inst.jobs {
        let hi = j.latest_start();
        let count = ((&hi - &j.r) / step).floor().to_i64().unwrap_or(i64::MAX);
        if count as u128 + 1 > budget {
            return Err(Error::Budget {
                needed: count as u128 + 1,
                budget,
            });
        }
        lists.push((0..=count).map(|m| &j.r + step * Rational::from_int(m)).collect());
    }
    let (starts, value) = search_product(&lists, budget, || (), |_, starts| {
        schedule_value(inst, &Schedule::from_vector(inst, starts))
    })?;
    Ok((Schedule::from_vector(inst, &starts), value))
}

/// Jobs joined when their start/end point sets intersect.
#[derive(Debug, Clone)]
pub struct SolutionGraph {
    /// Job arcs, in job order.
    pub arcs: Vec<String>,
    pub adj: Vec<BTreeSet<usize>>,
    /// Connected components as sorted job indices, ordered by smallest member.
    pub components: Vec<Vec<usize>>,
}

impl SolutionGraph {
    pub fn new(inst: &Instance, sched: &Schedule) -> Result<Self> {
        ensure_feasible(inst, sched)?;
        let ends: Vec<[Rational; 2]> = inst
            .jobs
            .iter()
            .map(|j| {
                let t = sched.starts[&j.arc].clone();
                let e = &t + &j.p;
                [t, e]
            })
            .collect();
        let n = ends.len();
        let mut adj = vec![BTreeSet::new(); n];
        for a in 0..n {
            for b in a + 1..n {
                if ends[a].iter().any(|x| ends[b].contains(x)) {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
        }
        let mut comp = vec![usize::MAX; n];
        let mut components = Vec::new();
        for a in 0..n {
            if comp[a] != usize::MAX {
                continue;
            }
            let id = components.len();
            let mut members = Vec::new();
            let mut stack = vec![a];
            comp[a] = id;
            while let Some(v) = stack.pop() {
                members.push(v);
                for &w in &adj[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = id;
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        Ok(SolutionGraph {
            arcs: inst.jobs.iter().map(|j| j.arc.clone()).collect(),
            adj,
            components,
        })
    }

    /// Component `C(a)` of a job arc.
    pub fn component_of(&self, arc: &str) -> Option<&[usize]> {
        let k = self.arcs.iter().position(|a| a == arc)?;
        self.components.iter().find(|c| c.contains(&k)).map(Vec::as_slice)
    }

    /// Path length `h(a, b)`; `None` when unconnected.
    pub fn distance(&self, a: &str, b: &str) -> Option<usize> {
        let s = self.arcs.iter().position(|x| x == a)?;
        let t = self.arcs.iter().position(|x| x == b)?;
        let mut dist = vec![usize::MAX; self.arcs.len()];
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            if v == t {
                return Some(dist[v]);
            }
            for &w in &self.adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        None
    }
}

/// A minimal nonempty closed index set of the induced breakpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedSet {
    pub arcs: BTreeSet<String>,
    /// Indices into the induced breakpoints, ascending.
    pub indices: Vec<usize>,
    pub times: Vec<Rational>,
    /// No job in the set starts at `r_a` or `d_a - p_a`.
    pub free: bool,
}

#[derive(Debug, Clone)]
pub struct ClosureReport {
    pub graph: SolutionGraph,
    pub grid: Discretization,
    pub sets: Vec<ClosedSet>,
}

/// `cl(T)`: start and end times of every job touching `T`.
pub fn closure(inst: &Instance, sched: &Schedule, times: &BTreeSet<Rational>) -> BTreeSet<Rational> {
    let mut out = BTreeSet::new();
    for j in &inst.jobs {
        let Some(t) = sched.starts.get(&j.arc) else { continue };
        let e = t + &j.p;
        if times.contains(t) || times.contains(&e) {
            out.insert(t.clone());
            out.insert(e);
        }
    }
    out
}

/// Closed sets generated by each job (iterating the closure to a fixpoint)
/// and whether each is free. Every closed set is a union of these.
pub fn closure_and_freedom(inst: &Instance, sched: &Schedule) -> Result<ClosureReport> {
    let graph = SolutionGraph::new(inst, sched)?;
    let (grid, _) = induced_grid(inst, sched)?;
    let mut sets: Vec<ClosedSet> = Vec::new();
    for j in &inst.jobs {
        let t = &sched.starts[&j.arc];
        if sets.iter().any(|s| s.arcs.contains(&j.arc)) {
            continue;
        }
        let mut times: BTreeSet<Rational> = [t.clone(), t + &j.p].into_iter().collect();
        loop {
            let next = closure(inst, sched, &times);
            if next == times {
                break;
            }
            times = next;
        }
        let members: Vec<_> = inst
            .jobs
            .iter()
            .filter(|k| times.contains(&sched.starts[&k.arc]))
            .collect();
        let free = members
            .iter()
            .all(|k| sched.starts[&k.arc] != k.r && sched.starts[&k.arc] != k.latest_start());
        sets.push(ClosedSet {
            arcs: members.iter().map(|k| k.arc.clone()).collect(),
            indices: times.iter().map(|x| grid.index_of(x).expect("induced breakpoint")).collect(),
            times: times.into_iter().collect(),
            free,
        });
    }
    Ok(ClosureReport { graph, grid, sets })
}

/// Largest `ε` keeping every breakpoint of the closed set generated by
/// `arcs` between its untouched neighbours.
pub fn interval_shift_bound(inst: &Instance, sched: &Schedule, arcs: &BTreeSet<String>) -> Result<Rational> {
    let (grid, _) = induced_grid(inst, sched)?;
    let idx = closed_indices(inst, sched, arcs, &grid)?;
    let mut bound: Option<Rational> = None;
    for &i in &idx {
        if i > 0 && !idx.contains(&(i - 1)) {
            let gap = grid.len(i);
            bound = Some(bound.map_or(gap.clone(), |b| b.min(gap)));
        }
        if i < grid.n() && !idx.contains(&(i + 1)) {
            let gap = grid.len(i + 1);
            bound = Some(bound.map_or(gap.clone(), |b| b.min(gap)));
        }
    }
    Ok(bound.unwrap_or_else(Rational::zero))
}

/// Largest `ε` for which shifting `arcs` by `±ε` stays within the interval
/// bound and every job window.
pub fn max_shift(inst: &Instance, sched: &Schedule, arcs: &BTreeSet<String>) -> Result<Rational> {
    let mut bound = interval_shift_bound(inst, sched, arcs)?;
    for j in inst.jobs.iter().filter(|j| arcs.contains(&j.arc)) {
        let t = &sched.starts[&j.arc];
        bound = bound.min(t - &j.r).min(j.latest_start() - t);
    }
    Ok(bound)
}

fn closed_indices(
    inst: &Instance,
    sched: &Schedule,
    arcs: &BTreeSet<String>,
    grid: &Discretization,
) -> Result<BTreeSet<usize>> {
    let mut times = BTreeSet::new();
    for a in arcs {
        let j = inst.job(a).ok_or_else(|| Error::UnknownArc(a.clone()))?;
        let t = &sched.starts[a];
        times.insert(t.clone());
        times.insert(t + &j.p);
    }
    if closure(inst, sched, &times) != times {
        return Err(Error::InvalidArgument(format!(
            "jobs {:?} do not form a closed set",
            arcs.iter().collect::<Vec<_>>()
        )));
    }
    Ok(times.iter().map(|x| grid.index_of(x).expect("induced breakpoint")).collect())
}

/// Moves every job of a closed set by `eps`, leaving the others in place.
///
/// Errors when the jobs do not form a closed set, when `|eps|` exceeds the
/// interval bound, or when a shifted job leaves its window.
pub fn shift_schedule(
    inst: &Instance,
    sched: &Schedule,
    arcs: &BTreeSet<String>,
    eps: &Rational,
) -> Result<Schedule> {
    if eps.is_zero() {
        ensure_feasible(inst, sched)?;
        return Ok(sched.clone());
    }
    let bound = interval_shift_bound(inst, sched, arcs)?;
    if eps.abs() > bound {
        return Err(Error::InvalidArgument(format!(
            "shift {eps} exceeds the interval bound {bound}"
        )));
    }
    let mut out = sched.clone();
    for a in arcs {
        let t = out.starts.get_mut(a).expect("checked job arc");
        *t += eps;
    }
    ensure_feasible(inst, &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::load_instance;
    use crate::rational::{q, qi};

    fn data(name: &str) -> Instance {
        load_instance(format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    fn sched(pairs: &[(&str, Rational)]) -> Schedule {
        Schedule::from_pairs(pairs.iter().map(|(a, t)| (*a, t.clone())))
    }

    #[test]
    fn fig1_candidates() {
        let c = candidate_sets(&data("fig1.json"));
        assert_eq!(c.get("a").unwrap(), &[qi(0), qi(1)]);
        assert_eq!(c.get("b").unwrap(), &[qi(0)]);
    }

    #[test]
    fn candidates_are_monotone() {
        let inst = data("example1.json");
        let mut prev = candidate_sets_k(&inst, 0);
        for k in 1..5 {
            let cur = candidate_sets_k(&inst, k);
            for (a, s) in &prev.sets {
                assert!(s.iter().all(|t| cur.sets[a].contains(t)));
            }
            prev = cur;
        }
    }

    #[test]
    fn fig1_exact_search() {
        let (s, v) = exact_search_no_storage(&data("fig1.json")).unwrap();
        assert_eq!(v, qi(1));
        assert_eq!(s, sched(&[("a", qi(0)), ("b", qi(0))]));
    }

    #[test]
    fn exact_search_rejects_storage_and_budget() {
        assert!(matches!(
            exact_search_no_storage(&data("fig1_storage.json")),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            exact_search_no_storage_with_budget(&data("fig1.json"), 1),
            Err(Error::Budget { needed: 2, budget: 1 })
        ));
    }

    #[test]
    fn example1_grid_oracle() {
        let inst = data("example1.json");
        let (s, v) = grid_oracle(&inst, &q(1, 2), DEFAULT_BUDGET).unwrap();
        assert_eq!(v, qi(16));
        assert_eq!(s.start("a"), Some(&q(3, 2)));
        let (_, v1) = grid_oracle(&inst, &qi(1), DEFAULT_BUDGET).unwrap();
        assert!(v1 < qi(16));
    }

    #[test]
    fn fig1_storage_grid_oracle() {
        let (s, v) = grid_oracle(&data("fig1_storage.json"), &qi(1), DEFAULT_BUDGET).unwrap();
        assert_eq!(v, qi(2));
        assert_eq!(s.start("a"), Some(&qi(1)));
    }

    #[test]
    fn fig1_closure() {
        let inst = data("fig1.json");
        let r = closure_and_freedom(&inst, &sched(&[("a", qi(0)), ("b", qi(0))])).unwrap();
        assert_eq!(r.graph.components, vec![vec![0, 1]]);
        assert_eq!(r.sets.len(), 1);
        assert_eq!(r.sets[0].times, vec![qi(0), qi(1), qi(2)]);
        assert!(!r.sets[0].free);
        assert_eq!(r.graph.distance("a", "b"), Some(1));
    }

    #[test]
    fn shifting() {
        let inst = data("fig1.json");
        let s = sched(&[("a", q(1, 2)), ("b", qi(0))]);
        let arcs: BTreeSet<String> = ["a".to_string()].into();
        let r = closure_and_freedom(&inst, &s).unwrap();
        assert!(r.sets.iter().any(|c| c.arcs == arcs && c.free));
        assert_eq!(shift_schedule(&inst, &s, &arcs, &qi(0)).unwrap(), s);
        let moved = shift_schedule(&inst, &s, &arcs, &q(1, 4)).unwrap();
        assert_eq!(moved.start("a"), Some(&q(3, 4)));
        assert_eq!(max_shift(&inst, &s, &arcs).unwrap(), q(1, 2));
        // a at 1/2 .. 5/2, next breakpoint T=3
        assert!(shift_schedule(&inst, &s, &arcs, &qi(1)).is_err());
        let touching = sched(&[("a", qi(0)), ("b", qi(0))]);
        assert!(matches!(
            shift_schedule(&inst, &touching, &arcs, &q(1, 4)),
            Err(Error::InvalidArgument(_))
        ));
    }
}
