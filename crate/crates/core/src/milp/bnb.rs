use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::simplex::{BasisState, ColMap, LpStatus, Tableau};
use super::{MilpModel, MilpResult, ObjSense, Snapshot, SnapshotTrigger, SolveOptions, Status};
use crate::rational::Rational;

/// Total tableau entries kept in memory for open nodes; beyond this, nodes
/// keep only their basis and are rebuilt from the root when expanded.
const STORED_ENTRY_BUDGET: usize = 4_000_000;

fn sign_of(m: &MilpModel) -> Rational {
    match m.obj_sense() {
        ObjSense::Maximize => Rational::one(),
        ObjSense::Minimize => -Rational::one(),
    }
}

fn empty_result(status: Status, start: Instant) -> MilpResult {
    MilpResult {
        status,
        objective: None,
        assignment: None,
        best_bound: None,
        root_bound: None,
        root_assignment: None,
        nodes: 1,
        elapsed: start.elapsed(),
        snapshots: Vec::new(),
    }
}

pub(super) fn solve_relaxation(m: &MilpModel) -> MilpResult {
    let start = Instant::now();
    let (mut t, maps) = Tableau::build(m);
    match t.solve(None) {
        LpStatus::Optimal => {
            let v = sign_of(m) * t.objective();
            let x = t.values(&maps);
            MilpResult {
                status: Status::Optimal,
                objective: Some(v.clone()),
                assignment: Some(x.clone()),
                best_bound: Some(v.clone()),
                root_bound: Some(v),
                root_assignment: Some(x),
                nodes: 1,
                elapsed: start.elapsed(),
                snapshots: Vec::new(),
            }
        }
        LpStatus::Infeasible => empty_result(Status::Infeasible, start),
        LpStatus::Unbounded => empty_result(Status::Unbounded, start),
        LpStatus::Interrupted => unreachable!("no deadline was given"),
    }
}

enum Stored {
    Full(Box<Tableau>),
    Basis(BasisState),
}

struct Node {
    id: u64,
    depth: u32,
    /// Internal (maximized) LP bound.
    bound: Rational,
    x: Vec<Rational>,
    fixings: Vec<(usize, Rational)>,
    state: Stored,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: best bound, then deeper, then older
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    model: &'a MilpModel,
    sign: Rational,
    start: Instant,
    binaries: Vec<(usize, usize)>,
    incumbent: Option<(Rational, Vec<Rational>)>,
    nodes: u64,
    snapshots: Vec<Snapshot>,
    pending: Vec<SnapshotTrigger>,
}

impl Search<'_> {
    fn is_integral(&self, x: &[Rational]) -> bool {
        self.binaries.iter().all(|&(k, _)| x[k].is_integer())
    }

    fn offer(&mut self, bound: &Rational, x: &[Rational]) {
        if self.incumbent.as_ref().is_none_or(|(v, _)| bound > v) {
            self.incumbent = Some((bound.clone(), x.to_vec()));
        }
    }

    fn dominated(&self, bound: &Rational) -> bool {
        self.incumbent.as_ref().is_some_and(|(v, _)| bound <= v)
    }

    /// Reduced-cost fixing: binaries that cannot move off their bound without
    /// the bound dropping to the incumbent are fixed in `t`.
    fn fix_by_reduced_cost(&self, t: &mut Tableau, bound: &Rational) -> Vec<(usize, Rational)> {
        let Some((v, _)) = &self.incumbent else {
            return Vec::new();
        };
        let cols: Vec<usize> = self.binaries.iter().map(|&(_, c)| c).collect();
        let fixed = t.fixable(&cols, &(bound - v));
        for (c, val) in &fixed {
            t.set_bounds(*c, val.clone(), Some(val.clone()));
        }
        fixed
    }

    /// Most fractional binary; ties go to the lowest variable index.
    fn branch_var(&self, x: &[Rational]) -> usize {
        let half = Rational::new(1, 2);
        let mut best: Option<(usize, Rational)> = None;
        for &(k, col) in &self.binaries {
            if x[k].is_integer() {
                continue;
            }
            let dist = (&x[k] - &half).abs();
            if best.as_ref().is_none_or(|(_, d)| dist < *d) {
                best = Some((col, dist));
            }
        }
        best.expect("fractional binary exists").0
    }

    fn fire(&mut self, heap: &BinaryHeap<Node>, force: bool) {
        let elapsed = self.start.elapsed();
        let nodes = self.nodes;
        let due: Vec<SnapshotTrigger> = self
            .pending
            .iter()
            .copied()
            .filter(|t| {
                force
                    || match *t {
                        SnapshotTrigger::Nodes(k) => nodes >= k,
                        SnapshotTrigger::Seconds(s) => elapsed.as_secs_f64() >= s,
                    }
            })
            .collect();
        if due.is_empty() {
            return;
        }
        self.pending.retain(|t| !due.contains(t));
        let (lp_bound, lp_assignment) = match heap.peek() {
            Some(n) => (Some(&self.sign * &n.bound), Some(n.x.clone())),
            None => match &self.incumbent {
                Some((v, x)) => (Some(&self.sign * v), Some(x.clone())),
                None => (None, None),
            },
        };
        for trigger in due {
            self.snapshots.push(Snapshot {
                trigger,
                nodes,
                elapsed,
                lp_bound: lp_bound.clone(),
                lp_assignment: lp_assignment.clone(),
                incumbent_value: self.incumbent.as_ref().map(|(v, _)| &self.sign * v),
                incumbent: self.incumbent.as_ref().map(|(_, x)| x.clone()),
            });
        }
    }
}

pub(super) fn branch_and_bound(m: &MilpModel, opts: &SolveOptions) -> MilpResult {
    let start = Instant::now();
    let deadline = opts.limits.time.map(|d| start + d);
    let sign = sign_of(m);
    let (mut root, maps) = Tableau::build(m);
    let binaries: Vec<(usize, usize)> = m
        .binaries()
        .into_iter()
        .map(|k| match maps[k] {
            ColMap::Direct(c) => (k, c),
            _ => unreachable!("binaries have finite bounds"),
        })
        .collect();
    let mut s = Search {
        model: m,
        sign: sign.clone(),
        start,
        binaries,
        incumbent: None,
        nodes: 1,
        snapshots: Vec::new(),
        pending: opts.snapshots.clone(),
    };
    if let Some(ws) = &opts.warm_start {
        let x = ws.assignment().to_vec();
        let v = &sign * &s.model.objective_value(&x);
        s.incumbent = Some((v, x));
    }

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut limit_hit = false;
    let mut root_bound = None;
    let mut root_assignment = None;

    match root.solve(deadline) {
        LpStatus::Infeasible => {
            s.fire(&heap, true);
            let mut r = empty_result(Status::Infeasible, start);
            r.snapshots = s.snapshots;
            return r;
        }
        LpStatus::Unbounded => return empty_result(Status::Unbounded, start),
        LpStatus::Interrupted => limit_hit = true,
        LpStatus::Optimal => {
            let bound = root.objective();
            let x = root.values(&maps);
            root_bound = Some(&sign * &bound);
            root_assignment = Some(x.clone());
            if s.is_integral(&x) {
                s.offer(&bound, &x);
            } else if !s.dominated(&bound) {
                let fixings = s.fix_by_reduced_cost(&mut root, &bound);
                heap.push(Node {
                    id: 0,
                    depth: 0,
                    bound,
                    x,
                    fixings,
                    state: Stored::Full(Box::new(root.clone())),
                });
            }
        }
    }

    let mut next_id = 1u64;
    let mut stored = root.entries();
    let node_limit = opts.limits.nodes;

    while !limit_hit {
        s.fire(&heap, false);
        if node_limit.is_some_and(|k| s.nodes >= k) || deadline.is_some_and(|d| Instant::now() >= d)
        {
            limit_hit = true;
            break;
        }
        let Some(node) = heap.pop() else { break };
        if s.dominated(&node.bound) {
            if let Stored::Full(t) = &node.state {
                stored -= t.entries();
            }
            continue;
        }
        let col = s.branch_var(&node.x);
        let parent = match node.state {
            Stored::Full(t) => {
                stored -= t.entries();
                *t
            }
            Stored::Basis(ref b) => {
                let mut t = root.clone();
                for (c, v) in &node.fixings {
                    t.set_bounds(*c, v.clone(), Some(v.clone()));
                }
                t.rebase(b);
                t
            }
        };
        let mut interrupted = false;
        let mut children = Vec::with_capacity(2);
        for val in [Rational::zero(), Rational::one()] {
            let mut t = parent.clone();
            t.set_bounds(col, val.clone(), Some(val.clone()));
            s.nodes += 1;
            match t.reoptimize(deadline) {
                LpStatus::Optimal => {}
                LpStatus::Infeasible | LpStatus::Unbounded => continue,
                LpStatus::Interrupted => {
                    interrupted = true;
                    break;
                }
            }
            let bound = t.objective();
            let x = t.values(&maps);
            if s.dominated(&bound) {
                continue;
            }
            if s.is_integral(&x) {
                s.offer(&bound, &x);
                continue;
            }
            let mut fixings = node.fixings.clone();
            fixings.push((col, val));
            fixings.extend(s.fix_by_reduced_cost(&mut t, &bound));
            children.push((bound, x, fixings, t));
        }
        if interrupted {
            // keep the parent's bound in the tree so the reported bound stays valid
            heap.push(Node {
                id: node.id,
                depth: node.depth,
                bound: node.bound,
                x: node.x,
                fixings: node.fixings,
                state: Stored::Full(Box::new(parent)),
            });
            limit_hit = true;
            break;
        }
        for (bound, x, fixings, t) in children {
            let state = if stored + t.entries() <= STORED_ENTRY_BUDGET {
                stored += t.entries();
                Stored::Full(Box::new(t))
            } else {
                Stored::Basis(t.basis_state())
            };
            heap.push(Node {
                id: next_id,
                depth: node.depth + 1,
                bound,
                x,
                fixings,
                state,
            });
            next_id += 1;
        }
        // drop nodes the incumbent now dominates lazily, on pop
    }

    // nodes dominated by the incumbent do not contribute to the bound
    let open_bound = heap
        .iter()
        .filter(|n| !s.dominated(&n.bound))
        .map(|n| n.bound.clone())
        .max();
    heap.retain(|n| !s.dominated(&n.bound));
    s.fire(&heap, true);

    let inc_val = s.incumbent.as_ref().map(|(v, _)| v.clone());
    let status = match (limit_hit && open_bound.is_some(), &inc_val) {
        (false, Some(_)) => Status::Optimal,
        (false, None) => Status::Infeasible,
        (true, Some(_)) => Status::FeasibleAtLimit,
        (true, None) => Status::LimitNoIncumbent,
    };
    let status = if limit_hit && root_bound.is_none() {
        if inc_val.is_some() {
            Status::FeasibleAtLimit
        } else {
            Status::LimitNoIncumbent
        }
    } else {
        status
    };
    let best_internal = match (&open_bound, &inc_val) {
        (Some(b), Some(v)) => Some(b.clone().max(v.clone())),
        (Some(b), None) => Some(b.clone()),
        (None, Some(v)) => Some(v.clone()),
        (None, None) => None,
    };
    let best_bound = if limit_hit && root_bound.is_none() {
        None
    } else {
        best_internal.map(|b| &sign * &b)
    };
    MilpResult {
        status,
        objective: inc_val.map(|v| &sign * &v),
        assignment: s.incumbent.map(|(_, x)| x),
        best_bound,
        root_bound,
        root_assignment,
        nodes: s.nodes,
        elapsed: start.elapsed(),
        snapshots: s.snapshots,
    }
}
