//! Value of a schedule: maximum flow over time in the time-expanded network.
//!
//! Node `(v, i)` is the copy of `v` during interval `i` (1-based). Each arc
//! has one copy per interval with capacity `len_i * u_a`, or zero while it
//! is under maintenance; storage nodes carry flow from `(v, i)` to
//! `(v, i + 1)` up to `u_v`. A super-source feeds every copy of `s` and every
//! copy of `t` drains into a super-sink.

use std::collections::BTreeMap;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{max_flow, FlowGraph};
use crate::instance::{Instance, Schedule};
use crate::milp::{MilpModel, ObjSense, Sense};
use crate::rational::Rational;
use crate::timegrid::{induced_grid, Discretization, OutageMap};

#[derive(Debug, Clone)]
pub struct TimeExpandedNetwork {
    pub graph: FlowGraph,
    pub source: usize,
    pub sink: usize,
    pub intervals: usize,
    /// `arc_edges[a][i - 1]` is the edge of arc `a` in interval `i`.
    pub arc_edges: Vec<Vec<usize>>,
    /// `storage_edges[v][i - 1]` carries stock from interval `i` to `i + 1`.
    pub storage_edges: BTreeMap<String, Vec<usize>>,
}

impl TimeExpandedNetwork {
    pub fn node(&self, v: usize, i: usize) -> usize {
        v * self.intervals + (i - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSolution {
    pub value: Rational,
    /// Flow on each arc per interval, index `i - 1`.
    pub arc_flows: BTreeMap<String, Vec<Rational>>,
    /// Stock held at each storage node after interval `i`, for `i = 0..=n`.
    pub storage_levels: BTreeMap<String, Vec<Rational>>,
    /// Capacity of the minimum cut found alongside the flow.
    pub cut_capacity: Rational,
}

struct Sparse<'a>(&'a [Rational], usize);

impl Serialize for Sparse<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        for (k, v) in self.0.iter().enumerate() {
            if !v.is_zero() {
                map.serialize_entry(&(k + self.1).to_string(), v)?;
            }
        }
        map.end()
    }
}

impl Serialize for FlowSolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let flows: BTreeMap<&str, Sparse> = self
            .arc_flows
            .iter()
            .filter(|(_, f)| f.iter().any(|v| !v.is_zero()))
            .map(|(a, f)| (a.as_str(), Sparse(f, 1)))
            .collect();
        let storage: BTreeMap<&str, Sparse> = self
            .storage_levels
            .iter()
            .filter(|(_, f)| f.iter().any(|v| !v.is_zero()))
            .map(|(v, f)| (v.as_str(), Sparse(f, 0)))
            .collect();
        let mut map = s.serialize_map(Some(3))?;
        map.serialize_entry("value", &self.value)?;
        map.serialize_entry("flows", &flows)?;
        map.serialize_entry("storage", &storage)?;
        map.end()
    }
}

fn check_outages(inst: &Instance, grid: &Discretization, outages: &OutageMap) -> Result<()> {
    for (a, set) in outages {
        if inst.network.arc_index(a).is_none() {
            return Err(Error::UnknownArc(a.clone()));
        }
        if let Some(i) = set.iter().find(|&&i| i == 0 || i > grid.n()) {
            return Err(Error::Grid(format!(
                "outage interval {i} of arc {a} outside 1..={}",
                grid.n()
            )));
        }
    }
    if grid.horizon() != &inst.horizon {
        return Err(Error::Grid(format!(
            "grid ends at {} but the horizon is {}",
            grid.horizon(),
            inst.horizon
        )));
    }
    Ok(())
}

/// Per-interval capacity of every arc copy.
fn copy_capacities(inst: &Instance, grid: &Discretization, outages: &OutageMap) -> Vec<Vec<Rational>> {
    inst.network
        .arcs
        .iter()
        .map(|a| {
            let down = outages.get(&a.id);
            (1..=grid.n())
                .map(|i| {
                    if down.is_some_and(|d| d.contains(&i)) {
                        Rational::zero()
                    } else {
                        grid.len(i) * &a.cap
                    }
                })
                .collect()
        })
        .collect()
}

pub fn build_time_expanded(
    inst: &Instance,
    grid: &Discretization,
    outages: &OutageMap,
) -> Result<TimeExpandedNetwork> {
    check_outages(inst, grid, outages)?;
    let net = &inst.network;
    let n = grid.n();
    let nv = net.nodes.len();
    let mut g = FlowGraph::new(nv * n + 2);
    let (source, sink) = (nv * n, nv * n + 1);
    let node = |v: usize, i: usize| v * n + (i - 1);

    let caps = copy_capacities(inst, grid, outages);
    let mut arc_edges = Vec::with_capacity(net.arcs.len());
    for (a, arc) in net.arcs.iter().enumerate() {
        let tail = net.node_index(&arc.tail).ok_or_else(|| Error::UnknownNode(arc.tail.clone()))?;
        let head = net.node_index(&arc.head).ok_or_else(|| Error::UnknownNode(arc.head.clone()))?;
        let edges = (1..=n)
            .map(|i| g.add_edge(node(tail, i), node(head, i), caps[a][i - 1].clone()))
            .collect();
        arc_edges.push(edges);
    }
    let mut storage_edges = BTreeMap::new();
    for (v, cap) in &net.storage {
        let k = net.node_index(v).ok_or_else(|| Error::UnknownNode(v.clone()))?;
        let edges = (1..n).map(|i| g.add_edge(node(k, i), node(k, i + 1), cap.clone())).collect();
        storage_edges.insert(v.clone(), edges);
    }
    let s = net.node_index(&net.source).ok_or_else(|| Error::UnknownNode(net.source.clone()))?;
    let t = net.node_index(&net.sink).ok_or_else(|| Error::UnknownNode(net.sink.clone()))?;
    for i in 1..=n {
        g.add_unbounded_edge(source, node(s, i));
        g.add_unbounded_edge(node(t, i), sink);
    }
    Ok(TimeExpandedNetwork {
        graph: g,
        source,
        sink,
        intervals: n,
        arc_edges,
        storage_edges,
    })
}

/// Maximum flow over time for a fixed grid and outage pattern.
pub fn evaluate_on_grid(inst: &Instance, grid: &Discretization, outages: &OutageMap) -> Result<FlowSolution> {
    let ten = build_time_expanded(inst, grid, outages)?;
    let mf = max_flow(&ten.graph, ten.source, ten.sink)?;
    let cut_capacity = ten
        .graph
        .cut_capacity(&mf.source_side)
        .ok_or_else(|| Error::Model("minimum cut crosses an unbounded edge".into()))?;
    let arc_flows = inst
        .network
        .arcs
        .iter()
        .zip(&ten.arc_edges)
        .map(|(a, es)| (a.id.clone(), es.iter().map(|&e| mf.flows[e].clone()).collect()))
        .collect();
    let storage_levels = ten
        .storage_edges
        .iter()
        .map(|(v, es)| {
            let mut levels = vec![Rational::zero()];
            levels.extend(es.iter().map(|&e| mf.flows[e].clone()));
            levels.push(Rational::zero());
            (v.clone(), levels)
        })
        .collect();
    Ok(FlowSolution {
        value: mf.value,
        arc_flows,
        storage_levels,
        cut_capacity,
    })
}

/// `val(t)`: throughput of a feasible schedule.
pub fn evaluate_schedule(inst: &Instance, sched: &Schedule) -> Result<FlowSolution> {
    let (grid, outages) = induced_grid(inst, sched)?;
    evaluate_on_grid(inst, &grid, &outages)
}

pub fn schedule_value(inst: &Instance, sched: &Schedule) -> Result<Rational> {
    Ok(evaluate_schedule(inst, sched)?.value)
}

/// Static `s`–`t` max flow using only the arcs with `available[a]`.
pub fn static_max_flow(inst: &Instance, available: &[bool]) -> Result<Rational> {
    let net = &inst.network;
    let mut g = FlowGraph::new(net.nodes.len());
    for (a, arc) in net.arcs.iter().enumerate() {
        if available[a] {
            let tail = net.node_index(&arc.tail).ok_or_else(|| Error::UnknownNode(arc.tail.clone()))?;
            let head = net.node_index(&arc.head).ok_or_else(|| Error::UnknownNode(arc.head.clone()))?;
            g.add_edge(tail, head, arc.cap.clone());
        }
    }
    let s = net.node_index(&net.source).ok_or_else(|| Error::UnknownNode(net.source.clone()))?;
    let t = net.node_index(&net.sink).ok_or_else(|| Error::UnknownNode(net.sink.clone()))?;
    Ok(max_flow(&g, s, t)?.value)
}

/// Flow variables added by [`add_flow_block`].
#[derive(Debug, Clone)]
pub(crate) struct FlowVars {
    /// `x[a][i - 1]`
    pub x: Vec<Vec<usize>>,
}

/// Adds arc flows `x_{a,i}` with the given upper bounds, storage levels
/// `x_{v,i}` for `i = 1..n-1` (end levels are zero and left out),
/// conservation at every node other than `s` and `t`, and the net outflow of
/// `s` as objective.
pub(crate) fn add_flow_block(
    m: &mut MilpModel,
    inst: &Instance,
    n: usize,
    upper: impl Fn(usize, usize) -> Option<Rational>,
) -> Result<FlowVars> {
    let net = &inst.network;
    let mut x = Vec::with_capacity(net.arcs.len());
    for (a, arc) in net.arcs.iter().enumerate() {
        let row = (1..=n)
            .map(|i| m.add_nonneg(format!("x_{}_{}", arc.id, i), upper(a, i), "x"))
            .collect::<Result<Vec<_>>>()?;
        x.push(row);
    }
    let mut stock: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (v, cap) in &net.storage {
        let row = (1..n)
            .map(|i| m.add_nonneg(format!("store_{v}_{i}"), Some(cap.clone()), "x"))
            .collect::<Result<Vec<_>>>()?;
        stock.insert(v.as_str(), row);
    }
    for v in &net.nodes {
        if *v == net.source || *v == net.sink {
            continue;
        }
        for i in 1..=n {
            let mut terms = Vec::new();
            for (a, arc) in net.arcs.iter().enumerate() {
                if arc.head == *v {
                    terms.push((x[a][i - 1], Rational::one()));
                }
                if arc.tail == *v {
                    terms.push((x[a][i - 1], -Rational::one()));
                }
            }
            if let Some(st) = stock.get(v.as_str()) {
                // carried in from i-1, carried out to i+1
                if i > 1 {
                    terms.push((st[i - 2], Rational::one()));
                }
                if i < n {
                    terms.push((st[i - 1], -Rational::one()));
                }
            }
            m.add_constraint(format!("cons_{v}_{i}"), terms, Sense::Eq, Rational::zero());
        }
    }
    let mut obj = Vec::new();
    for (a, arc) in net.arcs.iter().enumerate() {
        for i in 1..=n {
            if arc.tail == net.source {
                obj.push((x[a][i - 1], Rational::one()));
            }
            if arc.head == net.source {
                obj.push((x[a][i - 1], -Rational::one()));
            }
        }
    }
    m.set_objective(obj);
    Ok(FlowVars { x })
}

/// The flow-over-time problem as a plain LP, independent of the max-flow
/// engine.
pub fn flow_lp_model(inst: &Instance, grid: &Discretization, outages: &OutageMap) -> Result<MilpModel> {
    check_outages(inst, grid, outages)?;
    let caps = copy_capacities(inst, grid, outages);
    let mut m = MilpModel::new("flow_over_time", ObjSense::Maximize);
    add_flow_block(&mut m, inst, grid.n(), |a, i| Some(caps[a][i - 1].clone()))?;
    Ok(m)
}

/// Checks conservation, capacities, boundary levels and the objective of a
/// solution; returns a description of every violation.
pub fn verify_solution(
    inst: &Instance,
    grid: &Discretization,
    outages: &OutageMap,
    sol: &FlowSolution,
) -> Vec<String> {
    let net = &inst.network;
    let n = grid.n();
    let caps = copy_capacities(inst, grid, outages);
    let zero = Rational::zero();
    let mut out = Vec::new();
    for (a, arc) in net.arcs.iter().enumerate() {
        let Some(f) = sol.arc_flows.get(&arc.id).filter(|f| f.len() == n) else {
            out.push(format!("missing flows for arc {}", arc.id));
            return out;
        };
        for i in 1..=n {
            if f[i - 1] < zero || f[i - 1] > caps[a][i - 1] {
                out.push(format!("arc {} interval {i}: flow {} outside [0, {}]", arc.id, f[i - 1], caps[a][i - 1]));
            }
        }
    }
    for (v, cap) in &net.storage {
        let Some(l) = sol.storage_levels.get(v).filter(|l| l.len() == n + 1) else {
            out.push(format!("missing levels for storage node {v}"));
            return out;
        };
        if !l[0].is_zero() || !l[n].is_zero() {
            out.push(format!("storage {v} not empty at the horizon ends"));
        }
        for (i, x) in l.iter().enumerate() {
            if *x < zero || x > cap {
                out.push(format!("storage {v} level {x} at {i} outside [0, {cap}]"));
            }
        }
    }
    let mut value = Rational::zero();
    for v in &net.nodes {
        for i in 1..=n {
            let mut bal = Rational::zero();
            for arc in &net.arcs {
                let f = &sol.arc_flows[&arc.id][i - 1];
                if arc.head == *v {
                    bal += f;
                }
                if arc.tail == *v {
                    bal -= f;
                }
            }
            if *v == net.source {
                value -= &bal;
                continue;
            }
            if *v == net.sink {
                continue;
            }
            if let Some(l) = sol.storage_levels.get(v) {
                bal += &l[i - 1];
                bal -= &l[i];
            }
            if !bal.is_zero() {
                out.push(format!("conservation at {v} interval {i} off by {bal}"));
            }
        }
    }
    if value != sol.value {
        out.push(format!("objective {value} differs from reported value {}", sol.value));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::load_instance;
    use crate::milp::{solve_lp, Status};
    use crate::rational::{q, qi};

    fn data(name: &str) -> Instance {
        load_instance(format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    fn val(inst: &Instance, starts: &[Rational]) -> Rational {
        let s = Schedule::from_vector(inst, starts);
        let sol = evaluate_schedule(inst, &s).unwrap();
        let (grid, outages) = induced_grid(inst, &s).unwrap();
        assert!(verify_solution(inst, &grid, &outages, &sol).is_empty());
        assert_eq!(sol.cut_capacity, sol.value);
        sol.value
    }

    #[test]
    fn fig1_values() {
        let plain = data("fig1.json");
        assert_eq!(val(&plain, &[qi(0), qi(0)]), qi(1));
        assert_eq!(val(&plain, &[qi(1), qi(0)]), qi(0));
        assert_eq!(val(&plain, &[q(1, 2), qi(0)]), q(1, 2));
        let st = data("fig1_storage.json");
        assert_eq!(val(&st, &[qi(1), qi(0)]), qi(2));
        assert_eq!(val(&st, &[qi(0), qi(0)]), qi(1));
        assert_eq!(val(&st, &[q(1, 2), qi(0)]), q(3, 2));
    }

    #[test]
    fn example1_values() {
        let inst = data("example1.json");
        let v = |t: Rational| val(&inst, &[t, qi(3), qi(0), qi(0)]);
        assert_eq!(v(q(3, 2)), qi(16));
        assert_eq!(v(qi(0)), qi(10));
        assert_eq!(v(qi(1)), qi(14));
        assert_eq!(v(qi(2)), qi(15));
        assert_eq!(v(q(1, 2)), qi(12));
        assert_eq!(v(q(5, 4)), qi(15));
        assert_eq!(v(q(7, 4)), q(31, 2));
    }

    #[test]
    fn fig3_network_with_storage() {
        let inst = data("fig1_storage.json");
        let grid = Discretization::new(vec![qi(0), qi(1), qi(3)]).unwrap();
        let outages: OutageMap = [("a".to_string(), vec![2]), ("b".to_string(), vec![1])].into();
        let ten = build_time_expanded(&inst, &grid, &outages).unwrap();
        assert_eq!(ten.storage_edges["v"].len(), 1);
        let sol = evaluate_on_grid(&inst, &grid, &outages).unwrap();
        assert_eq!(sol.value, qi(2));
        assert_eq!(sol.storage_levels["v"], vec![qi(0), qi(2), qi(0)]);
        let lp = solve_lp(&flow_lp_model(&inst, &grid, &outages).unwrap());
        assert_eq!(lp.status, Status::Optimal);
        assert_eq!(lp.objective, Some(qi(2)));
    }

    #[test]
    fn single_arc_single_interval() {
        let mut inst = data("fig1.json");
        inst.network.arcs.retain(|a| a.id == "a");
        inst.network.arcs[0].head = "t".into();
        inst.jobs.clear();
        let s = Schedule::new();
        let sol = evaluate_schedule(&inst, &s).unwrap();
        assert_eq!(sol.value, qi(6));
        assert_eq!(sol.arc_flows["a"], vec![qi(6)]);
    }

    #[test]
    fn arcs_into_source_count_negatively() {
        let mut inst = data("fig1.json");
        inst.jobs.clear();
        // v -> s with a useless cycle; the value is unchanged
        inst.network.arcs.push(crate::instance::Arc {
            id: "back".into(),
            tail: "v".into(),
            head: "s".into(),
            cap: qi(5),
        });
        let sol = evaluate_schedule(&inst, &Schedule::new()).unwrap();
        assert_eq!(sol.value, qi(3));
        let grid = Discretization::new(vec![qi(0), qi(3)]).unwrap();
        let lp = solve_lp(&flow_lp_model(&inst, &grid, &OutageMap::new()).unwrap());
        assert_eq!(lp.objective, Some(qi(3)));
    }

    #[test]
    fn bad_outage_rejected() {
        let inst = data("fig1.json");
        let grid = Discretization::new(vec![qi(0), qi(3)]).unwrap();
        let o: OutageMap = [("a".to_string(), vec![2])].into();
        assert!(matches!(build_time_expanded(&inst, &grid, &o), Err(Error::Grid(_))));
        let o: OutageMap = [("zz".to_string(), vec![1])].into();
        assert!(matches!(build_time_expanded(&inst, &grid, &o), Err(Error::UnknownArc(_))));
    }

    #[test]
    fn infeasible_schedule_rejected() {
        let inst = data("fig1.json");
        let s = Schedule::from_vector(&inst, &[qi(2), qi(0)]);
        assert!(matches!(evaluate_schedule(&inst, &s), Err(Error::InfeasibleSchedule(_))));
    }

    #[test]
    fn sparse_json() {
        let inst = data("fig1_storage.json");
        let sol = evaluate_schedule(&inst, &Schedule::from_vector(&inst, &[qi(1), qi(0)])).unwrap();
        let js = serde_json::to_value(&sol).unwrap();
        assert_eq!(js["value"], "2");
        assert_eq!(js["storage"]["v"]["1"], "2");
        assert_eq!(js["flows"]["a"]["1"], "2");
        assert!(js["flows"]["a"].get("2").is_none());
    }
}
