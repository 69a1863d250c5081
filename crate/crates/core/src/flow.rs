//! Exact maximum flow (Dinic) with a minimum-cut certificate.
//!
//! Rational capacities are scaled to integers by the common denominator and
//! solved with `i128` arithmetic; if the scaled values do not fit, the same
//! algorithm runs directly on [`Rational`]s.

use std::collections::VecDeque;
use std::ops::{Add, Sub};

use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::rational::Rational;

#[derive(Debug, Clone)]
pub struct FlowEdge {
    pub from: usize,
    pub to: usize,
    /// `None` means unbounded.
    pub cap: Option<Rational>,
}

#[derive(Debug, Clone, Default)]
pub struct FlowGraph {
    n: usize,
    edges: Vec<FlowEdge>,
}

#[derive(Debug, Clone)]
pub struct MaxFlow {
    pub value: Rational,
    /// Flow on each edge, in insertion order.
    pub flows: Vec<Rational>,
    /// Nodes reachable from the source in the final residual graph.
    pub source_side: Vec<bool>,
}

impl FlowGraph {
    pub fn new(n: usize) -> Self {
        FlowGraph { n, edges: Vec::new() }
    }

    pub fn add_node(&mut self) -> usize {
        self.n += 1;
        self.n - 1
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: Rational) -> usize {
        assert!(!cap.is_negative(), "negative capacity");
        self.edges.push(FlowEdge { from, to, cap: Some(cap) });
        self.edges.len() - 1
    }

    pub fn add_unbounded_edge(&mut self, from: usize, to: usize) -> usize {
        self.edges.push(FlowEdge { from, to, cap: None });
        self.edges.len() - 1
    }

    /// Capacity of the cut `(S, V \ S)` where `S` is given by `source_side`.
    /// Returns `None` if an unbounded edge crosses the cut.
    pub fn cut_capacity(&self, source_side: &[bool]) -> Option<Rational> {
        let mut total = Rational::zero();
        for e in &self.edges {
            if source_side[e.from] && !source_side[e.to] {
                total += e.cap.as_ref()?;
            }
        }
        Some(total)
    }
}

trait Cap: Clone + Ord + for<'a> Add<&'a Self, Output = Self> + for<'a> Sub<&'a Self, Output = Self> {
    fn zero() -> Self;
}

impl Cap for i128 {
    fn zero() -> Self {
        0
    }
}

impl Cap for Rational {
    fn zero() -> Self {
        Rational::zero()
    }
}

struct Dinic<T> {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<T>,
    level: Vec<i32>,
    it: Vec<usize>,
}

impl<T: Cap> Dinic<T> {
    fn new(n: usize) -> Self {
        Dinic {
            head: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
            level: vec![-1; n],
            it: vec![0; n],
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: T) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(T::zero());
    }

    fn bfs(&mut self, s: usize) {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > T::zero() && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    q.push_back(v);
                }
            }
        }
    }

    fn dfs(&mut self, u: usize, t: usize, limit: T) -> T {
        if u == t {
            return limit;
        }
        while self.it[u] < self.head[u].len() {
            let e = self.head[u][self.it[u]];
            let v = self.to[e];
            if self.cap[e] > T::zero() && self.level[v] == self.level[u] + 1 {
                let push = if self.cap[e] < limit {
                    self.cap[e].clone()
                } else {
                    limit.clone()
                };
                let got = self.dfs(v, t, push);
                if got > T::zero() {
                    self.cap[e] = self.cap[e].clone() - &got;
                    self.cap[e ^ 1] = self.cap[e ^ 1].clone() + &got;
                    return got;
                }
            }
            self.it[u] += 1;
        }
        T::zero()
    }

    fn run(&mut self, s: usize, t: usize, inf: T) -> T {
        let mut total = T::zero();
        loop {
            self.bfs(s);
            if self.level[t] < 0 {
                return total;
            }
            self.it.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, inf.clone());
                if f == T::zero() {
                    break;
                }
                total = total + &f;
            }
        }
    }

    fn reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.head.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > T::zero() && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

fn scaled_caps(g: &FlowGraph) -> Option<(Vec<i128>, i128, Rational)> {
    let finite: Vec<&Rational> = g.edges.iter().filter_map(|e| e.cap.as_ref()).collect();
    let lcm = Rational::denominator_lcm(finite.iter().copied());
    let scale = lcm.to_i128()?;
    let mut caps = Vec::with_capacity(g.edges.len());
    let mut total: i128 = 0;
    for e in &g.edges {
        match &e.cap {
            Some(c) => {
                let (n, d) = c.as_i64_pair()?;
                let v = (n as i128).checked_mul(scale / d as i128)?;
                total = total.checked_add(v)?;
                caps.push(v);
            }
            None => caps.push(-1),
        }
    }
    // keep every partial sum comfortably inside i128
    let inf = total.checked_add(1)?;
    inf.checked_mul(4)?;
    for c in caps.iter_mut().filter(|c| **c < 0) {
        *c = inf;
    }
    Some((caps, inf, Rational::from(num_bigint::BigInt::from(scale))))
}

/// Maximum `source`-`sink` flow, exact.
pub fn max_flow(g: &FlowGraph, source: usize, sink: usize) -> Result<MaxFlow> {
    if source == sink {
        return Err(Error::InvalidArgument("source equals sink".into()));
    }
    if source >= g.n || sink >= g.n {
        return Err(Error::InvalidArgument("terminal out of range".into()));
    }
    if let Some((caps, inf, scale)) = scaled_caps(g) {
        let mut d = Dinic::<i128>::new(g.n);
        for (e, c) in g.edges.iter().zip(&caps) {
            d.add_edge(e.from, e.to, *c);
        }
        let value = d.run(source, sink, inf);
        let to_q = |v: i128| -> Rational {
            Rational::from(num_bigint::BigInt::from(v)) / &scale
        };
        let flows = (0..g.edges.len()).map(|k| to_q(d.cap[2 * k + 1])).collect();
        return Ok(MaxFlow {
            value: to_q(value),
            flows,
            source_side: d.reachable(source),
        });
    }
    let finite_sum: Rational = g.edges.iter().filter_map(|e| e.cap.as_ref()).sum();
    let inf = finite_sum + Rational::one();
    let mut d = Dinic::<Rational>::new(g.n);
    for e in &g.edges {
        d.add_edge(e.from, e.to, e.cap.clone().unwrap_or_else(|| inf.clone()));
    }
    let value = d.run(source, sink, inf);
    let flows = (0..g.edges.len()).map(|k| d.cap[2 * k + 1].clone()).collect();
    Ok(MaxFlow {
        value,
        flows,
        source_side: d.reachable(source),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};
    use proptest::prelude::*;

    #[test]
    fn bottleneck_path() {
        let mut g = FlowGraph::new(3);
        g.add_edge(0, 1, qi(2));
        g.add_edge(1, 2, qi(1));
        let f = max_flow(&g, 0, 2).unwrap();
        assert_eq!(f.value, qi(1));
        assert_eq!(g.cut_capacity(&f.source_side), Some(qi(1)));
    }

    #[test]
    fn disjoint_paths_add() {
        let mut g = FlowGraph::new(4);
        g.add_edge(0, 1, qi(3));
        g.add_edge(1, 3, qi(3));
        g.add_edge(0, 2, qi(5));
        g.add_edge(2, 3, qi(5));
        assert_eq!(max_flow(&g, 0, 3).unwrap().value, qi(8));
    }

    #[test]
    fn fractional_capacities() {
        let mut g = FlowGraph::new(3);
        g.add_edge(0, 1, q(7, 2));
        g.add_edge(1, 2, q(10, 3));
        g.add_edge(0, 2, q(1, 6));
        let f = max_flow(&g, 0, 2).unwrap();
        assert_eq!(f.value, q(7, 2));
        assert_eq!(f.flows, vec![q(10, 3), q(10, 3), q(1, 6)]);
    }

    #[test]
    fn unbounded_edges_never_cut() {
        let mut g = FlowGraph::new(4);
        g.add_unbounded_edge(0, 1);
        g.add_edge(1, 2, qi(3));
        g.add_unbounded_edge(2, 3);
        let f = max_flow(&g, 0, 3).unwrap();
        assert_eq!(f.value, qi(3));
        assert_eq!(g.cut_capacity(&f.source_side), Some(qi(3)));
    }

    #[test]
    fn huge_values_fall_back_to_rationals() {
        let mut g = FlowGraph::new(3);
        g.add_edge(0, 1, q(i64::MAX, 3));
        g.add_edge(1, 2, q(i64::MAX - 1, 7));
        g.add_edge(0, 2, q(1, i64::MAX));
        let f = max_flow(&g, 0, 2).unwrap();
        assert_eq!(f.value, q(i64::MAX - 1, 7) + q(1, i64::MAX));
        assert_eq!(g.cut_capacity(&f.source_side), Some(f.value.clone()));
    }

    #[test]
    fn same_terminal_is_error() {
        let g = FlowGraph::new(2);
        assert!(max_flow(&g, 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn flow_equals_cut_and_is_conserved(
            n in 2usize..7,
            raw in prop::collection::vec((0usize..7, 0usize..7, 0i64..20, 1i64..4), 0..18),
        ) {
            let mut g = FlowGraph::new(n);
            for (u, v, c, d) in raw {
                let (u, v) = (u % n, v % n);
                if u != v {
                    g.add_edge(u, v, q(c, d));
                }
            }
            let f = max_flow(&g, 0, n - 1).unwrap();
            prop_assert_eq!(g.cut_capacity(&f.source_side), Some(f.value.clone()));
            prop_assert!(f.source_side[0] && !f.source_side[n - 1]);
            let mut bal = vec![Rational::zero(); n];
            for (e, x) in g.edges().iter().zip(&f.flows) {
                prop_assert!(*x >= Rational::zero() && Some(x) <= e.cap.as_ref());
                bal[e.from] -= x;
                bal[e.to] += x;
            }
            for v in 1..n - 1 {
                prop_assert!(bal[v].is_zero());
            }
            prop_assert_eq!(&bal[n - 1], &f.value);
        }
    }
}
