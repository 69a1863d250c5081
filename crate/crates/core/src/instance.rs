//! Instance and schedule data model, validation, JSON I/O and a seeded
//! random generator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arc {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub cap: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    pub nodes: Vec<String>,
    pub arcs: Vec<Arc>,
    pub source: String,
    pub sink: String,
    /// Storage nodes and their capacities.
    pub storage: BTreeMap<String, Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Job {
    pub arc: String,
    pub r: Rational,
    pub d: Rational,
    pub p: Rational,
}

impl Job {
    /// Latest feasible start, `d - p`.
    pub fn latest_start(&self) -> Rational {
        &self.d - &self.p
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub network: Network,
    pub jobs: Vec<Job>,
    pub horizon: Rational,
}

/// Start time per job arc.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub starts: BTreeMap<String, Rational>,
}

/// A single broken invariant, naming the offending field and the rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    horizon: Rational,
    nodes: Vec<String>,
    source: String,
    sink: String,
    arcs: Vec<Arc>,
    #[serde(default)]
    storage: BTreeMap<String, Rational>,
    #[serde(default)]
    jobs: Vec<Job>,
}

impl Network {
    pub fn arc_index(&self, id: &str) -> Option<usize> {
        self.arcs.iter().position(|a| a.id == id)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|v| v == id)
    }

    pub fn arc(&self, id: &str) -> Option<&Arc> {
        self.arcs.iter().find(|a| a.id == id)
    }

    pub fn has_storage(&self) -> bool {
        !self.storage.is_empty()
    }
}

impl Instance {
    pub fn job(&self, arc: &str) -> Option<&Job> {
        self.jobs.iter().find(|j| j.arc == arc)
    }

    pub fn job_index(&self, arc: &str) -> Option<usize> {
        self.jobs.iter().position(|j| j.arc == arc)
    }

    /// For each arc, the index of its job (if any).
    pub fn job_of_arc(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.network.arcs.len()];
        for (j, job) in self.jobs.iter().enumerate() {
            if let Some(a) = self.network.arc_index(&job.arc) {
                out[a] = Some(j);
            }
        }
        out
    }

    /// True when every datum (times and capacities) is an integer.
    pub fn has_integer_data(&self) -> bool {
        self.horizon.is_integer()
            && self.network.arcs.iter().all(|a| a.cap.is_integer())
            && self.network.storage.values().all(|c| c.is_integer())
            && self
                .jobs
                .iter()
                .all(|j| j.r.is_integer() && j.d.is_integer() && j.p.is_integer())
    }

    /// Same instance with all storage removed.
    pub fn without_storage(&self) -> Instance {
        let mut inst = self.clone();
        inst.network.storage.clear();
        inst
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Instance, serde_json::Error> {
        let f: InstanceFile = serde_json::from_str(s)?;
        Ok(Instance {
            network: Network {
                nodes: f.nodes,
                arcs: f.arcs,
                source: f.source,
                sink: f.sink,
                storage: f.storage,
            },
            jobs: f.jobs,
            horizon: f.horizon,
        })
    }

    pub fn to_json_string(&self) -> String {
        let f = InstanceFile {
            horizon: self.horizon.clone(),
            nodes: self.network.nodes.clone(),
            source: self.network.source.clone(),
            sink: self.network.sink.clone(),
            arcs: self.network.arcs.clone(),
            storage: self.network.storage.clone(),
            jobs: self.jobs.clone(),
        };
        serde_json::to_string_pretty(&f).expect("instance serialization cannot fail")
    }
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, Rational)>) -> Self {
        Schedule {
            starts: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn start(&self, arc: &str) -> Option<&Rational> {
        self.starts.get(arc)
    }

    /// Starts listed in job order of `inst`.
    pub fn as_vector(&self, inst: &Instance) -> Vec<Rational> {
        inst.jobs
            .iter()
            .map(|j| self.starts.get(&j.arc).cloned().unwrap_or_default())
            .collect()
    }

    pub fn from_vector(inst: &Instance, starts: &[Rational]) -> Self {
        Schedule {
            starts: inst
                .jobs
                .iter()
                .zip(starts)
                .map(|(j, t)| (j.arc.clone(), t.clone()))
                .collect(),
        }
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Schedule, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serialization cannot fail")
    }
}

fn violation(field: impl Into<String>, rule: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        rule: rule.into(),
    }
}

/// Checks every structural invariant; an empty result means the instance is
/// valid.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let net = &inst.network;
    let zero = Rational::zero();

    if inst.horizon <= zero {
        out.push(violation("horizon", "must be positive"));
    }

    let mut seen = BTreeSet::new();
    for v in &net.nodes {
        if !seen.insert(v.as_str()) {
            out.push(violation(format!("nodes.{v}"), "duplicate node id"));
        }
    }
    if !seen.contains(net.source.as_str()) {
        out.push(violation("source", format!("node {:?} does not exist", net.source)));
    }
    if !seen.contains(net.sink.as_str()) {
        out.push(violation("sink", format!("node {:?} does not exist", net.sink)));
    }
    if net.source == net.sink {
        out.push(violation("sink", "source and sink must differ"));
    }

    let mut arc_ids = BTreeSet::new();
    for a in &net.arcs {
        if !arc_ids.insert(a.id.as_str()) {
            out.push(violation(format!("arcs.{}", a.id), "duplicate arc id"));
        }
        if !seen.contains(a.tail.as_str()) {
            out.push(violation(
                format!("arcs.{}.tail", a.id),
                format!("node {:?} does not exist", a.tail),
            ));
        }
        if !seen.contains(a.head.as_str()) {
            out.push(violation(
                format!("arcs.{}.head", a.id),
                format!("node {:?} does not exist", a.head),
            ));
        }
        if a.cap < zero {
            out.push(violation(format!("arcs.{}.cap", a.id), "capacity must be >= 0"));
        }
    }

    for (v, cap) in &net.storage {
        if !seen.contains(v.as_str()) {
            out.push(violation(format!("storage.{v}"), "node does not exist"));
        }
        if *v == net.source || *v == net.sink {
            out.push(violation(
                format!("storage.{v}"),
                "storage is not allowed at the source or sink",
            ));
        }
        if *cap < zero {
            out.push(violation(format!("storage.{v}"), "capacity must be >= 0"));
        }
    }

    let mut job_arcs = BTreeSet::new();
    for j in &inst.jobs {
        let f = format!("jobs.{}", j.arc);
        if !arc_ids.contains(j.arc.as_str()) {
            out.push(violation(&f, "job arc does not exist"));
        }
        if !job_arcs.insert(j.arc.as_str()) {
            out.push(violation(&f, "at most one job per arc"));
        }
        if j.r < zero {
            out.push(violation(format!("{f}.r"), "release date must be >= 0"));
        }
        if j.p <= zero {
            out.push(violation(format!("{f}.p"), "processing time must be positive"));
        }
        if &j.r + &j.p > j.d {
            out.push(violation(format!("{f}.d"), "deadline violation: r + p > d"));
        }
        if j.d > inst.horizon {
            out.push(violation(format!("{f}.d"), "deadline exceeds the horizon"));
        }
    }
    out
}

pub fn ensure_valid(inst: &Instance) -> Result<()> {
    let v = validate_instance(inst);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInstance(v))
    }
}

fn check_schedule(inst: &Instance, sched: &Schedule) -> Result<Option<String>> {
    for arc in sched.starts.keys() {
        if inst.job(arc).is_none() {
            return Err(Error::UnknownArc(arc.clone()));
        }
    }
    for j in &inst.jobs {
        match sched.starts.get(&j.arc) {
            None => return Ok(Some(format!("job on arc {:?} is not scheduled", j.arc))),
            Some(t) => {
                if *t < j.r || *t > j.latest_start() {
                    return Ok(Some(format!(
                        "start {} of job {:?} outside [{}, {}]",
                        t,
                        j.arc,
                        j.r,
                        j.latest_start()
                    )));
                }
            }
        }
    }
    Ok(None)
}

/// True iff every job is scheduled inside its window.
///
/// Errors on schedule entries naming arcs without a job.
pub fn is_feasible(inst: &Instance, sched: &Schedule) -> Result<bool> {
    Ok(check_schedule(inst, sched)?.is_none())
}

pub fn ensure_feasible(inst: &Instance, sched: &Schedule) -> Result<()> {
    match check_schedule(inst, sched)? {
        None => Ok(()),
        Some(msg) => Err(Error::InfeasibleSchedule(msg)),
    }
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let inst = Instance::from_json_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    ensure_valid(&inst)?;
    Ok(inst)
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, inst.to_json_string() + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_schedule(path: impl AsRef<Path>) -> Result<Schedule> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Schedule::from_json_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_schedule(sched: &Schedule, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, sched.to_json_string() + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parameters of the random instance generator. All ranges are inclusive
/// and integral.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Total node count including source and sink.
    pub nodes: usize,
    pub arcs: usize,
    pub cap_range: (i64, i64),
    pub jobs: usize,
    /// Range of `d - r`.
    pub window_range: (i64, i64),
    pub processing_range: (i64, i64),
    pub horizon: i64,
    pub storage_nodes: usize,
    pub storage_cap_range: (i64, i64),
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            nodes: 4,
            arcs: 5,
            cap_range: (1, 5),
            jobs: 3,
            window_range: (3, 6),
            processing_range: (1, 3),
            horizon: 10,
            storage_nodes: 0,
            storage_cap_range: (1, 5),
        }
    }
}

impl GeneratorParams {
    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::GeneratorParams(m.to_string()));
        let range_ok = |(lo, hi): (i64, i64)| lo <= hi;
        if self.nodes < 2 {
            return bad("need at least two nodes");
        }
        if self.horizon <= 0 {
            return bad("horizon must be positive");
        }
        for (name, r) in [
            ("cap_range", self.cap_range),
            ("window_range", self.window_range),
            ("processing_range", self.processing_range),
            ("storage_cap_range", self.storage_cap_range),
        ] {
            if !range_ok(r) {
                return Err(Error::GeneratorParams(format!("{name} is empty")));
            }
        }
        if self.cap_range.0 < 0 || self.storage_cap_range.0 < 0 {
            return bad("capacities must be >= 0");
        }
        if self.processing_range.0 < 1 {
            return bad("processing times must be >= 1");
        }
        if self.processing_range.1 > self.window_range.0 {
            return bad("maximum processing time exceeds the narrowest window");
        }
        if self.window_range.1 > self.horizon {
            return bad("widest window exceeds the horizon");
        }
        if self.arcs < 1 {
            return bad("need at least one arc");
        }
        if self.jobs > self.arcs {
            return bad("more jobs than arcs");
        }
        if self.storage_nodes > self.nodes - 2 {
            return bad("more storage nodes than inner nodes");
        }
        let n = self.nodes;
        // pairs (u, v), u != v, u != sink, v != source
        let max_arcs = (n - 1) * (n - 1) - (n - 2);
        if self.arcs > max_arcs {
            return bad("too many arcs for a simple digraph on these nodes");
        }
        Ok(())
    }
}

/// Generates a random valid instance; a pure function of `(seed, params)`.
///
/// The network always contains a source-sink path. Arcs are simple (no
/// parallel arcs, none entering the source or leaving the sink).
pub fn generate_instance(seed: u64, params: &GeneratorParams) -> Result<Instance> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.nodes;
    let mut nodes = vec!["s".to_string()];
    nodes.extend((1..n - 1).map(|i| format!("v{i}")));
    nodes.push("t".to_string());
    let (s, t) = (0usize, n - 1);

    let mut inner: Vec<usize> = (1..n - 1).collect();
    inner.shuffle(&mut rng);
    let hops = rng.gen_range(0..=inner.len().min(params.arcs - 1));
    let mut path = vec![s];
    path.extend_from_slice(&inner[..hops]);
    path.push(t);

    let mut pairs: Vec<(usize, usize)> = path.windows(2).map(|w| (w[0], w[1])).collect();
    let used: BTreeSet<(usize, usize)> = pairs.iter().copied().collect();
    let mut rest: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (0..n).map(move |v| (u, v)))
        .filter(|&(u, v)| u != v && u != t && v != s && !used.contains(&(u, v)))
        .collect();
    rest.shuffle(&mut rng);
    pairs.extend(rest.into_iter().take(params.arcs - pairs.len()));

    let arcs: Vec<Arc> = pairs
        .iter()
        .enumerate()
        .map(|(k, &(u, v))| Arc {
            id: format!("a{}", k + 1),
            tail: nodes[u].clone(),
            head: nodes[v].clone(),
            cap: Rational::from_int(rng.gen_range(params.cap_range.0..=params.cap_range.1)),
        })
        .collect();

    let mut job_arcs: Vec<usize> = (0..arcs.len()).collect();
    job_arcs.shuffle(&mut rng);
    job_arcs.truncate(params.jobs);
    job_arcs.sort_unstable();
    let jobs = job_arcs
        .iter()
        .map(|&a| {
            let w = rng.gen_range(params.window_range.0..=params.window_range.1);
            let p = rng.gen_range(params.processing_range.0..=params.processing_range.1.min(w));
            let r = rng.gen_range(0..=params.horizon - w);
            Job {
                arc: arcs[a].id.clone(),
                r: Rational::from_int(r),
                d: Rational::from_int(r + w),
                p: Rational::from_int(p),
            }
        })
        .collect();

    inner.shuffle(&mut rng);
    let storage = inner[..params.storage_nodes]
        .iter()
        .map(|&v| {
            let c = rng.gen_range(params.storage_cap_range.0..=params.storage_cap_range.1);
            (nodes[v].clone(), Rational::from_int(c))
        })
        .collect();

    let inst = Instance {
        network: Network {
            nodes,
            arcs,
            source: "s".into(),
            sink: "t".into(),
            storage,
        },
        jobs,
        horizon: Rational::from_int(params.horizon),
    };
    debug_assert!(validate_instance(&inst).is_empty());
    Ok(inst)
}

/// True if the sink is reachable from the source along arcs of any capacity.
pub fn sink_reachable(net: &Network) -> bool {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for a in &net.arcs {
        adj.entry(a.tail.as_str()).or_default().push(a.head.as_str());
    }
    let mut seen = BTreeSet::from([net.source.as_str()]);
    let mut stack = vec![net.source.as_str()];
    while let Some(v) = stack.pop() {
        if v == net.sink {
            return true;
        }
        for &w in adj.get(v).into_iter().flatten() {
            if seen.insert(w) {
                stack.push(w);
            }
        }
    }
    false
}
