//! Repair heuristics turning fractional per-interval processing vectors
//! into feasible schedules, and the bound pipeline that feeds them LP and
//! incumbent vectors from a TDIP search.

use std::fmt;
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluator::schedule_value;
use crate::instance::{ensure_valid, Instance, Job, Schedule};
use crate::milp::{solve_lp, solve_milp, Limits, SnapshotTrigger, SolveOptions};
use crate::models::{build_tdip, midpoint_schedule, overlap, Formulation};
pub use crate::models::{induced_xi, ZVector};
use crate::rational::Rational;
use crate::timegrid::Discretization;

/// `f(t) = Σ_i |(t_i - t_{i-1}) z_ai - l_ai(t)|`.
pub fn projection_distance(grid: &Discretization, z: &ZVector, job: &Job, t: &Rational) -> Rational {
    (1..=grid.n())
        .map(|i| (grid.len(i) * z.get(&job.arc, i) - overlap(grid, i, t, &job.p)).abs())
        .sum()
}

/// Candidate starts `t*_aik`, one per start interval `i` and end interval
/// `k`, each the earliest minimizer of `f` over starts in `i` ending in `k`,
/// restricted to the job window.
pub fn projection_candidates(grid: &Discretization, z: &ZVector, job: &Job) -> Vec<Rational> {
    let (r, last) = (&job.r, job.latest_start());
    let p = &job.p;
    let mut out = Vec::new();
    for i in 1..=grid.n() {
        let (ti0, ti) = (grid.t(i - 1), grid.t(i));
        if ti0 > &last || ti < r {
            continue;
        }
        for k in i..=grid.n() {
            let (tk0, tk) = (grid.t(k - 1), grid.t(k));
            // E_ai: the job can end in k when it starts in i
            if &(ti0 + p) > tk || &(ti + p) <= tk0 {
                continue;
            }
            if k == i {
                // the whole job sits in i, where f is constant
                let t = ti0.max(r).clone();
                if &t + p <= *ti && t <= last {
                    out.push(t);
                }
                continue;
            }
            // t = t_i - alpha, t + p = t_{k-1} + beta, alpha + beta = c
            let c = p - &(tk0 - ti);
            let a_target = grid.len(i) * z.get(&job.arc, i);
            let b_target = grid.len(k) * z.get(&job.arc, k);
            let lo = Rational::zero()
                .max(&c - &grid.len(k))
                .max(ti - &last);
            let hi = grid.len(i).min(c.clone()).min(ti - r);
            if lo > hi {
                continue;
            }
            // minimizers of |alpha - A| + |c - alpha - B| form [min, max] of {A, c - B}
            let other = &c - &b_target;
            let best_hi = a_target.clone().max(other.clone());
            let best_lo = a_target.min(other);
            let alpha = if best_hi < lo {
                lo
            } else if best_lo > hi {
                hi
            } else {
                // largest alpha gives the earliest start
                best_hi.min(hi)
            };
            out.push(ti - &alpha);
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Earliest start minimizing `f` over the candidates of one job.
fn project_job(grid: &Discretization, z: &ZVector, job: &Job) -> Rational {
    let mut best: Option<(Rational, Rational)> = None;
    for t in projection_candidates(grid, z, job) {
        let f = projection_distance(grid, z, job, &t);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, t));
        }
    }
    best.map_or_else(|| job.r.clone(), |(_, t)| t)
}

/// Projection heuristic: per job, the start whose induced processing profile
/// is closest in l1 distance to `z`.
pub fn projection_heuristic(inst: &Instance, grid: &Discretization, z: &ZVector) -> Result<Schedule> {
    grid.check_for(inst)?;
    Ok(Schedule::from_pairs(
        inst.jobs.iter().map(|j| (j.arc.clone(), project_job(grid, z, j))),
    ))
}

/// Centre-of-Mass heuristic: per job, the start that centres the processing
/// period on the point halving the `z` mass. Mass is rescaled to `p_a` first
/// and the start is clamped into the job window.
pub fn com_heuristic(inst: &Instance, grid: &Discretization, z: &ZVector) -> Result<Schedule> {
    grid.check_for(inst)?;
    let two = Rational::from_int(2);
    let mut starts = Vec::with_capacity(inst.jobs.len());
    for job in &inst.jobs {
        let masses: Vec<(usize, Rational)> = (1..=grid.n())
            .map(|i| (i, grid.len(i) * z.get(&job.arc, i)))
            .filter(|(_, m)| m.is_positive())
            .collect();
        let total: Rational = masses.iter().map(|(_, m)| m.clone()).sum();
        if total.is_zero() {
            return Err(Error::InvalidArgument(format!("job on arc {:?} has zero mass", job.arc)));
        }
        let scale = &job.p / &total;
        let half = &job.p / &two;
        let mut cum = Rational::zero();
        let mut mid = None;
        for (i, m) in &masses {
            let m = m * &scale;
            let next = &cum + &m;
            if next > half {
                // balance inside interval i at rate z_ai (rescaled)
                let rate = &m / grid.len(*i);
                mid = Some(grid.t(i - 1) + (&half - &cum) / rate);
                break;
            }
            cum = next;
        }
        let mid = mid.expect("total mass p exceeds p/2");
        let start = (mid - &half).max(job.r.clone()).min(job.latest_start());
        starts.push((job.arc.clone(), start));
    }
    Ok(Schedule::from_pairs(starts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunSource {
    LpRoot,
    LpSnapshot,
    Incumbent,
    Direct,
}

impl fmt::Display for RunSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunSource::LpRoot => "LP-root",
            RunSource::LpSnapshot => "LP-snapshot",
            RunSource::Incumbent => "incumbent",
            RunSource::Direct => "direct",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HeuristicRun {
    pub label: String,
    pub source: RunSource,
    pub input: ZVector,
    pub schedule: Schedule,
    pub value: Rational,
}

/// When the snapshot for the `-LPτ` and `-FSτ` runs is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau {
    Nodes(u64),
    Seconds(f64),
}

impl fmt::Display for Tau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tau::Nodes(n) => write!(f, "{n}"),
            Tau::Seconds(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub runs: Vec<HeuristicRun>,
    /// Copy of the best run, labelled `MaxOfAll`.
    pub best: Option<HeuristicRun>,
    /// Sources that produced no input vector, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn run_both(
    inst: &Instance,
    grid: &Discretization,
    z: &ZVector,
    source: RunSource,
    suffix: &str,
    runs: &mut Vec<HeuristicRun>,
) -> Result<()> {
    for (name, sched) in [
        ("CoM", com_heuristic(inst, grid, z)),
        ("Proj", projection_heuristic(inst, grid, z)),
    ] {
        let schedule = sched?;
        let value = schedule_value(inst, &schedule)?;
        runs.push(HeuristicRun {
            label: format!("{name}{suffix}"),
            source,
            input: z.clone(),
            schedule,
            value,
        });
    }
    Ok(())
}

/// Runs both heuristics on the root LP of TDIP over `grid`, then on the
/// best-bound LP solution and the incumbent after searching up to `tau`,
/// and reports every run plus the best one.
pub fn heuristic_pipeline(inst: &Instance, grid: &Discretization, tau: Tau) -> Result<PipelineReport> {
    ensure_valid(inst)?;
    let f: Formulation = build_tdip(inst, grid)?;
    let mut runs = Vec::new();
    let mut skipped = Vec::new();

    let root = solve_lp(&f.model);
    match &root.assignment {
        Some(x) => run_both(inst, grid, &f.extract_zvector(x)?, RunSource::LpRoot, "", &mut runs)?,
        None => skipped.push(("LP-root".to_string(), format!("LP status {}", root.status))),
    }

    let (limits, trigger) = match tau {
        Tau::Nodes(n) => (
            Limits {
                nodes: Some(n),
                time: None,
            },
            SnapshotTrigger::Nodes(n),
        ),
        Tau::Seconds(s) => (
            Limits {
                nodes: None,
                time: Some(Duration::from_secs_f64(s)),
            },
            SnapshotTrigger::Seconds(s),
        ),
    };
    let opts = SolveOptions {
        limits,
        snapshots: vec![trigger],
        warm_start: f.warm_start(&midpoint_schedule(inst)).ok(),
    };
    let res = solve_milp(&f.model, &opts);
    let snap = res.snapshots.first();
    match snap.and_then(|s| s.lp_assignment.as_ref()) {
        Some(x) => run_both(
            inst,
            grid,
            &f.extract_zvector(x)?,
            RunSource::LpSnapshot,
            &format!("-LP{tau}"),
            &mut runs,
        )?,
        None => skipped.push((format!("LP{tau}"), "no open node or incumbent at the snapshot".into())),
    }
    match snap.and_then(|s| s.incumbent.as_ref()) {
        Some(x) => run_both(
            inst,
            grid,
            &f.extract_zvector(x)?,
            RunSource::Incumbent,
            &format!("-FS{tau}"),
            &mut runs,
        )?,
        None => skipped.push((format!("FS{tau}"), "no incumbent at the snapshot".into())),
    }

    let best = runs
        .iter()
        .fold(None::<&HeuristicRun>, |acc, r| match acc {
            Some(b) if b.value >= r.value => Some(b),
            _ => Some(r),
        })
        .map(|b| HeuristicRun {
            label: "MaxOfAll".into(),
            ..b.clone()
        });
    Ok(PipelineReport { runs, best, skipped })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::instance::{is_feasible, load_instance};
    use crate::rational::{q, qi};
    use crate::timegrid::{release_deadline_grid, unit_grid};

    fn data(name: &str) -> Instance {
        load_instance(format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
    }

    fn one_job(r: i64, d: i64, p: i64, horizon: i64) -> Instance {
        let mut inst = data("fig1.json");
        inst.horizon = qi(horizon);
        inst.jobs = vec![Job {
            arc: "a".into(),
            r: qi(r),
            d: qi(d),
            p: qi(p),
        }];
        inst
    }

    fn zvec(grid: &Discretization, vals: &[Rational]) -> ZVector {
        let row: BTreeMap<usize, Rational> = vals.iter().cloned().enumerate().map(|(i, v)| (i + 1, v)).collect();
        ZVector {
            grid: grid.clone(),
            values: [("a".to_string(), row)].into(),
        }
    }

    #[test]
    fn projection_examples() {
        let inst = one_job(0, 4, 2, 4);
        let grid = unit_grid(&inst).unwrap();
        let z = zvec(&grid, &[q(9, 10), qi(1), q(1, 10), qi(0)]);
        let s = projection_heuristic(&inst, &grid, &z).unwrap();
        assert_eq!(s.start("a"), Some(&q(1, 10)));

        let half = zvec(&grid, &[q(1, 2), q(1, 2), q(1, 2), q(1, 2)]);
        let s = projection_heuristic(&inst, &grid, &half).unwrap();
        let t = s.start("a").unwrap();
        // f(0) = f(2) = 2 but f(1/2) = 1
        assert_eq!(projection_distance(&grid, &half, &inst.jobs[0], &qi(0)), qi(2));
        assert_eq!(projection_distance(&grid, &half, &inst.jobs[0], t), qi(1));
        assert_eq!(*t, q(1, 2));
    }

    #[test]
    fn com_examples() {
        let inst = one_job(0, 3, 2, 3);
        let grid = unit_grid(&inst).unwrap();
        let z = zvec(&grid, &[qi(1), qi(0), qi(1)]);
        assert_eq!(com_heuristic(&inst, &grid, &z).unwrap().start("a"), Some(&qi(1)));
        let zero = zvec(&grid, &[qi(0), qi(0), qi(0)]);
        assert!(com_heuristic(&inst, &grid, &zero).is_err());
        let late = zvec(&grid, &[qi(0), qi(0), qi(2)]);
        assert_eq!(com_heuristic(&inst, &grid, &late).unwrap().start("a"), Some(&qi(1)));
    }

    #[test]
    fn fixed_points_on_example1() {
        let inst = data("example1.json");
        let grid = unit_grid(&inst).unwrap();
        for t in [qi(0), q(1, 2), qi(1), q(3, 2), qi(2)] {
            let s = Schedule::from_pairs([
                ("a", t.clone()),
                ("b", qi(3)),
                ("c", qi(0)),
                ("d", qi(0)),
            ]);
            let xi = induced_xi(&inst, &grid, &s).unwrap();
            assert_eq!(projection_heuristic(&inst, &grid, &xi).unwrap(), s);
            assert_eq!(com_heuristic(&inst, &grid, &xi).unwrap(), s);
        }
    }

    #[test]
    fn pipeline_on_fig1_storage() {
        let inst = data("fig1_storage.json");
        let grid = Discretization::new(vec![qi(0), qi(1), qi(3)]).unwrap();
        let rep = heuristic_pipeline(&inst, &grid, Tau::Nodes(10)).unwrap();
        let best = rep.best.unwrap();
        assert!(best.value == qi(1) || best.value == qi(2));
        for r in &rep.runs {
            assert!(is_feasible(&inst, &r.schedule).unwrap());
            assert!(r.value <= qi(2));
        }
        let labels: Vec<&str> = rep.runs.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["CoM", "Proj", "CoM-LP10", "Proj-LP10", "CoM-FS10", "Proj-FS10"]);
    }

    #[test]
    fn pipeline_without_jobs() {
        let mut inst = data("fig1.json");
        inst.jobs.clear();
        let grid = release_deadline_grid(&inst);
        let rep = heuristic_pipeline(&inst, &grid, Tau::Nodes(5)).unwrap();
        let best = rep.best.unwrap();
        assert_eq!(best.value, qi(3));
        assert!(best.schedule.starts.is_empty());
    }
}
