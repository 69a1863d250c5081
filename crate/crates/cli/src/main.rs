use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use netmaint::bench::{self, BoundKind, BoundRecord, ReportFormat};
use netmaint::evaluator::evaluate_schedule;
use netmaint::exact::{self, DEFAULT_BUDGET};
use netmaint::heuristics::{heuristic_pipeline, Tau};
use netmaint::instance::{
    generate_instance, load_instance, load_schedule, save_instance, save_schedule, validate_instance,
};
use netmaint::milp::{solve_lp, solve_milp, Limits, MilpResult, SolveOptions, Status};
use netmaint::models::{build_ctip, build_tdip, build_tdip_lb, midpoint_schedule, Formulation};
use netmaint::timegrid::{conformal_closure, is_conformal, release_deadline_grid, unit_grid};
use netmaint::{Discretization, Error, GeneratorParams, Instance, Rational};

const CONFORMAL_MAX_POINTS: usize = 100_000;

#[derive(Parser)]
#[command(name = "netmaint", version, about = "Arc maintenance scheduling for maximum flow over time")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Time grid: rd, unit, conformal or a grid JSON file.
    #[arg(long, default_value = "rd")]
    grid: String,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Branch-and-bound node limit.
    #[arg(long)]
    node_limit: Option<u64>,
    /// Snapshot time in seconds for the -LP/-FS heuristic runs.
    #[arg(long)]
    snapshots: Option<f64>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write random instances.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of instances; with more than one, --out is a directory.
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Generator parameters as JSON (defaults otherwise).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an instance against the data rules.
    Validate { instance: PathBuf },
    /// Throughput of a schedule.
    Evaluate {
        instance: PathBuf,
        schedule: PathBuf,
        /// Write the flow solution as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive exact search (instances without storage).
    SolveExact {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u128,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continuous-time exact model.
    SolveCtip {
        instance: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Upper bounds from the time-discretized model.
    BoundUb {
        instance: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Lower bound from the binary time-discretized model on a conformal grid.
    BoundLb {
        instance: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Projection and Centre-of-Mass heuristics on TDIP vectors.
    Heur {
        instance: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Bound comparison over every instance in a directory.
    Bench {
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Failures caused by the user's input rather than by the program.
fn is_input_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<Error>(),
            Some(
                Error::InvalidInstance(_)
                    | Error::InfeasibleSchedule(_)
                    | Error::UnknownArc(_)
                    | Error::UnknownNode(_)
                    | Error::Grid(_)
                    | Error::Parse { .. }
                    | Error::RejectedStart(_)
                    | Error::InvalidArgument(_)
                    | Error::GeneratorParams(_)
            )
        ) || c.downcast_ref::<InfeasibleInput>().is_some()
    })
}

#[derive(Debug)]
struct InfeasibleInput(String);

impl std::fmt::Display for InfeasibleInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InfeasibleInput {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            if is_input_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// The error chain, leaving out causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for c in e.chain() {
        let msg = c.to_string();
        if !parts.last().is_some_and(|p| p.contains(&msg)) {
            parts.push(msg);
        }
    }
    parts.join(": ")
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn select_grid(inst: &Instance, sel: &str) -> anyhow::Result<Discretization> {
    Ok(match sel {
        "rd" => release_deadline_grid(inst),
        "unit" => unit_grid(inst)?,
        "conformal" => conformal_closure(inst, &release_deadline_grid(inst), CONFORMAL_MAX_POINTS)?,
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Error::Grid(format!("grid file {path} does not exist")).into());
            }
            Discretization::load(p)?
        }
    })
}

fn limits(c: &Common) -> anyhow::Result<Limits> {
    if c.time_limit.is_some_and(|t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("--time-limit must be positive".into()).into());
    }
    if c.node_limit == Some(0) {
        return Err(Error::InvalidArgument("--node-limit must be positive".into()).into());
    }
    Ok(Limits {
        time: c.time_limit.map(Duration::from_secs_f64),
        nodes: c.node_limit,
    })
}

fn solve_with_midpoint(f: &Formulation, inst: &Instance, limits: Limits) -> MilpResult {
    let opts = SolveOptions {
        limits,
        snapshots: Vec::new(),
        warm_start: f.warm_start(&midpoint_schedule(inst)).ok(),
    };
    solve_milp(&f.model, &opts)
}

fn opt(v: &Option<Rational>) -> Value {
    v.as_ref().map_or(Value::Null, |r| json!(r))
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Generate {
            seed,
            count,
            params,
            out,
        } => generate(seed, count, params, out),
        Command::Validate { instance } => {
            let inst = load_instance(&instance)?;
            let v = validate_instance(&inst);
            if v.is_empty() {
                println!("ok");
                Ok(())
            } else {
                for x in &v {
                    println!("{x}");
                }
                Err(Error::InvalidInstance(v).into())
            }
        }
        Command::Evaluate {
            instance,
            schedule,
            out,
        } => {
            let inst = load_instance(&instance)?;
            let sched = load_schedule(&schedule)?;
            let sol = evaluate_schedule(&inst, &sched)?;
            println!("{}", sol.value);
            if let Some(out) = out {
                write_text(&out, &serde_json::to_string_pretty(&sol)?)?;
            }
            Ok(())
        }
        Command::SolveExact {
            instance,
            budget,
            out,
        } => {
            let inst = load_instance(&instance)?;
            let (sched, value) = exact::exact_search_no_storage_with_budget(&inst, budget)?;
            if let Some(out) = out {
                save_schedule(&sched, &out)?;
            }
            print_json(&json!({ "value": value, "schedule": sched }));
            Ok(())
        }
        Command::SolveCtip { instance, common } => {
            let inst = load_instance(&instance)?;
            let f = build_ctip(&inst)?;
            let res = solve_with_midpoint(&f, &inst, limits(&common)?);
            if res.status == Status::Infeasible {
                return Err(InfeasibleInput("the model has no feasible schedule".into()).into());
            }
            let sched = f.extract_schedule(&res).ok();
            if let (Some(out), Some(s)) = (&common.out, &sched) {
                save_schedule(s, out)?;
            }
            print_json(&json!({
                "status": res.status,
                "value": opt(&res.objective),
                "bound": opt(&res.best_bound),
                "lp_bound": opt(&res.root_bound),
                "nodes": res.nodes,
                "schedule": sched,
            }));
            Ok(())
        }
        Command::BoundUb { instance, common } => {
            let inst = load_instance(&instance)?;
            let grid = select_grid(&inst, &common.grid)?;
            let f = build_tdip(&inst, &grid)?;
            let lp = solve_lp(&f.model);
            let res = solve_with_midpoint(&f, &inst, limits(&common)?);
            print_json(&json!({
                "grid": grid.points(),
                "lp_bound": opt(&lp.objective),
                "status": res.status,
                "bound": opt(&res.best_bound),
                "incumbent": opt(&res.objective),
                "nodes": res.nodes,
            }));
            Ok(())
        }
        Command::BoundLb { instance, common } => {
            let inst = load_instance(&instance)?;
            let grid = select_grid(&inst, &common.grid)?;
            let f = build_tdip_lb(&inst, &grid)?;
            let res = solve_with_midpoint(&f, &inst, limits(&common)?);
            let sched = f.extract_schedule(&res).ok();
            if let (Some(out), Some(s)) = (&common.out, &sched) {
                save_schedule(s, out)?;
            }
            let integral_unit = inst.has_integer_data()
                && unit_grid(&inst).is_ok_and(|u| u.points().iter().all(|t| grid.contains(t)));
            let note = if res.status != Status::Optimal {
                "lower bound (search stopped at a limit)"
            } else if !inst.network.has_storage() && integral_unit {
                "optimal: no storage, integer data and a grid containing every integer"
            } else {
                "lower bound"
            };
            print_json(&json!({
                "value": opt(&res.objective),
                "status": res.status,
                "bound": opt(&res.best_bound),
                "note": note,
                "schedule": sched,
            }));
            Ok(())
        }
        Command::Heur { instance, common } => {
            let inst = load_instance(&instance)?;
            let grid = select_grid(&inst, &common.grid)?;
            let rep = heuristic_pipeline(&inst, &grid, tau(&common))?;
            let runs: Vec<Value> = rep
                .runs
                .iter()
                .chain(rep.best.iter())
                .map(|r| {
                    json!({
                        "label": r.label,
                        "source": r.source.to_string(),
                        "value": r.value,
                        "schedule": r.schedule,
                    })
                })
                .collect();
            let out = json!({ "runs": runs, "skipped": rep.skipped });
            if let Some(path) = &common.out {
                write_text(path, &serde_json::to_string_pretty(&out)?)?;
            }
            print_json(&out);
            Ok(())
        }
        Command::Bench { dir, common } => run_bench(&dir, &common),
    }
}

fn tau(c: &Common) -> Tau {
    match (c.node_limit, c.snapshots) {
        (Some(n), _) => Tau::Nodes(n),
        (None, Some(s)) => Tau::Seconds(s),
        (None, None) => Tau::Seconds(300.0),
    }
}

fn generate(seed: u64, count: u64, params: Option<PathBuf>, out: Option<PathBuf>) -> anyhow::Result<()> {
    let params: GeneratorParams = match params {
        Some(p) => {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|source| Error::Parse { path: p, source })?
        }
        None => GeneratorParams::default(),
    };
    if count == 1 {
        let inst = generate_instance(seed, &params)?;
        match out {
            Some(path) => save_instance(&inst, &path)?,
            None => println!("{}", inst.to_json_string()),
        }
        return Ok(());
    }
    let Some(dir) = out else {
        bail!("--out directory is required with --count > 1");
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for k in 0..count {
        let s = seed + k;
        let inst = generate_instance(s, &params)?;
        save_instance(&inst, dir.join(format!("inst_{s:04}.json")))?;
    }
    Ok(())
}

/// `(method, kind, value, runtime, status)`.
type BenchRow = (String, BoundKind, Rational, f64, String);

/// Records one row per bound or heuristic run on one instance.
fn bench_instance(inst: &Instance, common: &Common) -> anyhow::Result<Vec<BenchRow>> {
    let lim = limits(common)?;
    let mut out = Vec::new();
    let mut grids: Vec<(&str, Discretization)> = vec![("RD", release_deadline_grid(inst))];
    if let Ok(u) = unit_grid(inst) {
        grids.push(("TI", u));
    }
    for (name, grid) in &grids {
        let f = build_tdip(inst, grid)?;
        let clock = Instant::now();
        let lp = solve_lp(&f.model);
        if let Some(v) = lp.objective {
            out.push((format!("LP-TDIP({name})"), BoundKind::Upper, v, clock.elapsed().as_secs_f64(), lp.status.to_string()));
        }
        let clock = Instant::now();
        let res = solve_with_midpoint(&f, inst, lim);
        if let Some(v) = res.best_bound {
            out.push((format!("UB-TDIP({name})"), BoundKind::Upper, v, clock.elapsed().as_secs_f64(), res.status.to_string()));
        }
    }

    let f = build_ctip(inst)?;
    let clock = Instant::now();
    let lp = solve_lp(&f.model);
    if let Some(v) = lp.objective {
        out.push(("LP-CTIP".into(), BoundKind::Upper, v, clock.elapsed().as_secs_f64(), lp.status.to_string()));
    }
    let clock = Instant::now();
    let res = solve_with_midpoint(&f, inst, lim);
    let secs = clock.elapsed().as_secs_f64();
    if let Some(v) = &res.best_bound {
        out.push(("UB-CTIP".into(), BoundKind::Upper, v.clone(), secs, res.status.to_string()));
    }
    if let Some(v) = &res.objective {
        out.push(("LB-CTIP".into(), BoundKind::Lower, v.clone(), secs, res.status.to_string()));
    }

    if let Some((_, unit)) = grids.iter().find(|(n, _)| *n == "TI") {
        if is_conformal(inst, unit) {
            let f = build_tdip_lb(inst, unit)?;
            let clock = Instant::now();
            let res = solve_with_midpoint(&f, inst, lim);
            if let Some(v) = res.objective {
                out.push(("LB1".into(), BoundKind::Lower, v, clock.elapsed().as_secs_f64(), res.status.to_string()));
            }
        }
    }

    let clock = Instant::now();
    let rep = heuristic_pipeline(inst, &grids[0].1, tau(common))?;
    let secs = clock.elapsed().as_secs_f64();
    for r in rep.runs.iter().chain(rep.best.iter()) {
        out.push((r.label.clone(), BoundKind::Lower, r.value.clone(), secs, r.source.to_string()));
    }
    Ok(out)
}

fn run_bench(dir: &Path, common: &Common) -> anyhow::Result<()> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no instance files in {}", dir.display())).into());
    }
    let mut records = Vec::new();
    for path in &paths {
        let inst = load_instance(path)?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for (method, kind, value, runtime, status) in bench_instance(&inst, common)
            .with_context(|| format!("instance {}", path.display()))?
        {
            records.push(BoundRecord {
                instance: id.clone(),
                method,
                kind,
                value,
                runtime,
                status,
            });
        }
    }
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("bench_out"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    bench::write_report(&records, ReportFormat::Csv, out.join("records.csv"))?;
    bench::write_report(&records, ReportFormat::Markdown, out.join("records.md"))?;
    let gaps = bench::record_gaps(&records)?;
    for (kind, name) in [(BoundKind::Upper, "profile_upper.csv"), (BoundKind::Lower, "profile_lower.csv")] {
        let mut by_method = std::collections::BTreeMap::new();
        for (r, g) in records.iter().zip(&gaps) {
            if r.kind == kind {
                by_method.entry(r.method.clone()).or_insert_with(Vec::new).push(g.clone());
            }
        }
        if !by_method.is_empty() {
            let curves = bench::profile_from_gaps(&by_method)?;
            write_text(&out.join(name), &bench::profile_csv(&curves))?;
        }
    }
    println!("{} records for {} instances written to {}", records.len(), paths.len(), out.display());
    Ok(())
}
