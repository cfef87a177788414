//! Command-line front end.
//!
//! Exit codes: 0 success, 1 infeasible, 2 input error, 3 solver limit.
//! Human-readable summaries go to standard output, diagnostics to standard
//! error, machine-readable results to `--out`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use cogloc_core::bnb::BnbParams;
use cogloc_core::cog::{centroid_seed, weiszfeld};
use cogloc_core::formulation::build;
use cogloc_core::geo::{distance_matrix, DistanceMatrix, GeoPoint, Metric};
use cogloc_core::model::{Customer, Scenario, Site, SiteStatus, SolverStatus};
use cogloc_core::pipeline::{
    compare, run_scenario_detailed, solve_with_distances_logged, step_well_solve, PipelineError,
    ScenarioRun, SolveMode, StepWellConfig,
};
use cogloc_core::reduction::{build_packets, cls_scores, PacketSpec};

use crate::io::{
    read_batch_csv, read_demand_csv, read_distance_csv, read_scenario, read_solution,
    write_cls_csv, write_packets, write_solution, Dataset, IoError, SolutionOutput,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_LIMIT: i32 = 3;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Parser, Debug)]
#[command(
    name = "cogloc",
    version,
    about = "Center-of-gravity warehouse location"
)]
pub struct Cli {
    /// Log progress to standard error; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the full MILP over every site in the warehouse file.
    Solve(SolveArgs),
    /// Two-stage solve: packets over CLS-allocated candidates, then raw
    /// customers over candidates in the selected states.
    Stepwell(StepwellArgs),
    /// Print CLS scores and per-state candidate allocations.
    Cls(ClsArgs),
    /// Aggregate customers into demand packets.
    Packets(PacketsArgs),
    /// Continuous single-facility center of gravity (Weiszfeld).
    Cog(CogArgs),
    /// Solve a batch of scenario overrides.
    Scenario(ScenarioArgs),
    /// Compare two solution directories on the same customers.
    Compare(CompareArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Demand CSV with columns id,state,demand,demand_latitude,demand_longitude.
    #[arg(long, value_name = "CSV")]
    pub demand: Option<PathBuf>,
    /// Warehouse CSV with columns id,state,latitude,longitude,status[,fixed_cost];
    /// status is open, closed or candidate.
    #[arg(long, value_name = "CSV")]
    pub warehouses: Option<PathBuf>,
    /// State CSV with columns state,area_sq_miles.
    #[arg(long, value_name = "CSV")]
    pub states: Option<PathBuf>,
    /// Scenario file of `key = value` lines.
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
    /// Directory for machine-readable results.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Random seed; defaults to the scenario file's seed, else 42.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Distance metric (haversine or planar); overrides the scenario file.
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<Metric>,
    /// Number of customer packets.
    #[arg(long, default_value_t = 150)]
    pub packet_target: usize,
    /// Wall-clock limit in seconds for each branch-and-bound run. Results
    /// that hit it are not reproducible.
    #[arg(long, value_name = "SECONDS")]
    pub time_limit: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of warehouses; overrides the scenario file.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Explicit distances, CSV customer_id,site_id,distance_miles covering every pair.
    #[arg(long, value_name = "CSV")]
    pub distances: Option<PathBuf>,
    /// Write one line per branch-and-bound node to this file.
    #[arg(long, value_name = "FILE")]
    pub node_log: Option<PathBuf>,
    /// Write the MILP in LP text format to this file.
    #[arg(long, value_name = "FILE")]
    pub lp: Option<PathBuf>,
    /// Maximum branch-and-bound nodes.
    #[arg(long, default_value_t = 1_000_000)]
    pub node_limit: usize,
}

#[derive(Args, Debug)]
pub struct StepwellArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of warehouses; overrides the scenario file.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Stage-1 candidates in total, split across states by CLS score.
    #[arg(long, default_value_t = 20)]
    pub coarse: usize,
    /// Stage-2 candidates per selected state.
    #[arg(long, default_value_t = 5)]
    pub fine: usize,
}

#[derive(Args, Debug)]
pub struct ClsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Candidates to apportion across states.
    #[arg(long)]
    pub total: usize,
}

#[derive(Args, Debug)]
pub struct PacketsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Group customers within this many miles of a seed customer instead of
    /// clustering to --packet-target packets.
    #[arg(long, value_name = "MILES")]
    pub radius: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CogArgs {
    #[command(flatten)]
    pub common: Common,
    /// Stop when a step moves less than this many degrees, or the gradient
    /// norm over total demand falls below it.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// Maximum Weiszfeld steps.
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
}

#[derive(Args, Debug)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub common: Common,
    /// Batch CSV with columns name,demand_scale,warehouse_limit,forced_open,forced_closed.
    #[arg(long, value_name = "CSV")]
    pub batch: PathBuf,
    /// Scenarios solved at the same time.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Number of warehouses; overrides the scenario file.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Solve each scenario with the two-stage method.
    #[arg(long)]
    pub stepwell: bool,
    /// Stage-1 candidates in total (with --stepwell).
    #[arg(long, default_value_t = 20)]
    pub coarse: usize,
    /// Stage-2 candidates per selected state (with --stepwell).
    #[arg(long, default_value_t = 5)]
    pub fine: usize,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// First solution directory.
    #[arg(long, value_name = "DIR")]
    pub a: PathBuf,
    /// Second solution directory.
    #[arg(long, value_name = "DIR")]
    pub b: PathBuf,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse::<Metric>().map_err(|e| e.to_string())
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<&PipelineError> for Failure {
    fn from(e: &PipelineError) -> Self {
        let code = match e {
            PipelineError::Stage1Infeasible { .. } => EXIT_INFEASIBLE,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::from(&e)
    }
}

fn status_code(status: SolverStatus) -> i32 {
    match status {
        SolverStatus::Optimal => EXIT_OK,
        SolverStatus::Infeasible => EXIT_INFEASIBLE,
        SolverStatus::Feasible | SolverStatus::LimitReached => EXIT_LIMIT,
    }
}

/// Parses `args`, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    let mut stdout = std::io::stdout().lock();
    match run(cli.command, &mut stdout) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Runs one command, writing the summary to `out`.
pub fn run(command: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Solve(a) => solve(a, out),
        Command::Stepwell(a) => stepwell(a, out),
        Command::Cls(a) => cls(a, out),
        Command::Packets(a) => packets(a, out),
        Command::Cog(a) => cog(a, out),
        Command::Scenario(a) => scenario_batch(a, out),
        Command::Compare(a) => compare_dirs(a, out),
    }
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments) -> Result<(), Failure> {
    out.write_fmt(text)
        .map_err(|e| Failure::input(format!("cannot write to standard output: {e}")))
}

macro_rules! say {
    ($out:expr, $($t:tt)*) => { say($out, format_args!($($t)*)) };
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    path.as_deref()
        .ok_or_else(|| Failure::input(format!("--{flag} is required")))
}

/// Checks the shared numeric flags before any file is read.
fn check_common(c: &Common) -> Result<(), Failure> {
    if c.time_limit.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
        return Err(Failure::input(
            "--time-limit must be a positive number of seconds",
        ));
    }
    if c.packet_target == 0 {
        return Err(Failure::input("--packet-target must be at least 1"));
    }
    Ok(())
}

/// Scenario from the file (or a default with `limit`), with the metric and
/// limit flags applied, plus the effective seed.
fn load_scenario(
    c: &Common,
    limit: Option<usize>,
    need_limit: bool,
) -> Result<(Scenario, u64), Failure> {
    let (mut scenario, file_seed) = match &c.scenario {
        Some(p) => {
            let f = read_scenario(p)?;
            (f.scenario, f.seed)
        }
        None => match limit {
            Some(_) => (Scenario::new(1), None),
            None if need_limit => {
                return Err(Failure::input(
                    "give --limit or a --scenario file with warehouse_limit",
                ))
            }
            None => (Scenario::new(1), None),
        },
    };
    if let Some(l) = limit {
        if l == 0 {
            return Err(Failure::input("--limit must be at least 1"));
        }
        scenario.warehouse_limit = l;
    }
    if let Some(m) = c.metric {
        scenario.metric = m;
    }
    scenario
        .validate()
        .map_err(|e| Failure::input(e.to_string()))?;
    Ok((scenario, c.seed.or(file_seed).unwrap_or(DEFAULT_SEED)))
}

fn bnb_params(c: &Common) -> BnbParams {
    BnbParams {
        time_limit: c.time_limit,
        ..BnbParams::default()
    }
}

fn points<T>(items: &[T], f: impl Fn(&T) -> GeoPoint) -> Vec<GeoPoint> {
    items.iter().map(f).collect()
}

fn matrix(
    customers: &[Customer],
    sites: &[Site],
    metric: Metric,
) -> Result<DistanceMatrix, Failure> {
    distance_matrix(
        &points(customers, |c| c.point),
        &points(sites, |s| s.point),
        metric,
    )
    .map_err(|e| Failure::input(e.to_string()))
}

fn print_solution(out: &mut dyn Write, run: &ScenarioRun, seed: u64) -> Result<(), Failure> {
    let sol = &run.solution;
    say!(out, "status: {}\n", sol.status)?;
    if sol.has_network() {
        say!(out, "objective: {}\n", sol.objective)?;
        say!(out, "transport_cost: {}\n", sol.transport_cost)?;
        say!(out, "fixed_cost: {}\n", sol.fixed_cost)?;
        say!(out, "wad_miles: {}\n", sol.wad)?;
        if let Some(p) = sol.pct_within {
            say!(out, "pct_within: {p}\n")?;
        }
        let ids: Vec<&str> = sol.opened.iter().map(String::as_str).collect();
        say!(out, "opened: {}\n", ids.join(", "))?;
    }
    say!(out, "seed: {seed}\n")
}

fn solve(a: SolveArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let c = &a.common;
    check_common(c)?;
    if a.node_limit == 0 {
        return Err(Failure::input("--node-limit must be at least 1"));
    }
    let (scenario, seed) = load_scenario(c, a.limit, true)?;
    let data = Dataset::load(
        require(&c.demand, "demand")?,
        Some(require(&c.warehouses, "warehouses")?),
        c.states.as_deref(),
    )?;
    if data.sites.is_empty() {
        return Err(Failure::input("the warehouse file lists no sites"));
    }
    let dist = match &a.distances {
        Some(p) => read_distance_csv(p, &data.customers, &data.sites)?,
        None => matrix(&data.customers, &data.sites, scenario.metric)?,
    };
    if let Some(p) = &a.lp {
        let problem = build(&data.customers, &data.sites, &scenario, &dist)
            .map_err(|e| Failure::input(e.to_string()))?;
        fs::write(p, problem.to_lp_format()).map_err(|e| {
            Failure::from(IoError::Fs {
                path: p.clone(),
                source: e,
            })
        })?;
    }
    let params = BnbParams {
        node_limit: a.node_limit,
        ..bnb_params(c)
    };
    let mut log_lines = String::new();
    let keep_log = a.node_log.is_some();
    let report = solve_with_distances_logged(
        &data.customers,
        &data.sites,
        &scenario,
        &dist,
        None,
        &params,
        |ev| {
            if keep_log {
                log_lines.push_str(&ev.to_string());
                log_lines.push('\n');
            }
        },
    )?;
    if let Some(p) = &a.node_log {
        fs::write(p, &log_lines).map_err(|e| {
            Failure::from(IoError::Fs {
                path: p.clone(),
                source: e,
            })
        })?;
    }
    log::info!(
        "{} nodes, {} variables, {} rows",
        report.nodes,
        report.num_vars,
        report.num_rows
    );
    let run = ScenarioRun {
        solution: report.solution,
        customers: data.customers,
        sites: data.sites,
        scenario,
    };
    print_solution(out, &run, seed)?;
    if let Some(dir) = &c.out {
        let meta = vec![
            ("command".to_string(), "solve".to_string()),
            ("bound".to_string(), report.bound.to_string()),
            ("nodes".to_string(), report.nodes.to_string()),
            ("num_vars".to_string(), report.num_vars.to_string()),
            ("num_rows".to_string(), report.num_rows.to_string()),
        ];
        write_run(dir, &run, &dist, seed, meta)?;
    }
    Ok(status_code(run.solution.status))
}

fn write_run(
    dir: &Path,
    run: &ScenarioRun,
    dist: &DistanceMatrix,
    seed: u64,
    meta: Vec<(String, String)>,
) -> Result<(), Failure> {
    let output = SolutionOutput {
        solution: &run.solution,
        customers: &run.customers,
        sites: &run.sites,
        dist,
        seed,
        metric: run.scenario.metric,
        meta,
    };
    Ok(write_solution(dir, &output)?)
}

fn stepwell_config(c: &Common, coarse: usize, fine: usize, seed: u64) -> StepWellConfig {
    let mut cfg = StepWellConfig::new(coarse, fine, c.packet_target);
    cfg.seed = seed;
    cfg.bnb = bnb_params(c);
    cfg
}

fn write_sites(
    path: &Path,
    sites: &[Site],
    opened: &std::collections::BTreeSet<String>,
) -> Result<(), Failure> {
    let fail = |e: csv::Error| {
        Failure::from(IoError::Csv {
            path: path.to_path_buf(),
            source: e,
        })
    };
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(["id", "state", "latitude", "longitude", "status", "opened"])
        .map_err(fail)?;
    for s in sites {
        let open = if opened.contains(&s.id) {
            "true"
        } else {
            "false"
        };
        w.write_record([
            &s.id,
            &s.state,
            &s.point.lat().to_string(),
            &s.point.lon().to_string(),
            s.status.as_str(),
            open,
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| {
        Failure::from(IoError::Fs {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn stepwell(a: StepwellArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let c = &a.common;
    check_common(c)?;
    if a.coarse == 0 || a.fine == 0 {
        return Err(Failure::input("--coarse and --fine must be at least 1"));
    }
    let (scenario, seed) = load_scenario(c, a.limit, true)?;
    let data = Dataset::load(
        require(&c.demand, "demand")?,
        c.warehouses.as_deref(),
        Some(require(&c.states, "states")?),
    )?;
    let cfg = stepwell_config(c, a.coarse, a.fine, seed);
    let r = step_well_solve(&data.customers, &data.states, &data.sites, &scenario, &cfg)?;
    log::info!(
        "stage 1 {:.3}s, stage 2 {:.3}s",
        r.timings.stage1_seconds,
        r.timings.stage2_seconds
    );
    let states: Vec<&str> = r.selected_states.iter().map(String::as_str).collect();
    say!(out, "packets: {}\n", r.packets)?;
    say!(out, "stage1_candidates: {}\n", r.stage1_candidates.len())?;
    say!(out, "stage1_objective: {}\n", r.stage1.solution.objective)?;
    say!(out, "selected_states: {}\n", states.join(", "))?;
    say!(out, "stage2_candidates: {}\n", r.stage2_candidates.len())?;
    let run = ScenarioRun {
        solution: r.stage2.solution.clone(),
        customers: data.customers,
        sites: r.stage2_candidates.clone(),
        scenario,
    };
    print_solution(out, &run, seed)?;
    if let Some(dir) = &c.out {
        let dist = matrix(&run.customers, &run.sites, run.scenario.metric)?;
        let meta = vec![
            ("command".to_string(), "stepwell".to_string()),
            ("packets".to_string(), r.packets.to_string()),
            (
                "stage1_objective".to_string(),
                r.stage1.solution.objective.to_string(),
            ),
            ("stage1_num_vars".to_string(), r.stage1.num_vars.to_string()),
            ("stage2_num_vars".to_string(), r.stage2.num_vars.to_string()),
            ("selected_states".to_string(), states.join(";")),
        ];
        write_run(dir, &run, &dist, seed, meta)?;
        write_cls_csv(&dir.join("cls.csv"), &r.cls, seed)?;
        write_sites(
            &dir.join("stage1_candidates.csv"),
            &r.stage1_candidates,
            &r.stage1.solution.opened,
        )?;
        write_sites(
            &dir.join("stage2_candidates.csv"),
            &r.stage2_candidates,
            &r.stage2.solution.opened,
        )?;
    }
    Ok(status_code(run.solution.status))
}

fn cls(a: ClsArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let c = &a.common;
    check_common(c)?;
    let (scenario, seed) = load_scenario(c, None, false)?;
    let data = Dataset::load(
        require(&c.demand, "demand")?,
        c.warehouses.as_deref(),
        Some(require(&c.states, "states")?),
    )?;
    let existing: Vec<Site> = data
        .sites
        .iter()
        .filter(|s| s.status.is_existing())
        .cloned()
        .collect();
    let records = cls_scores(
        &data.states,
        &data.customers,
        &existing,
        a.total,
        scenario.metric,
    )
    .map_err(|e| Failure::input(e.to_string()))?;
    say!(out, "state,a_score,p_score,d_score,cls_score,allocation\n")?;
    for r in &records {
        say!(
            out,
            "{},{:.4},{:.4},{:.4},{:.4},{}\n",
            r.state,
            r.a_score,
            r.p_score,
            r.d_score,
            r.cls_score,
            r.allocation
        )?;
    }
    say!(
        out,
        "total: {}\n",
        records.iter().map(|r| r.allocation).sum::<usize>()
    )?;
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir).map_err(|e| {
            Failure::from(IoError::Fs {
                path: dir.clone(),
                source: e,
            })
        })?;
        write_cls_csv(&dir.join("cls.csv"), &records, seed)?;
    }
    Ok(EXIT_OK)
}

fn packets(a: PacketsArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let c = &a.common;
    check_common(c)?;
    let (_, seed) = load_scenario(c, None, false)?;
    let customers = read_demand_csv(require(&c.demand, "demand")?)?;
    let spec = match a.radius {
        Some(r) if r > 0.0 && r.is_finite() => PacketSpec::Radius(r),
        Some(_) => {
            return Err(Failure::input(
                "--radius must be a positive number of miles",
            ))
        }
        None => PacketSpec::TargetCount(c.packet_target),
    };
    let set = build_packets(&customers, spec, seed).map_err(|e| Failure::input(e.to_string()))?;
    say!(out, "customers: {}\n", customers.len())?;
    say!(out, "packets: {}\n", set.packets.len())?;
    if set.clamped {
        say!(out, "note: fewer distinct locations than --packet-target\n")?;
    }
    say!(out, "seed: {seed}\n")?;
    if let Some(dir) = &c.out {
        write_packets(dir, &set, seed)?;
    }
    Ok(EXIT_OK)
}

fn cog(a: CogArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let c = &a.common;
    check_common(c)?;
    if !(a.tol > 0.0) {
        return Err(Failure::input("--tol must be positive"));
    }
    let customers = read_demand_csv(require(&c.demand, "demand")?)?;
    let seed_point = centroid_seed(&customers).map_err(|e| Failure::input(e.to_string()))?;
    let r = weiszfeld(&customers, seed_point, a.tol, a.max_iters)
        .map_err(|e| Failure::input(e.to_string()))?;
    let rows = [
        ("latitude", r.point.lat().to_string()),
        ("longitude", r.point.lon().to_string()),
        ("objective_miles", r.objective_miles().to_string()),
        ("iterations", r.iterations.to_string()),
        ("converged", r.converged.to_string()),
        ("grad_norm", r.grad_norm.to_string()),
        (
            "at_customer",
            r.at_customer
                .map(|i| customers[i].id.clone())
                .unwrap_or_default(),
        ),
    ];
    for (k, v) in &rows {
        say!(out, "{k}: {v}\n")?;
    }
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir).map_err(|e| {
            Failure::from(IoError::Fs {
                path: dir.clone(),
                source: e,
            })
        })?;
        let path = dir.join("cog.csv");
        let mut text = String::from("key,value\n");
        for (k, v) in &rows {
            text.push_str(&format!("{k},{v}\n"));
        }
        fs::write(&path, text).map_err(|e| Failure::from(IoError::Fs { path, source: e }))?;
    }
    Ok(if r.converged { EXIT_OK } else { EXIT_LIMIT })
}

fn scenario_batch(a: ScenarioArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let c = &a.common;
    check_common(c)?;
    if a.jobs == 0 {
        return Err(Failure::input("--jobs must be at least 1"));
    }
    let (base, seed) = load_scenario(c, a.limit, true)?;
    let entries = read_batch_csv(&a.batch)?;
    let data = if a.stepwell {
        Dataset::load(
            require(&c.demand, "demand")?,
            c.warehouses.as_deref(),
            Some(require(&c.states, "states")?),
        )?
    } else {
        Dataset::load(
            require(&c.demand, "demand")?,
            Some(require(&c.warehouses, "warehouses")?),
            c.states.as_deref(),
        )?
    };
    let mode = if a.stepwell {
        SolveMode::StepWell(stepwell_config(c, a.coarse, a.fine, seed))
    } else {
        SolveMode::Flat(bnb_params(c))
    };

    let results: Mutex<BTreeMap<usize, Result<ScenarioRun, PipelineError>>> =
        Mutex::new(BTreeMap::new());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..a.jobs.min(entries.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(e) = entries.get(k) else { break };
                let r = run_scenario_detailed(
                    &data.customers,
                    &data.sites,
                    &data.states,
                    &base,
                    &e.overrides,
                    &mode,
                );
                results
                    .lock()
                    .expect("no worker panics while holding the lock")
                    .insert(k, r);
            });
        }
    });
    let results = results.into_inner().expect("workers finished");

    let mut code = EXIT_OK;
    let rank = |c: i32| match c {
        EXIT_INPUT => 3,
        EXIT_LIMIT => 2,
        EXIT_INFEASIBLE => 1,
        _ => 0,
    };
    let mut table = String::from("name,status,objective,wad_miles,opened\n");
    say!(out, "name,status,objective,wad_miles,opened\n")?;
    for (k, e) in entries.iter().enumerate() {
        let this = match &results[&k] {
            Ok(run) => {
                let sol = &run.solution;
                let ids: Vec<&str> = sol.opened.iter().map(String::as_str).collect();
                let (obj, wad) = if sol.has_network() {
                    (sol.objective.to_string(), sol.wad.to_string())
                } else {
                    (String::new(), String::new())
                };
                let line = format!(
                    "{},{},{},{},{}\n",
                    e.name,
                    sol.status,
                    obj,
                    wad,
                    ids.join(";")
                );
                say!(out, "{line}")?;
                table.push_str(&line);
                if let Some(dir) = &c.out {
                    let dist = matrix(&run.customers, &run.sites, run.scenario.metric)?;
                    let meta = vec![
                        ("command".to_string(), "scenario".to_string()),
                        ("scenario".to_string(), e.name.clone()),
                    ];
                    write_run(&dir.join(&e.name), run, &dist, seed, meta)?;
                }
                status_code(sol.status)
            }
            Err(err) => {
                let f = Failure::from(err);
                eprintln!("error: scenario `{}`: {}", e.name, f.message);
                let line = format!("{},error,,,\n", e.name);
                say!(out, "{line}")?;
                table.push_str(&line);
                f.code
            }
        };
        if rank(this) > rank(code) {
            code = this;
        }
    }
    say!(out, "seed: {seed}\n")?;
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir).map_err(|e| {
            Failure::from(IoError::Fs {
                path: dir.clone(),
                source: e,
            })
        })?;
        let path = dir.join("scenarios.csv");
        fs::write(&path, table).map_err(|e| Failure::from(IoError::Fs { path, source: e }))?;
    }
    Ok(code)
}

fn compare_dirs(a: CompareArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let c = &a.common;
    check_common(c)?;
    let customers = read_demand_csv(require(&c.demand, "demand")?)?;
    let sa = read_solution(&a.a)?;
    let sb = read_solution(&a.b)?;
    let metric = c.metric.or(sa.metric).unwrap_or(Metric::Haversine);
    let mut sites: BTreeMap<String, Site> = BTreeMap::new();
    for saved in [&sa, &sb] {
        for (id, &(lat, lon)) in &saved.opened_points {
            let p =
                GeoPoint::new(lat, lon).map_err(|e| Failure::input(format!("site `{id}`: {e}")))?;
            let site = Site::new(id.clone(), p, "", SiteStatus::GreenfieldCandidate, 0.0)
                .map_err(|e| Failure::input(e.to_string()))?;
            if let Some(prev) = sites.get(id) {
                if prev.point != site.point {
                    return Err(Failure::input(format!(
                        "site `{id}` has different coordinates in the two solutions"
                    )));
                }
            }
            sites.insert(id.clone(), site);
        }
    }
    let sites: Vec<Site> = sites.into_values().collect();
    let cmp = compare(&sa.solution, &sb.solution, &customers, &sites, metric)?;
    let join = |s: &std::collections::BTreeSet<String>| {
        s.iter().map(String::as_str).collect::<Vec<_>>().join(";")
    };
    let rows = [
        ("wad_a_miles", cmp.wad_a.to_string()),
        ("wad_b_miles", cmp.wad_b.to_string()),
        ("wad_diff_miles", cmp.wad_diff_miles.to_string()),
        ("opened_only_a", join(&cmp.opened_only_a)),
        ("opened_only_b", join(&cmp.opened_only_b)),
    ];
    for (k, v) in &rows {
        say!(out, "{k}: {v}\n")?;
    }
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir).map_err(|e| {
            Failure::from(IoError::Fs {
                path: dir.clone(),
                source: e,
            })
        })?;
        let path = dir.join("comparison.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| {
            Failure::from(IoError::Csv {
                path: path.clone(),
                source: e,
            })
        })?;
        let mut put = |r: [&str; 2]| {
            w.write_record(r).map_err(|e| {
                Failure::from(IoError::Csv {
                    path: path.clone(),
                    source: e,
                })
            })
        };
        put(["key", "value"])?;
        for (k, v) in &rows {
            put([k, v])?;
        }
        w.flush().map_err(|e| {
            Failure::from(IoError::Fs {
                path: path.clone(),
                source: e,
            })
        })?;
    }
    Ok(EXIT_OK)
}
