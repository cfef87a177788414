//! Orchestration: flat solves, the two-stage step-well solve, scenario
//! overrides and solution comparison.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::bnb::{solve_milp_logged, BnbError, BnbParams, MilpSolution, MilpStatus, NodeEvent};
use crate::formulation::{build_with_coverage, FormulationError, MilpProblem, VarLayout};
use crate::geo::{distance_matrix, DistanceMatrix, GeoError, GeoPoint, Metric};
use crate::model::{
    evaluate, evaluate_with_distances, CardinalityMode, Customer, ModelError, Scenario, Site,
    SiteStatus, Solution, SolverStatus, StateAttr,
};
use crate::reduction::{
    build_packets, cls_scores, generate_candidates, packet_coverage_matrix, packet_distance_matrix,
    packets_as_customers, ClsRecord, PacketSpec, ReductionError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Bnb(#[from] BnbError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("stage 1 is infeasible on {packets} packets and {candidates} candidates ({status})")]
    Stage1Infeasible {
        packets: usize,
        candidates: usize,
        status: &'static str,
    },
    #[error("demand scale must be positive and finite, got {0}")]
    DemandScale(f64),
    #[error("{0}")]
    Config(&'static str),
    #[error("solution `{0}` has no network to compare")]
    NoNetwork(&'static str),
}

/// A solved MILP together with its size and search statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Solution,
    /// Objective of the MILP incumbent (`+inf` without one).
    pub milp_objective: f64,
    pub bound: f64,
    pub nodes: usize,
    pub num_vars: usize,
    pub num_rows: usize,
}

/// Solves the full MILP over every supplied site.
pub fn solve_flat(
    customers: &[Customer],
    sites: &[Site],
    scenario: &Scenario,
    params: &BnbParams,
) -> Result<SolveReport, PipelineError> {
    let cpts: Vec<GeoPoint> = customers.iter().map(|c| c.point).collect();
    let spts: Vec<GeoPoint> = sites.iter().map(|s| s.point).collect();
    let dist = distance_matrix(&cpts, &spts, scenario.metric)?;
    solve_with_distances(customers, sites, scenario, &dist, None, params)
}

/// Solves with caller-supplied distances and optional coverage weights.
/// A greedy nearest-site network seeds the search when it is feasible.
pub fn solve_with_distances(
    customers: &[Customer],
    sites: &[Site],
    scenario: &Scenario,
    dist: &DistanceMatrix,
    coverage: Option<&[f64]>,
    params: &BnbParams,
) -> Result<SolveReport, PipelineError> {
    solve_with_distances_logged(customers, sites, scenario, dist, coverage, params, |_| {})
}

/// As [`solve_with_distances`], calling `log` once per branch-and-bound node.
pub fn solve_with_distances_logged(
    customers: &[Customer],
    sites: &[Site],
    scenario: &Scenario,
    dist: &DistanceMatrix,
    coverage: Option<&[f64]>,
    params: &BnbParams,
    log: impl FnMut(&NodeEvent),
) -> Result<SolveReport, PipelineError> {
    let problem = build_with_coverage(customers, sites, scenario, dist, coverage)?;
    let mut params = params.clone();
    if params.warm_start.is_none() {
        params.warm_start = greedy_start(&problem, customers, sites, scenario, dist);
    }
    let milp = solve_milp_logged(&problem, &params, log)?;
    let solution = extract(&milp, customers, sites, scenario, dist, coverage)?;
    Ok(SolveReport {
        solution,
        milp_objective: milp.objective,
        bound: milp.bound,
        nodes: milp.nodes_explored,
        num_vars: problem.num_vars(),
        num_rows: problem.num_rows(),
    })
}

fn nearest_cost(dist: &DistanceMatrix, customers: &[Customer], open: &[usize]) -> f64 {
    (0..customers.len())
        .map(|i| {
            customers[i].demand
                * open
                    .iter()
                    .map(|&j| dist.get(i, j))
                    .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Greedy add: start from the forced-open sites and repeatedly open the
/// site that lowers fixed plus nearest-assignment cost the most.
fn greedy_start(
    problem: &MilpProblem,
    customers: &[Customer],
    sites: &[Site],
    scenario: &Scenario,
    dist: &DistanceMatrix,
) -> Option<Vec<f64>> {
    let limit = scenario.warehouse_limit;
    let mut open: Vec<usize> = (0..sites.len())
        .filter(|&j| scenario.forced_open.contains(&sites[j].id))
        .collect();
    let allowed: Vec<usize> = (0..sites.len())
        .filter(|&j| !scenario.forced_closed.contains(&sites[j].id) && !open.contains(&j))
        .collect();
    let cost = |open: &[usize]| -> f64 {
        let fixed: f64 = open.iter().map(|&j| sites[j].fixed_cost).sum();
        if open.is_empty() {
            f64::INFINITY
        } else {
            fixed + nearest_cost(dist, customers, open)
        }
    };
    let mut current = cost(&open);
    while open.len() < limit {
        let mut best: Option<(usize, f64)> = None;
        for &j in &allowed {
            if open.contains(&j) {
                continue;
            }
            open.push(j);
            let c = cost(&open);
            open.pop();
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((j, c));
            }
        }
        let Some((j, c)) = best else { break };
        if scenario.cardinality_mode == CardinalityMode::AtMost && c >= current && !open.is_empty()
        {
            break;
        }
        open.push(j);
        current = c;
    }
    if open.is_empty() {
        return None;
    }

    let layout = VarLayout {
        customers: customers.len(),
        sites: sites.len(),
    };
    let mut x = vec![0.0; layout.num_vars()];
    for &j in &open {
        x[layout.open(j)] = 1.0;
    }
    for (i, c) in customers.iter().enumerate() {
        let j = open.iter().copied().fold(open[0], |b, j| {
            if dist.get(i, j) < dist.get(i, b) {
                j
            } else {
                b
            }
        });
        x[layout.flow(i, j)] = if scenario.single_source {
            1.0
        } else {
            c.demand
        };
    }
    let scale = customers.iter().map(|c| c.demand).sum::<f64>().max(1.0);
    (problem.max_violation(&x) <= 1e-9 * scale).then_some(x)
}

fn extract(
    milp: &MilpSolution,
    customers: &[Customer],
    sites: &[Site],
    scenario: &Scenario,
    dist: &DistanceMatrix,
    coverage: Option<&[f64]>,
) -> Result<Solution, PipelineError> {
    let status = match milp.status {
        MilpStatus::Optimal => SolverStatus::Optimal,
        MilpStatus::Feasible => SolverStatus::Feasible,
        MilpStatus::Infeasible => SolverStatus::Infeasible,
        MilpStatus::LimitReached => SolverStatus::LimitReached,
    };
    if !milp.has_incumbent() {
        return Ok(Solution {
            status,
            ..Solution::infeasible()
        });
    }
    let layout = VarLayout {
        customers: customers.len(),
        sites: sites.len(),
    };
    let x = &milp.values;
    let opened: BTreeSet<String> = (0..sites.len())
        .filter(|&j| x[layout.open(j)] > 0.5)
        .map(|j| sites[j].id.clone())
        .collect();
    let mut flows = BTreeMap::new();
    for (i, c) in customers.iter().enumerate() {
        for (j, s) in sites.iter().enumerate() {
            let v = x[layout.flow(i, j)];
            let flow = if scenario.single_source {
                if v > 0.5 {
                    c.demand
                } else {
                    0.0
                }
            } else if v > 1e-9 * c.demand.max(1.0) {
                v
            } else {
                0.0
            };
            if flow > 0.0 {
                flows.insert((c.id.clone(), s.id.clone()), flow);
            }
        }
    }
    let mut solution = Solution {
        status,
        opened,
        flows,
        objective: 0.0,
        transport_cost: 0.0,
        fixed_cost: 0.0,
        wad: 0.0,
        pct_within: None,
    };
    let eval = evaluate_with_distances(&solution, customers, sites, scenario, dist, coverage)?;
    solution.objective = eval.objective;
    solution.transport_cost = eval.transport_cost;
    solution.fixed_cost = eval.fixed_cost;
    solution.wad = eval.wad;
    solution.pct_within = eval.pct_within;
    Ok(solution)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepWellConfig {
    /// Candidates spread over all states by CLS in stage 1.
    pub coarse_total_candidates: usize,
    /// Candidates per selected state in stage 2.
    pub fine_candidates_per_state: usize,
    /// Packets for the stage-1 customers.
    pub packet_target: usize,
    pub seed: u64,
    pub bnb: BnbParams,
}

impl StepWellConfig {
    pub fn new(
        coarse_total_candidates: usize,
        fine_candidates_per_state: usize,
        packet_target: usize,
    ) -> Self {
        Self {
            coarse_total_candidates,
            fine_candidates_per_state,
            packet_target,
            seed: 42,
            bnb: BnbParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub stage1_seconds: f64,
    pub stage2_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepWellReport {
    pub cls: Vec<ClsRecord>,
    pub packets: usize,
    pub stage1_candidates: Vec<Site>,
    pub stage1: SolveReport,
    pub selected_states: BTreeSet<String>,
    pub stage2_candidates: Vec<Site>,
    pub stage2: SolveReport,
    pub timings: StageTimings,
}

/// Per-state seed so each state's clustering does not depend on which
/// other states are present.
fn state_seed(seed: u64, state: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in state.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// `count` candidates for one state. With a pool of supplied greenfield
/// sites in that state, cluster centers are snapped to their nearest pool
/// site; otherwise the centers themselves become new candidates.
fn state_candidates(
    state_customers: &[Customer],
    pool: &[&Site],
    count: usize,
    seed: u64,
    metric: Metric,
) -> Result<Vec<Site>, PipelineError> {
    if !pool.is_empty() && pool.len() <= count {
        return Ok(pool.iter().map(|s| (*s).clone()).collect());
    }
    if state_customers.is_empty() {
        return Ok(Vec::new());
    }
    let generated = generate_candidates(state_customers, count, seed)?.sites;
    if pool.is_empty() {
        return Ok(generated);
    }
    let mut picked: Vec<usize> = Vec::new();
    for g in &generated {
        let best = (0..pool.len())
            .filter(|k| !picked.contains(k))
            .map(|k| (k, metric.distance(g.point, pool[k].point)))
            .fold(None::<(usize, f64)>, |b, (k, d)| match b {
                Some((_, bd)) if bd <= d => b,
                _ => Some((k, d)),
            });
        if let Some((k, _)) = best {
            picked.push(k);
        }
    }
    picked.sort_unstable();
    Ok(picked.into_iter().map(|k| pool[k].clone()).collect())
}

/// Restricts forced sets to the ids present in `sites`.
fn scenario_for(scenario: &Scenario, sites: &[Site]) -> Scenario {
    let ids: BTreeSet<&str> = sites.iter().map(|s| s.id.as_str()).collect();
    let mut s = scenario.clone();
    s.forced_closed.retain(|id| ids.contains(id.as_str()));
    s
}

fn push_unique(out: &mut Vec<Site>, site: &Site) {
    if !out.iter().any(|s| s.id == site.id) {
        out.push(site.clone());
    }
}

/// Two-stage solve.
///
/// Stage 1 packs customers into `packet_target` packets, splits
/// `coarse_total_candidates` across states by CLS score, generates that
/// many candidates per state and solves packets × candidates using exact
/// packet distances. The states hosting opened sites (plus states of
/// forced-open sites) are selected. Stage 2 generates
/// `fine_candidates_per_state` candidates in each selected state and solves
/// raw customers × (those candidates, existing sites in selected states and
/// forced-open sites).
///
/// `sites` may mix existing sites and greenfield candidates. Greenfield
/// entries act as a pool: generated positions are snapped to the nearest
/// pool site of the same state.
pub fn step_well_solve(
    customers: &[Customer],
    states: &[StateAttr],
    sites: &[Site],
    scenario: &Scenario,
    cfg: &StepWellConfig,
) -> Result<StepWellReport, PipelineError> {
    let s1 = step_well_stage1(customers, states, sites, scenario, cfg)?;
    #[cfg(feature = "std")]
    let clock = std::time::Instant::now();

    let existing = existing_sites(sites);
    let forced = forced_sites(sites, scenario);
    let mut selected_states: BTreeSet<String> = BTreeSet::new();
    for s in &s1.candidates {
        if s1.report.solution.opened.contains(&s.id) {
            selected_states.insert(s.state.clone());
        }
    }
    for s in &forced {
        selected_states.insert(s.state.clone());
    }
    let mut stage2_candidates = Vec::new();
    for state in &selected_states {
        for s in state_candidates(
            &customers_in(customers, state),
            &pool_in(sites, state),
            cfg.fine_candidates_per_state,
            state_seed(cfg.seed, state),
            scenario.metric,
        )? {
            push_unique(&mut stage2_candidates, &s);
        }
        for s in existing.iter().filter(|s| &s.state == state) {
            push_unique(&mut stage2_candidates, s);
        }
    }
    for s in &forced {
        push_unique(&mut stage2_candidates, s);
    }
    let s2_scenario = scenario_for(scenario, &stage2_candidates);
    let cpts: Vec<GeoPoint> = customers.iter().map(|c| c.point).collect();
    let spts: Vec<GeoPoint> = stage2_candidates.iter().map(|s| s.point).collect();
    let dist = distance_matrix(&cpts, &spts, scenario.metric)?;
    let stage2 = solve_with_distances(
        customers,
        &stage2_candidates,
        &s2_scenario,
        &dist,
        None,
        &cfg.bnb,
    )?;
    #[cfg(feature = "std")]
    let stage2_seconds = clock.elapsed().as_secs_f64();
    #[cfg(not(feature = "std"))]
    let stage2_seconds = 0.0;

    Ok(StepWellReport {
        cls: s1.cls,
        packets: s1.packets,
        stage1_candidates: s1.candidates,
        stage1: s1.report,
        selected_states,
        stage2_candidates,
        stage2,
        timings: StageTimings {
            stage1_seconds: s1.seconds,
            stage2_seconds,
        },
    })
}

/// Result of the packet stage alone.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWellStage1 {
    pub cls: Vec<ClsRecord>,
    pub packets: usize,
    pub candidates: Vec<Site>,
    pub report: SolveReport,
    /// Wall time of the stage (0 without `std`).
    pub seconds: f64,
}

/// Stage 1 of [`step_well_solve`]: CLS allocation, per-state candidates,
/// packets and the packet MILP. Fails with
/// [`PipelineError::Stage1Infeasible`] when the packet MILP has no network.
pub fn step_well_stage1(
    customers: &[Customer],
    states: &[StateAttr],
    sites: &[Site],
    scenario: &Scenario,
    cfg: &StepWellConfig,
) -> Result<StepWellStage1, PipelineError> {
    if cfg.coarse_total_candidates == 0
        || cfg.fine_candidates_per_state == 0
        || cfg.packet_target == 0
    {
        return Err(PipelineError::Config("step-well counts must be at least 1"));
    }
    if customers.is_empty() {
        return Err(PipelineError::Reduction(ReductionError::NoCustomers));
    }
    scenario.validate()?;
    for id in scenario.forced_open.iter().chain(&scenario.forced_closed) {
        if !sites.iter().any(|s| &s.id == id) {
            return Err(FormulationError::UnknownForcedSite(id.clone()).into());
        }
    }
    #[cfg(feature = "std")]
    let clock = std::time::Instant::now();

    let existing = existing_sites(sites);
    let cls = cls_scores(
        states,
        customers,
        &existing,
        cfg.coarse_total_candidates,
        scenario.metric,
    )?;
    let mut candidates = Vec::new();
    for rec in &cls {
        for s in state_candidates(
            &customers_in(customers, &rec.state),
            &pool_in(sites, &rec.state),
            rec.allocation,
            state_seed(cfg.seed, &rec.state),
            scenario.metric,
        )? {
            push_unique(&mut candidates, &s);
        }
    }
    for s in forced_sites(sites, scenario) {
        push_unique(&mut candidates, s);
    }
    let packets = build_packets(
        customers,
        PacketSpec::TargetCount(cfg.packet_target),
        cfg.seed,
    )?;
    let pcust = packets_as_customers(&packets.packets);
    let pdist = packet_distance_matrix(&packets.packets, customers, &candidates, scenario.metric)?;
    let pcov = match scenario.mpct_radius {
        Some(r) => Some(packet_coverage_matrix(
            &packets.packets,
            customers,
            &candidates,
            scenario.metric,
            r,
        )?),
        None => None,
    };
    let s1_scenario = scenario_for(scenario, &candidates);
    let report = solve_with_distances(
        &pcust,
        &candidates,
        &s1_scenario,
        &pdist,
        pcov.as_deref(),
        &cfg.bnb,
    )?;
    if !report.solution.has_network() {
        return Err(PipelineError::Stage1Infeasible {
            packets: pcust.len(),
            candidates: candidates.len(),
            status: report.solution.status.as_str(),
        });
    }
    #[cfg(feature = "std")]
    let seconds = clock.elapsed().as_secs_f64();
    #[cfg(not(feature = "std"))]
    let seconds = 0.0;
    Ok(StepWellStage1 {
        cls,
        packets: pcust.len(),
        candidates,
        report,
        seconds,
    })
}

fn existing_sites(sites: &[Site]) -> Vec<Site> {
    sites
        .iter()
        .filter(|s| s.status.is_existing())
        .cloned()
        .collect()
}

fn customers_in(customers: &[Customer], state: &str) -> Vec<Customer> {
    customers
        .iter()
        .filter(|c| c.state == state)
        .cloned()
        .collect()
}

fn pool_in<'a>(sites: &'a [Site], state: &str) -> Vec<&'a Site> {
    sites
        .iter()
        .filter(|s| s.status == SiteStatus::GreenfieldCandidate && s.state == state)
        .collect()
}

fn forced_sites<'a>(sites: &'a [Site], scenario: &Scenario) -> Vec<&'a Site> {
    sites
        .iter()
        .filter(|s| scenario.forced_open.contains(&s.id))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub demand_scale: Option<f64>,
    pub forced_open: Option<BTreeSet<String>>,
    pub forced_closed: Option<BTreeSet<String>>,
    pub warehouse_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveMode {
    Flat(BnbParams),
    StepWell(StepWellConfig),
}

/// Applies `overrides` to the base data and solves. Conflicting overrides
/// are reported as errors.
pub fn run_scenario(
    customers: &[Customer],
    sites: &[Site],
    states: &[StateAttr],
    scenario: &Scenario,
    overrides: &Overrides,
    mode: &SolveMode,
) -> Result<Solution, PipelineError> {
    Ok(run_scenario_detailed(customers, sites, states, scenario, overrides, mode)?.solution)
}

/// A solved scenario with the data it was solved on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub solution: Solution,
    /// Customers after demand scaling.
    pub customers: Vec<Customer>,
    /// Sites the final solve chose from.
    pub sites: Vec<Site>,
    /// The base scenario with overrides applied.
    pub scenario: Scenario,
}

/// As [`run_scenario`], also returning the scaled customers, the candidate
/// sites of the final solve and the effective scenario.
pub fn run_scenario_detailed(
    customers: &[Customer],
    sites: &[Site],
    states: &[StateAttr],
    scenario: &Scenario,
    overrides: &Overrides,
    mode: &SolveMode,
) -> Result<ScenarioRun, PipelineError> {
    let mut scenario = scenario.clone();
    if let Some(l) = overrides.warehouse_limit {
        scenario.warehouse_limit = l;
    }
    if let Some(f) = &overrides.forced_open {
        scenario.forced_open = f.clone();
    }
    if let Some(f) = &overrides.forced_closed {
        scenario.forced_closed = f.clone();
    }
    scenario.validate()?;
    let customers: Vec<Customer> = match overrides.demand_scale {
        None => customers.to_vec(),
        Some(k) if k > 0.0 && k.is_finite() => customers
            .iter()
            .map(|c| Customer {
                demand: c.demand * k,
                ..c.clone()
            })
            .collect(),
        Some(k) => return Err(PipelineError::DemandScale(k)),
    };
    let (solution, sites) = match mode {
        SolveMode::Flat(params) => (
            solve_flat(&customers, sites, &scenario, params)?.solution,
            sites.to_vec(),
        ),
        SolveMode::StepWell(cfg) => {
            let r = step_well_solve(&customers, states, sites, &scenario, cfg)?;
            (r.stage2.solution, r.stage2_candidates)
        }
    };
    Ok(ScenarioRun {
        solution,
        customers,
        sites,
        scenario,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub wad_a: f64,
    pub wad_b: f64,
    pub wad_diff_miles: f64,
    pub opened_only_a: BTreeSet<String>,
    pub opened_only_b: BTreeSet<String>,
}

/// Weighted average distances of two networks over the same customers.
/// `sites` must contain every site either solution uses.
pub fn compare(
    a: &Solution,
    b: &Solution,
    customers: &[Customer],
    sites: &[Site],
    metric: Metric,
) -> Result<Comparison, PipelineError> {
    if !a.has_network() {
        return Err(PipelineError::NoNetwork("a"));
    }
    if !b.has_network() {
        return Err(PipelineError::NoNetwork("b"));
    }
    let mut scenario = Scenario::new(1);
    scenario.metric = metric;
    let ea = evaluate(a, customers, sites, &scenario)?;
    let eb = evaluate(b, customers, sites, &scenario)?;
    Ok(Comparison {
        wad_a: ea.wad,
        wad_b: eb.wad,
        wad_diff_miles: (ea.wad - eb.wad).abs(),
        opened_only_a: a.opened.difference(&b.opened).cloned().collect(),
        opened_only_b: b.opened.difference(&a.opened).cloned().collect(),
    })
}
