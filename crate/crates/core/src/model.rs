//! Customers, sites, scenarios and solved networks.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::geo::{distance_matrix, DistanceMatrix, GeoPoint, Metric};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("customer `{id}` has invalid demand {demand} (must be finite and >= 0)")]
    Demand { id: String, demand: f64 },
    #[error("site `{id}` has invalid fixed cost {cost} (must be finite and >= 0)")]
    FixedCost { id: String, cost: f64 },
    #[error("state `{name}` has invalid area {area} (must be finite and > 0)")]
    Area { name: String, area: f64 },
    #[error("warehouse limit must be at least 1")]
    ZeroLimit,
    #[error("site `{0}` is both forced open and forced closed")]
    ForcedConflict(String),
    #[error("{forced} sites forced open but the warehouse limit is {limit}")]
    ForcedExceedsLimit { forced: usize, limit: usize },
    #[error("mpct_fraction is set but mpct_radius is missing")]
    MpctRadiusMissing,
    #[error("mpct_fraction {0} is outside [0, 1]")]
    MpctFraction(f64),
    #[error("{field} {value} must be finite and >= 0")]
    NegativeLimit { field: &'static str, value: f64 },
    #[error("unknown customer id `{0}`")]
    UnknownCustomer(String),
    #[error("unknown site id `{0}`")]
    UnknownSite(String),
    #[error("flow {flow} from site `{site}` to customer `{customer}` is negative or not finite")]
    NegativeFlow {
        customer: String,
        site: String,
        flow: f64,
    },
    #[error("no customers or no sites to evaluate against")]
    Empty,
    #[error("unknown {what} `{token}`")]
    UnknownToken { what: &'static str, token: String },
}

/// A demand point.
#[derive(Debug, Clone, PartialEq)]
pub struct Customer {
    pub id: String,
    pub point: GeoPoint,
    /// Shipment weight or volume per period.
    pub demand: f64,
    pub state: String,
}

impl Customer {
    pub fn new(
        id: impl Into<String>,
        point: GeoPoint,
        demand: f64,
        state: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        if !(demand >= 0.0 && demand.is_finite()) {
            return Err(ModelError::Demand { id, demand });
        }
        Ok(Self {
            id,
            point,
            demand,
            state: state.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SiteStatus {
    ExistingOpen,
    ExistingClosed,
    GreenfieldCandidate,
}

impl SiteStatus {
    pub fn is_existing(self) -> bool {
        !matches!(self, SiteStatus::GreenfieldCandidate)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SiteStatus::ExistingOpen => "existing_open",
            SiteStatus::ExistingClosed => "existing_closed",
            SiteStatus::GreenfieldCandidate => "greenfield_candidate",
        }
    }
}

impl fmt::Display for SiteStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A candidate or existing warehouse.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: String,
    pub point: GeoPoint,
    pub state: String,
    pub status: SiteStatus,
    pub fixed_cost: f64,
}

impl Site {
    pub fn new(
        id: impl Into<String>,
        point: GeoPoint,
        state: impl Into<String>,
        status: SiteStatus,
        fixed_cost: f64,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        if !(fixed_cost >= 0.0 && fixed_cost.is_finite()) {
            return Err(ModelError::FixedCost {
                id,
                cost: fixed_cost,
            });
        }
        Ok(Self {
            id,
            point,
            state: state.into(),
            status,
            fixed_cost,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateAttr {
    pub name: String,
    /// Square miles.
    pub area: f64,
}

impl StateAttr {
    pub fn new(name: impl Into<String>, area: f64) -> Result<Self, ModelError> {
        let name = name.into();
        if !(area > 0.0 && area.is_finite()) {
            return Err(ModelError::Area { name, area });
        }
        Ok(Self { name, area })
    }
}

/// How the open-site count relates to `warehouse_limit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CardinalityMode {
    #[default]
    Exact,
    AtMost,
}

impl CardinalityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CardinalityMode::Exact => "exact",
            CardinalityMode::AtMost => "at_most",
        }
    }
}

impl FromStr for CardinalityMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "exact" => Ok(CardinalityMode::Exact),
            "at_most" => Ok(CardinalityMode::AtMost),
            other => Err(ModelError::UnknownToken {
                what: "cardinality_mode",
                token: other.into(),
            }),
        }
    }
}

/// Solve configuration.
///
/// The "serve X% of demand within Y miles" question maps to
/// `mpct_fraction = X / 100` and `mpct_radius = Y`. Households within the
/// radius are counted with the indicator `distance <= mpct_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub warehouse_limit: usize,
    pub cardinality_mode: CardinalityMode,
    /// Upper bound on weighted average distance, miles.
    pub mad_limit: Option<f64>,
    pub mpct_fraction: Option<f64>,
    pub mpct_radius: Option<f64>,
    /// Each customer is served by exactly one site.
    pub single_source: bool,
    /// Demand rows become equalities, forbidding over-service.
    pub strict_demand: bool,
    /// Adds the aggregate "total flow >= total demand" row. It is implied by
    /// the per-customer rows.
    pub total_demand_row: bool,
    pub forced_open: BTreeSet<String>,
    pub forced_closed: BTreeSet<String>,
    pub metric: Metric,
}

impl Scenario {
    pub fn new(warehouse_limit: usize) -> Self {
        Self {
            warehouse_limit,
            cardinality_mode: CardinalityMode::Exact,
            mad_limit: None,
            mpct_fraction: None,
            mpct_radius: None,
            single_source: false,
            strict_demand: false,
            total_demand_row: false,
            forced_open: BTreeSet::new(),
            forced_closed: BTreeSet::new(),
            metric: Metric::Haversine,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.warehouse_limit == 0 {
            return Err(ModelError::ZeroLimit);
        }
        if let Some(id) = self.forced_open.intersection(&self.forced_closed).next() {
            return Err(ModelError::ForcedConflict(id.clone()));
        }
        if self.forced_open.len() > self.warehouse_limit {
            return Err(ModelError::ForcedExceedsLimit {
                forced: self.forced_open.len(),
                limit: self.warehouse_limit,
            });
        }
        if let Some(mad) = self.mad_limit {
            if !(mad >= 0.0 && mad.is_finite()) {
                return Err(ModelError::NegativeLimit {
                    field: "mad_limit",
                    value: mad,
                });
            }
        }
        if let Some(r) = self.mpct_radius {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(ModelError::NegativeLimit {
                    field: "mpct_radius",
                    value: r,
                });
            }
        }
        if let Some(frac) = self.mpct_fraction {
            if !(0.0..=1.0).contains(&frac) {
                return Err(ModelError::MpctFraction(frac));
            }
            if self.mpct_radius.is_none() {
                return Err(ModelError::MpctRadiusMissing);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Optimal,
    Feasible,
    Infeasible,
    LimitReached,
}

impl SolverStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::Feasible => "feasible",
            SolverStatus::Infeasible => "infeasible",
            SolverStatus::LimitReached => "limit_reached",
        }
    }
}

impl FromStr for SolverStatus {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "optimal" => Ok(SolverStatus::Optimal),
            "feasible" => Ok(SolverStatus::Feasible),
            "infeasible" => Ok(SolverStatus::Infeasible),
            "limit_reached" => Ok(SolverStatus::LimitReached),
            other => Err(ModelError::UnknownToken {
                what: "solver status",
                token: other.into(),
            }),
        }
    }
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A solved (or failed) network.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolverStatus,
    pub opened: BTreeSet<String>,
    /// (customer id, site id) -> shipped weight.
    pub flows: BTreeMap<(String, String), f64>,
    pub objective: f64,
    pub transport_cost: f64,
    pub fixed_cost: f64,
    /// Weighted average distance in miles.
    pub wad: f64,
    /// Fraction of total demand shipped within `mpct_radius`, when a radius
    /// is configured.
    pub pct_within: Option<f64>,
}

impl Solution {
    pub fn infeasible() -> Self {
        Self {
            status: SolverStatus::Infeasible,
            opened: BTreeSet::new(),
            flows: BTreeMap::new(),
            objective: f64::INFINITY,
            transport_cost: f64::INFINITY,
            fixed_cost: 0.0,
            wad: f64::INFINITY,
            pct_within: None,
        }
    }

    /// True when the solution carries a network, which can also happen
    /// under a search limit.
    pub fn has_network(&self) -> bool {
        !self.opened.is_empty()
    }

    /// Total flow out of each opened site.
    pub fn served_by_site(&self) -> BTreeMap<&str, f64> {
        let mut out: BTreeMap<&str, f64> = self.opened.iter().map(|s| (s.as_str(), 0.0)).collect();
        for ((_, site), &flow) in &self.flows {
            *out.entry(site.as_str()).or_insert(0.0) += flow;
        }
        out
    }
}

/// Constraint residuals of a solution. Every field is a violation amount;
/// zero means satisfied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Residuals {
    /// Largest per-customer unmet demand.
    pub demand_shortfall: f64,
    /// Total flow in excess of demand, summed over customers. Reported, not a
    /// violation unless the scenario is strict.
    pub over_service: f64,
    /// Distance of the open-site count from the cardinality rule.
    pub cardinality: usize,
    /// Flow shipped from sites not in the opened set.
    pub closed_site_flow: f64,
    /// Miles by which the weighted average distance exceeds `mad_limit`.
    pub mad_excess: f64,
    /// Fraction by which `pct_within` falls short of `mpct_fraction`.
    pub mpct_shortfall: f64,
    pub forced_violations: usize,
    /// Customers split across more than one site in single-source mode.
    pub split_customers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub transport_cost: f64,
    pub fixed_cost: f64,
    pub total_demand: f64,
    pub wad: f64,
    pub pct_within: Option<f64>,
    pub residuals: Residuals,
}

impl Evaluation {
    /// Checks every residual against `tol`, scaled by total demand for flow
    /// quantities.
    pub fn is_feasible(&self, scenario: &Scenario, tol: f64) -> bool {
        let r = &self.residuals;
        let flow_tol = tol * self.total_demand.max(1.0);
        r.demand_shortfall <= flow_tol
            && r.cardinality == 0
            && r.closed_site_flow <= flow_tol
            && r.mad_excess <= tol * scenario.mad_limit.unwrap_or(0.0).max(1.0)
            && r.mpct_shortfall <= tol
            && r.forced_violations == 0
            && r.split_customers == 0
            && (!scenario.strict_demand || r.over_service <= flow_tol)
    }
}

/// Recomputes every metric of `solution` from first principles using the
/// scenario's metric.
pub fn evaluate(
    solution: &Solution,
    customers: &[Customer],
    sites: &[Site],
    scenario: &Scenario,
) -> Result<Evaluation, ModelError> {
    if customers.is_empty() || sites.is_empty() {
        return Err(ModelError::Empty);
    }
    let cpts: Vec<GeoPoint> = customers.iter().map(|c| c.point).collect();
    let spts: Vec<GeoPoint> = sites.iter().map(|s| s.point).collect();
    let dist = distance_matrix(&cpts, &spts, scenario.metric).map_err(|_| ModelError::Empty)?;
    evaluate_with_distances(solution, customers, sites, scenario, &dist, None)
}

/// As [`evaluate`], with caller-supplied distances and optional coverage
/// weights (row-major customer × site, each in `[0, 1]`) replacing the
/// radius indicator.
pub fn evaluate_with_distances(
    solution: &Solution,
    customers: &[Customer],
    sites: &[Site],
    scenario: &Scenario,
    dist: &DistanceMatrix,
    coverage: Option<&[f64]>,
) -> Result<Evaluation, ModelError> {
    let cidx: BTreeMap<&str, usize> = customers
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let sidx: BTreeMap<&str, usize> = sites
        .iter()
        .enumerate()
        .map(|(j, s)| (s.id.as_str(), j))
        .collect();

    let mut fixed_cost = 0.0;
    for id in &solution.opened {
        let j = *sidx
            .get(id.as_str())
            .ok_or_else(|| ModelError::UnknownSite(id.clone()))?;
        fixed_cost += sites[j].fixed_cost;
    }

    let total_demand: f64 = customers.iter().map(|c| c.demand).sum();
    let mut served = alloc::vec![0.0; customers.len()];
    let mut sources = alloc::vec![0usize; customers.len()];
    let mut transport = 0.0;
    let mut covered = 0.0;
    let mut closed_site_flow = 0.0;
    for ((cid, sid), &flow) in &solution.flows {
        let i = *cidx
            .get(cid.as_str())
            .ok_or_else(|| ModelError::UnknownCustomer(cid.clone()))?;
        let j = *sidx
            .get(sid.as_str())
            .ok_or_else(|| ModelError::UnknownSite(sid.clone()))?;
        if !(flow >= 0.0 && flow.is_finite()) {
            return Err(ModelError::NegativeFlow {
                customer: cid.clone(),
                site: sid.clone(),
                flow,
            });
        }
        let d = dist.get(i, j);
        transport += flow * d;
        served[i] += flow;
        if flow > 0.0 {
            sources[i] += 1;
        }
        if !solution.opened.contains(sid) {
            closed_site_flow += flow;
        }
        let p = match (coverage, scenario.mpct_radius) {
            (Some(cov), _) => cov[i * sites.len() + j],
            (None, Some(r)) if d <= r => 1.0,
            _ => 0.0,
        };
        covered += flow * p;
    }

    let mut demand_shortfall: f64 = 0.0;
    let mut over_service = 0.0;
    for (c, &s) in customers.iter().zip(&served) {
        demand_shortfall = demand_shortfall.max(c.demand - s);
        if s > c.demand {
            over_service += s - c.demand;
        }
    }

    let (wad, pct_within) = if total_demand > 0.0 {
        (
            transport / total_demand,
            scenario.mpct_radius.map(|_| covered / total_demand),
        )
    } else {
        (0.0, scenario.mpct_radius.map(|_| 1.0))
    };

    let opened = solution.opened.len();
    let limit = scenario.warehouse_limit;
    let cardinality = match scenario.cardinality_mode {
        CardinalityMode::Exact => opened.abs_diff(limit),
        CardinalityMode::AtMost => opened.saturating_sub(limit),
    };
    let forced_violations = scenario
        .forced_open
        .iter()
        .filter(|s| !solution.opened.contains(*s))
        .count()
        + scenario
            .forced_closed
            .iter()
            .filter(|s| solution.opened.contains(*s))
            .count();
    let split_customers = if scenario.single_source {
        sources.iter().filter(|&&n| n > 1).count()
    } else {
        0
    };

    let residuals = Residuals {
        demand_shortfall: demand_shortfall.max(0.0),
        over_service,
        cardinality,
        closed_site_flow,
        mad_excess: scenario.mad_limit.map_or(0.0, |m| (wad - m).max(0.0)),
        mpct_shortfall: match (scenario.mpct_fraction, pct_within) {
            (Some(f), Some(p)) => (f - p).max(0.0),
            _ => 0.0,
        },
        forced_violations,
        split_customers,
    };

    Ok(Evaluation {
        objective: transport + fixed_cost,
        transport_cost: transport,
        fixed_cost,
        total_demand,
        wad,
        pct_within,
        residuals,
    })
}
