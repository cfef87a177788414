//! Random facility instances shared by the integration tests.
#![allow(dead_code)]

use cogloc_core::geo::{distance_matrix, DistanceMatrix, GeoPoint, Metric};
use cogloc_core::model::{CardinalityMode, Customer, Scenario, Site, SiteStatus};
use cogloc_oracles::facility::{enumerate_optimum, nearest_assignment, FacilityInstance};
use rand::Rng;

pub struct Instance {
    pub customers: Vec<Customer>,
    pub sites: Vec<Site>,
    pub scenario: Scenario,
    pub dist: DistanceMatrix,
    pub oracle: FacilityInstance,
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_customers: usize,
    pub max_sites: usize,
    pub max_limit: usize,
    pub single_source: bool,
    pub side_constraints: bool,
    /// Always draw large fixed costs; makes relaxations fractional.
    pub heavy_fixed: bool,
}

pub fn random_point(rng: &mut impl Rng) -> GeoPoint {
    GeoPoint::new(rng.random_range(38.0..42.0), rng.random_range(-80.0..-75.0)).unwrap()
}

pub fn random_instance(rng: &mut impl Rng, shape: Shape) -> Instance {
    let x = rng.random_range(1..=shape.max_customers);
    let y = rng.random_range(1..=shape.max_sites);
    let limit = rng.random_range(1..=shape.max_limit.min(y));
    let customers: Vec<Customer> = (0..x)
        .map(|i| {
            let demand = if rng.random_bool(0.05) {
                0.0
            } else {
                rng.random_range(1..=20) as f64
            };
            Customer::new(format!("c{i}"), random_point(rng), demand, "S").unwrap()
        })
        .collect();
    let with_fixed = shape.heavy_fixed || rng.random_bool(0.3);
    let fixed_hi = if shape.heavy_fixed { 20_000.0 } else { 500.0 };
    let sites: Vec<Site> = (0..y)
        .map(|j| {
            let fixed = if with_fixed {
                rng.random_range(0.0..fixed_hi)
            } else {
                0.0
            };
            Site::new(
                format!("w{j}"),
                random_point(rng),
                "S",
                SiteStatus::GreenfieldCandidate,
                fixed,
            )
            .unwrap()
        })
        .collect();
    let cpts: Vec<GeoPoint> = customers.iter().map(|c| c.point).collect();
    let spts: Vec<GeoPoint> = sites.iter().map(|s| s.point).collect();
    let dist = distance_matrix(&cpts, &spts, Metric::Haversine).unwrap();

    let mut scenario = Scenario::new(limit);
    scenario.single_source = shape.single_source;
    if shape.heavy_fixed || rng.random_bool(0.3) {
        scenario.cardinality_mode = CardinalityMode::AtMost;
    }
    if y >= 3 && rng.random_bool(0.2) {
        scenario
            .forced_open
            .insert(format!("w{}", rng.random_range(0..y)));
    }
    if y >= 3 && rng.random_bool(0.2) {
        let j = rng.random_range(0..y);
        if !scenario.forced_open.contains(&format!("w{j}")) {
            scenario.forced_closed.insert(format!("w{j}"));
        }
    }

    let mut oracle = oracle_instance(&customers, &sites, &scenario, &dist);
    if shape.side_constraints {
        calibrate(rng, &mut scenario, &oracle);
        oracle = oracle_instance(&customers, &sites, &scenario, &dist);
    }
    Instance {
        customers,
        sites,
        scenario,
        dist,
        oracle,
    }
}

/// Sets MAD and MPCT limits around what the unconstrained optimum achieves,
/// so they bind often without making most instances infeasible.
fn calibrate(rng: &mut impl Rng, scenario: &mut Scenario, inst: &FacilityInstance) {
    let Some(best) = enumerate_optimum(inst) else {
        return;
    };
    let (cost, assign) = nearest_assignment(&inst.demand, &inst.dist, &best.open);
    let total: f64 = inst.demand.iter().sum();
    if total <= 0.0 {
        return;
    }
    if rng.random_bool(0.6) {
        scenario.mad_limit = Some((cost / total).max(1.0) * rng.random_range(0.7..1.3));
    }
    if rng.random_bool(0.6) {
        let radius = rng.random_range(15.0..90.0);
        let covered: f64 = (0..inst.demand.len())
            .filter(|&i| inst.dist[i][assign[i]] <= radius)
            .map(|i| inst.demand[i])
            .sum();
        let frac = (covered / total * rng.random_range(0.8..1.15)).clamp(0.05, 1.0);
        scenario.mpct_fraction = Some(frac);
        scenario.mpct_radius = Some(radius);
    }
}

pub fn oracle_instance(
    customers: &[Customer],
    sites: &[Site],
    scenario: &Scenario,
    dist: &DistanceMatrix,
) -> FacilityInstance {
    let index = |id: &String| sites.iter().position(|s| &s.id == id).unwrap();
    FacilityInstance {
        demand: customers.iter().map(|c| c.demand).collect(),
        fixed_cost: sites.iter().map(|s| s.fixed_cost).collect(),
        dist: (0..customers.len()).map(|i| dist.row(i).to_vec()).collect(),
        limit: scenario.warehouse_limit,
        exact: scenario.cardinality_mode == CardinalityMode::Exact,
        mad: scenario.mad_limit,
        mpct: scenario
            .mpct_fraction
            .map(|f| (f, scenario.mpct_radius.unwrap())),
        single_source: scenario.single_source,
        strict: scenario.strict_demand,
        forced_open: scenario.forced_open.iter().map(index).collect(),
        forced_closed: scenario.forced_closed.iter().map(index).collect(),
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
