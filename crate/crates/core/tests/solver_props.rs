//! Invariants of the formulation, evaluator, LP and branch and bound on
//! random facility instances.

mod common;

use cogloc_core::bnb::{branch, solve_milp, BnbParams, MilpStatus, Node};
use cogloc_core::formulation::{build, lp_relaxation, VarLayout};
use cogloc_core::lp::{solve_lp, solve_lp_bounded, LpParams, LpStatus};
use cogloc_core::model::{evaluate_with_distances, CardinalityMode, Scenario};
use cogloc_core::pipeline::solve_with_distances;
use cogloc_oracles::facility::nearest_assignment;
use common::{random_instance, rel_close, Instance, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SHAPE: Shape = Shape {
    max_customers: 15,
    max_sites: 6,
    max_limit: 3,
    single_source: false,
    side_constraints: true,
    heavy_fixed: false,
};

fn instances(seed: u64, count: usize, shape: Shape) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| random_instance(&mut rng, shape))
        .collect()
}

#[test]
fn variable_and_row_counts_follow_closed_form() {
    for (k, inst) in instances(10, 60, SHAPE).iter().enumerate() {
        let mut sc = inst.scenario.clone();
        sc.single_source = k % 2 == 0;
        let p = build(&inst.customers, &inst.sites, &sc, &inst.dist).unwrap();
        let (x, y) = (inst.customers.len(), inst.sites.len());
        assert_eq!(p.num_vars(), y + x * y);
        let expected = x
            + 1
            + x * y
            + usize::from(sc.mad_limit.is_some())
            + usize::from(sc.mpct_fraction.is_some())
            + sc.forced_open.len()
            + sc.forced_closed.len();
        assert_eq!(p.num_rows(), expected);
        assert_eq!(
            p.integer_vars().count(),
            if sc.single_source { y + x * y } else { y }
        );
    }
}

#[test]
fn relaxation_bounds_milp_and_contains_its_optimum() {
    let params = BnbParams::default();
    let mut checked = 0;
    for inst in instances(11, 120, SHAPE) {
        let p = build(&inst.customers, &inst.sites, &inst.scenario, &inst.dist).unwrap();
        let relaxed = lp_relaxation(&p);
        let lp = solve_lp(&relaxed, &LpParams::default()).unwrap();
        let milp = solve_milp(&p, &params).unwrap();
        if milp.status != MilpStatus::Optimal {
            continue;
        }
        checked += 1;
        assert_eq!(lp.status, LpStatus::Optimal);
        let scale = milp.objective.abs().max(1.0);
        assert!(lp.objective <= milp.objective + 1e-7 * scale);
        assert!(relaxed.max_violation(&milp.values) <= 1e-6 * scale);
        assert!(milp.objective >= milp.bound - params.rel_gap * milp.objective.abs());
        assert!(p.is_integral(&milp.values, params.int_tol));
    }
    assert!(checked >= 50, "only {checked} optimal");
}

#[test]
fn unit_fixed_costs_add_exactly_the_limit() {
    for inst in instances(12, 30, SHAPE) {
        let mut sites = inst.sites.clone();
        sites.iter_mut().for_each(|s| s.fixed_cost = 1.0);
        let mut sc = inst.scenario.clone();
        sc.cardinality_mode = CardinalityMode::Exact;
        let report = solve_with_distances(
            &inst.customers,
            &sites,
            &sc,
            &inst.dist,
            None,
            &BnbParams::default(),
        )
        .unwrap();
        if report.solution.has_network() {
            assert_eq!(report.solution.fixed_cost, sc.warehouse_limit as f64);
            assert_eq!(report.solution.opened.len(), sc.warehouse_limit);
        }
    }
}

#[test]
fn evaluator_reproduces_solver_and_certifies_feasibility() {
    let mut checked = 0;
    for shape in [
        SHAPE,
        Shape {
            single_source: true,
            ..SHAPE
        },
    ] {
        for inst in instances(13, 60, shape) {
            let report = solve_with_distances(
                &inst.customers,
                &inst.sites,
                &inst.scenario,
                &inst.dist,
                None,
                &BnbParams::default(),
            )
            .unwrap();
            let sol = &report.solution;
            if !sol.has_network() {
                continue;
            }
            checked += 1;
            let eval = evaluate_with_distances(
                sol,
                &inst.customers,
                &inst.sites,
                &inst.scenario,
                &inst.dist,
                None,
            )
            .unwrap();
            assert!(
                rel_close(eval.objective, report.milp_objective, 1e-9),
                "{} vs {}",
                eval.objective,
                report.milp_objective
            );
            assert!(
                eval.is_feasible(&inst.scenario, 1e-6),
                "{:?}",
                eval.residuals
            );
            if let Some(mad) = inst.scenario.mad_limit {
                assert!(eval.wad <= mad * (1.0 + 1e-7));
            }
            if let Some(frac) = inst.scenario.mpct_fraction {
                assert!(eval.pct_within.unwrap() >= frac - 1e-7);
            }
            for site in sol.flows.keys().map(|(_, s)| s) {
                assert!(sol.opened.contains(site));
            }
        }
    }
    assert!(checked >= 50);
}

#[test]
fn demand_is_met_with_equality_without_coverage_target() {
    let shape = Shape {
        side_constraints: false,
        ..SHAPE
    };
    for inst in instances(14, 40, shape) {
        let report = solve_with_distances(
            &inst.customers,
            &inst.sites,
            &inst.scenario,
            &inst.dist,
            None,
            &BnbParams::default(),
        )
        .unwrap();
        if !report.solution.has_network() {
            continue;
        }
        for c in &inst.customers {
            let served: f64 = report
                .solution
                .flows
                .iter()
                .filter(|((ci, _), _)| ci == &c.id)
                .map(|(_, f)| f)
                .sum();
            assert!(
                (served - c.demand).abs() <= 1e-9 * c.demand.max(1.0),
                "{} served {served}",
                c.id
            );
        }
    }
}

#[test]
fn lp_weak_duality_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for inst in instances(
        15,
        40,
        Shape {
            side_constraints: false,
            ..SHAPE
        },
    ) {
        let mut sc: Scenario = inst.scenario.clone();
        sc.forced_open.clear();
        sc.forced_closed.clear();
        let p = lp_relaxation(&build(&inst.customers, &inst.sites, &sc, &inst.dist).unwrap());
        let a = solve_lp(&p, &LpParams::default()).unwrap();
        let b = solve_lp(&p, &LpParams::default()).unwrap();
        assert_eq!(a, b);
        // Random open sets with nearest assignment are feasible points.
        let (x, y) = (inst.customers.len(), inst.sites.len());
        let layout = VarLayout::new(x, y);
        for _ in 0..10 {
            let mut open: Vec<usize> = (0..y).collect();
            while open.len() > sc.warehouse_limit {
                open.remove(rng.random_range(0..open.len()));
            }
            if sc.cardinality_mode == CardinalityMode::AtMost
                && open.len() > 1
                && rng.random_bool(0.5)
            {
                open.pop();
            }
            let (_, assign) = nearest_assignment(&inst.oracle.demand, &inst.oracle.dist, &open);
            let mut v = vec![0.0; p.num_vars()];
            for &j in &open {
                v[layout.open(j)] = 1.0;
            }
            for (i, &j) in assign.iter().enumerate() {
                v[layout.flow(i, j)] = inst.customers[i].demand;
            }
            assert!(p.max_violation(&v) <= 1e-9);
            assert!(p.objective_value(&v) >= a.objective - 1e-7 * a.objective.abs().max(1.0));
        }
    }
}

#[test]
fn children_never_beat_their_parent() {
    let params = LpParams::default();
    let mut branched = 0;
    let shape = Shape {
        heavy_fixed: true,
        ..SHAPE
    };
    for inst in instances(16, 150, shape) {
        let p = build(&inst.customers, &inst.sites, &inst.scenario, &inst.dist).unwrap();
        let root = Node::root(&p);
        let lp = solve_lp_bounded(&p, &root.lower, &root.upper, &params).unwrap();
        if lp.status != LpStatus::Optimal {
            continue;
        }
        let Some(var) = p
            .integer_vars()
            .find(|&j| (lp.values[j] - lp.values[j].round()).abs() > 1e-6)
        else {
            continue;
        };
        branched += 1;
        let (lo, hi) = branch(&root, var, lp.values[var], 1e-6).unwrap();
        for child in [lo, hi] {
            let c = solve_lp_bounded(&p, &child.lower, &child.upper, &params).unwrap();
            if c.status == LpStatus::Optimal {
                assert!(c.objective >= lp.objective - 1e-7 * lp.objective.abs().max(1.0));
            }
        }
    }
    assert!(branched >= 20, "only {branched} fractional roots");
}

#[test]
fn milp_is_deterministic() {
    for inst in instances(
        17,
        20,
        Shape {
            heavy_fixed: true,
            ..SHAPE
        },
    ) {
        let p = build(&inst.customers, &inst.sites, &inst.scenario, &inst.dist).unwrap();
        let a = solve_milp(&p, &BnbParams::default()).unwrap();
        let b = solve_milp(&p, &BnbParams::default()).unwrap();
        assert_eq!(a, b);
    }
}
