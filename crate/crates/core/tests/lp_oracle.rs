//! Random LPs against the textbook simplex oracle.

use cogloc_core::formulation::{MilpProblem, Relation, VarKind};
use cogloc_core::lp::{solve_lp, BasisStatus, LpParams, LpStatus};
use cogloc_oracles::simplex::{self, RefLp, RefStatus, Rel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_lp(rng: &mut ChaCha8Rng) -> (MilpProblem, RefLp) {
    let n = rng.random_range(1..=20);
    let m = rng.random_range(1..=15);
    let mut p = MilpProblem::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut costs = Vec::new();
    for j in 0..n {
        let l = if rng.random_bool(0.3) {
            rng.random_range(-3..=2) as f64
        } else {
            0.0
        };
        let u = if rng.random_bool(0.6) {
            l + rng.random_range(1..=8) as f64
        } else {
            f64::INFINITY
        };
        let c = rng.random_range(-5.0..5.0f64);
        p.add_var(format!("x{j}"), c, l, u, VarKind::Continuous);
        lower.push(l);
        upper.push(u);
        costs.push(c);
    }
    let mut rows = Vec::new();
    for i in 0..m {
        let dense: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.6) {
                    rng.random_range(-5..=5) as f64
                } else {
                    0.0
                }
            })
            .collect();
        let (rel, rrel) = match rng.random_range(0..10) {
            0..=4 => (Relation::Le, Rel::Le),
            5..=7 => (Relation::Ge, Rel::Ge),
            _ => (Relation::Eq, Rel::Eq),
        };
        let rhs = rng.random_range(-10..=20) as f64;
        let sparse = dense
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, a)| a != 0.0)
            .collect();
        p.add_constraint(format!("r{i}"), sparse, rel, rhs);
        rows.push((dense, rrel, rhs));
    }
    (
        p,
        RefLp {
            costs,
            rows,
            lower,
            upper,
        },
    )
}

#[test]
fn random_lps_match_textbook_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let params = LpParams::default();
    let mut counts = [0usize; 3];
    for case in 0..400 {
        let (p, r) = random_lp(&mut rng);
        let ours = solve_lp(&p, &params).unwrap();
        let reference = simplex::solve(&r);
        match (ours.status, reference.status) {
            (LpStatus::Optimal, RefStatus::Optimal) => {
                counts[0] += 1;
                let scale = reference.objective.abs().max(1.0);
                assert!(
                    (ours.objective - reference.objective).abs() <= 1e-7 * scale,
                    "case {case}: {} vs {}",
                    ours.objective,
                    reference.objective
                );
                assert!(p.max_violation(&ours.values) <= 1e-7 * 20.0);
                for (j, b) in ours.basis.iter().enumerate() {
                    if *b == BasisStatus::AtUpper {
                        assert_eq!(ours.values[j], p.upper[j]);
                    }
                }
            }
            (LpStatus::Infeasible, RefStatus::Infeasible) => counts[1] += 1,
            (LpStatus::Unbounded, RefStatus::Unbounded) => counts[2] += 1,
            (a, b) => panic!("case {case}: status {a:?} vs oracle {b:?}"),
        }
    }
    eprintln!("optimal/infeasible/unbounded = {counts:?}");
    assert!(counts.iter().all(|&c| c > 10), "{counts:?}");
}

fn to_reference(p: &MilpProblem) -> RefLp {
    let n = p.num_vars();
    let rows = p
        .constraints
        .iter()
        .map(|c| {
            let mut dense = vec![0.0; n];
            for &(j, a) in &c.coeffs {
                dense[j] += a;
            }
            let rel = match c.relation {
                Relation::Le => Rel::Le,
                Relation::Ge => Rel::Ge,
                Relation::Eq => Rel::Eq,
            };
            (dense, rel, c.rhs)
        })
        .collect();
    RefLp {
        costs: p.objective.clone(),
        rows,
        lower: p.lower.clone(),
        upper: p.upper.clone(),
    }
}

/// Facility relaxations are large enough to take the row-generation path.
#[test]
fn facility_relaxations_match_textbook_simplex() {
    use cogloc_core::formulation::{build, lp_relaxation};
    use cogloc_core::geo::{distance_matrix, GeoPoint, Metric};
    use cogloc_core::model::{CardinalityMode, Customer, Scenario, Site, SiteStatus};

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let params = LpParams::default();
    for case in 0..6 {
        let (x, y) = (rng.random_range(18..=24), rng.random_range(9..=11));
        let pt = |rng: &mut ChaCha8Rng| {
            GeoPoint::new(rng.random_range(38.0..42.0), rng.random_range(-80.0..-75.0)).unwrap()
        };
        let cs: Vec<Customer> = (0..x)
            .map(|i| {
                Customer::new(
                    format!("c{i}"),
                    pt(&mut rng),
                    rng.random_range(1..20) as f64,
                    "S",
                )
                .unwrap()
            })
            .collect();
        let ss: Vec<Site> = (0..y)
            .map(|j| {
                let fixed = rng.random_range(0.0..3000.0);
                Site::new(
                    format!("w{j}"),
                    pt(&mut rng),
                    "S",
                    SiteStatus::GreenfieldCandidate,
                    fixed,
                )
                .unwrap()
            })
            .collect();
        let d = distance_matrix(
            &cs.iter().map(|c| c.point).collect::<Vec<_>>(),
            &ss.iter().map(|s| s.point).collect::<Vec<_>>(),
            Metric::Haversine,
        )
        .unwrap();
        let mut sc = Scenario::new(rng.random_range(1..=4));
        if case % 2 == 1 {
            sc.cardinality_mode = CardinalityMode::AtMost;
            sc.mad_limit = Some(rng.random_range(30.0..80.0));
            sc.mpct_fraction = Some(0.5);
            sc.mpct_radius = Some(60.0);
        }
        let p = lp_relaxation(&build(&cs, &ss, &sc, &d).unwrap());
        assert!(p.num_rows() >= 200);
        let ours = solve_lp(&p, &params).unwrap();
        let reference = simplex::solve(&to_reference(&p));
        match (ours.status, reference.status) {
            (LpStatus::Optimal, RefStatus::Optimal) => {
                let scale = reference.objective.abs().max(1.0);
                assert!(
                    (ours.objective - reference.objective).abs() <= 1e-7 * scale,
                    "case {case}: {} vs {}",
                    ours.objective,
                    reference.objective
                );
                assert!(p.max_violation(&ours.values) <= 1e-6 * scale);
            }
            (a, b) => assert_eq!(format!("{a:?}"), format!("{b:?}"), "case {case}"),
        }
    }
}
