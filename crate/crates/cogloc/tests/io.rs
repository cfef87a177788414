//! Input validation, scenario parsing and solution export.

use std::fs;
use std::path::{Path, PathBuf};

use cogloc::io::{
    parse_scenario, read_batch_csv, read_demand_csv, read_distance_csv, read_scenario,
    read_solution, read_warehouse_csv, write_solution, Dataset, IoError, SolutionOutput,
    FLOWS_FILE, GEOJSON_FILE, SUMMARY_FILE,
};
use cogloc_core::bnb::BnbParams;
use cogloc_core::geo::{distance_matrix, GeoPoint, Metric};
use cogloc_core::model::{
    evaluate, CardinalityMode, Customer, Scenario, Site, SiteStatus, Solution, SolverStatus,
};
use cogloc_core::pipeline::{solve_flat, PipelineError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn diagnostics(e: &IoError) -> Vec<(Option<u64>, Option<String>)> {
    e.diagnostics()
        .iter()
        .map(|d| (d.row, d.field.clone()))
        .collect()
}

const DEMAND: &str = "id,state,demand,demand_latitude,demand_longitude\n\
    c1,PA,10,40.0,-77.0\n\
    c2,PA,5.5,40.5,-76.5\n\
    c3,NJ,0,40.2,-74.5\n";

#[test]
fn reads_valid_demand() {
    let dir = TempDir::new().unwrap();
    let cs = read_demand_csv(&write(&dir, "d.csv", DEMAND)).unwrap();
    assert_eq!(cs.len(), 3);
    assert_eq!(cs[1].id, "c2");
    assert_eq!(cs[1].demand, 5.5);
    assert_eq!((cs[2].point.lat(), cs[2].point.lon()), (40.2, -74.5));
}

#[test]
fn negative_demand_names_row_and_column() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "d.csv",
        "id,state,demand,demand_latitude,demand_longitude\nc1,PA,-5,40,-77\nc2,PA,1,40,-77\n",
    );
    let e = read_demand_csv(&p).unwrap_err();
    assert_eq!(diagnostics(&e), vec![(Some(2), Some("demand".to_string()))]);
    let text = e.to_string();
    assert!(
        text.contains("d.csv") && text.contains("row 2") && text.contains("`demand`"),
        "{text}"
    );
}

#[test]
fn every_problem_is_reported_at_once() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "d.csv",
        "id,state,demand,demand_latitude,demand_longitude\n\
         c1,PA,abc,95,-77\n\
         c2,PA,1,40,-190\n\
         c1,PA,1,40,-77\n\
         ,PA,1,40,-77\n",
    );
    let e = read_demand_csv(&p).unwrap_err();
    let d = diagnostics(&e);
    assert!(d.contains(&(Some(2), Some("demand".into()))));
    assert!(d.contains(&(Some(2), Some("demand_latitude".into()))));
    assert!(d.contains(&(Some(3), Some("demand_longitude".into()))));
    assert!(d.contains(&(Some(5), Some("id".into()))));
    assert!(e.to_string().contains("outside [-90, 90]"));
}

#[test]
fn duplicate_ids_are_reported_after_row_checks() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "d.csv",
        "id,state,demand,demand_latitude,demand_longitude\nc1,PA,1,40,-77\nc1,PA,1,40,-77\n",
    );
    let e = read_demand_csv(&p).unwrap_err();
    assert_eq!(diagnostics(&e), vec![(Some(3), Some("id".to_string()))]);
    assert!(e.to_string().contains("first seen on row 2"));
}

#[test]
fn missing_columns_name_the_header() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "d.csv", "id,state,demand,lat,lon\nc1,PA,1,40,-77\n");
    let e = read_demand_csv(&p).unwrap_err();
    assert_eq!(
        diagnostics(&e),
        vec![
            (Some(1), Some("demand_latitude".into())),
            (Some(1), Some("demand_longitude".into()))
        ]
    );
}

#[test]
fn unreadable_file_names_the_path() {
    let e = read_demand_csv(Path::new("/nonexistent/demand.csv")).unwrap_err();
    assert!(e.to_string().contains("/nonexistent/demand.csv"));
}

#[test]
fn warehouse_status_and_default_fixed_cost() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "w.csv",
        "id,state,latitude,longitude,status\nw1,PA,40,-77,open\nw2,PA,41,-77,closed\nw3,NJ,40,-74,candidate\n",
    );
    let ws = read_warehouse_csv(&p).unwrap();
    assert_eq!(
        ws.iter().map(|w| w.status).collect::<Vec<_>>(),
        vec![
            SiteStatus::ExistingOpen,
            SiteStatus::ExistingClosed,
            SiteStatus::GreenfieldCandidate
        ]
    );
    assert!(ws.iter().all(|w| w.fixed_cost == 0.0));

    let p = write(&dir, "w2.csv", "id,state,latitude,longitude,status,fixed_cost\nw1,PA,40,-77,opened,5\nw2,PA,40,-77,open,\n");
    let e = read_warehouse_csv(&p).unwrap_err();
    assert_eq!(diagnostics(&e), vec![(Some(2), Some("status".into()))]);
}

#[test]
fn dataset_checks_ids_and_states_across_files() {
    let dir = TempDir::new().unwrap();
    let d = write(&dir, "d.csv", DEMAND);
    let w = write(
        &dir,
        "w.csv",
        "id,state,latitude,longitude,status\nc2,PA,40,-77,open\nw2,NY,41,-75,closed\n",
    );
    let s = write(&dir, "s.csv", "state,area_sq_miles\nPA,46054\nNJ,8723\n");
    let e = Dataset::load(&d, Some(&w), Some(&s)).unwrap_err();
    let list = e.diagnostics();
    assert_eq!(list.len(), 2);
    assert!(
        list[0].file.ends_with("w.csv")
            && list[0].row == Some(2)
            && list[0].field.as_deref() == Some("id")
    );
    assert!(list[0].message.contains("also a customer id"));
    assert!(list[1].row == Some(3) && list[1].field.as_deref() == Some("state"));

    let w = write(
        &dir,
        "w3.csv",
        "id,state,latitude,longitude,status\nw1,PA,40,-77,open\n",
    );
    let data = Dataset::load(&d, Some(&w), Some(&s)).unwrap();
    assert_eq!(
        (data.customers.len(), data.sites.len(), data.states.len()),
        (3, 1, 2)
    );
}

#[test]
fn errors_from_several_files_are_combined() {
    let dir = TempDir::new().unwrap();
    let d = write(
        &dir,
        "d.csv",
        "id,state,demand,demand_latitude,demand_longitude\nc1,PA,x,40,-77\n",
    );
    let w = write(
        &dir,
        "w.csv",
        "id,state,latitude,longitude,status\nw1,PA,40,-777,open\n",
    );
    let e = Dataset::load(&d, Some(&w), None).unwrap_err();
    let files: Vec<String> = e
        .diagnostics()
        .iter()
        .map(|d| d.file.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(files, vec!["d.csv", "w.csv"]);
}

#[test]
fn minimal_scenario_takes_defaults() {
    let f = parse_scenario("warehouse_limit=2\n", Path::new("s.txt")).unwrap();
    let mut want = Scenario::new(2);
    want.metric = Metric::Haversine;
    assert_eq!(f.scenario, want);
    assert_eq!(f.seed, None);
}

#[test]
fn full_scenario_parses() {
    let text = "# comment\n\
        warehouse_limit = 3\n\
        cardinality_mode = at_most\n\
        mad_limit = 18\n\
        mpct_fraction = 0.9\n\
        mpct_radius = 50\n\
        single_source = true\n\
        forced_open = w1, w2\n\
        forced_closed = w9\n\
        metric = planar\n\
        seed = 7\n";
    let f = parse_scenario(text, Path::new("s.txt")).unwrap();
    let s = f.scenario;
    assert_eq!(s.warehouse_limit, 3);
    assert_eq!(s.cardinality_mode, CardinalityMode::AtMost);
    assert_eq!(
        (s.mad_limit, s.mpct_fraction, s.mpct_radius),
        (Some(18.0), Some(0.9), Some(50.0))
    );
    assert!(s.single_source);
    assert_eq!(
        s.forced_open.iter().map(String::as_str).collect::<Vec<_>>(),
        vec!["w1", "w2"]
    );
    assert!(s.forced_closed.contains("w9"));
    assert_eq!(s.metric, Metric::Planar);
    assert_eq!(f.seed, Some(7));
}

#[test]
fn scenario_errors() {
    let p = Path::new("s.txt");
    let e = parse_scenario("warehouse_limit=2\nmpct_fraction=0.9\n", p).unwrap_err();
    assert_eq!(
        diagnostics(&e),
        vec![(Some(2), Some("mpct_fraction".into()))]
    );
    assert!(e.to_string().contains("requires mpct_radius"));

    let e = parse_scenario("warehouse_limit=2\nbudget=4\n", p).unwrap_err();
    assert_eq!(diagnostics(&e), vec![(Some(2), Some("budget".into()))]);

    let e = parse_scenario("mad_limit=5\n", p).unwrap_err();
    assert!(e.to_string().contains("missing required key"));

    let e = parse_scenario("warehouse_limit=1\nforced_open=a,b\n", p).unwrap_err();
    assert!(e.to_string().contains("forced"), "{e}");

    let e = parse_scenario(
        "warehouse_limit=1\nwarehouse_limit=2\nmetric=manhattan\n",
        p,
    )
    .unwrap_err();
    assert_eq!(e.diagnostics().len(), 2);
}

#[test]
fn unknown_forced_site_fails_when_bound_to_data() {
    let dir = TempDir::new().unwrap();
    let f = read_scenario(&write(
        &dir,
        "s.txt",
        "warehouse_limit=1\nforced_open=ghost\n",
    ))
    .unwrap();
    let cs = vec![Customer::new("c", GeoPoint::new(40.0, -77.0).unwrap(), 1.0, "PA").unwrap()];
    let ws = vec![Site::new(
        "w",
        GeoPoint::new(40.0, -77.0).unwrap(),
        "PA",
        SiteStatus::GreenfieldCandidate,
        0.0,
    )
    .unwrap()];
    let e = solve_flat(&cs, &ws, &f.scenario, &BnbParams::default()).unwrap_err();
    assert!(
        matches!(e, PipelineError::Formulation(_)) && e.to_string().contains("ghost"),
        "{e}"
    );
}

#[test]
fn batch_file_parses_overrides() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "b.csv",
        "name,demand_scale,warehouse_limit,forced_open,forced_closed\nbase,,,,\ngrowth,1.2,3,w1;w2,\nshrink,0.5,,,w3\n",
    );
    let b = read_batch_csv(&p).unwrap();
    assert_eq!(b.len(), 3);
    assert_eq!(b[0].overrides, Default::default());
    assert_eq!(b[1].overrides.demand_scale, Some(1.2));
    assert_eq!(b[1].overrides.warehouse_limit, Some(3));
    assert_eq!(b[1].overrides.forced_open.as_ref().unwrap().len(), 2);
    assert!(b[2]
        .overrides
        .forced_closed
        .as_ref()
        .unwrap()
        .contains("w3"));

    let p = write(&dir, "bad.csv", "name,demand_scale\nbase,0\n../x,\nbase,\n");
    let e = read_batch_csv(&p).unwrap_err();
    assert_eq!(e.diagnostics().len(), 3);
}

#[test]
fn distance_table_must_be_complete() {
    let dir = TempDir::new().unwrap();
    let cs = read_demand_csv(&write(&dir, "d.csv", DEMAND)).unwrap();
    let ws = read_warehouse_csv(&write(
        &dir,
        "w.csv",
        "id,state,latitude,longitude,status\nw1,PA,40,-77,open\n",
    ))
    .unwrap();
    let ok = write(
        &dir,
        "m.csv",
        "customer_id,site_id,distance_miles\nc1,w1,1\nc2,w1,2.5\nc3,w1,0\n",
    );
    let m = read_distance_csv(&ok, &cs, &ws).unwrap();
    assert_eq!(m.row(1), &[2.5]);
    let missing = write(
        &dir,
        "m2.csv",
        "customer_id,site_id,distance_miles\nc1,w1,1\nc2,w9,2\nc1,w1,3\n",
    );
    let e = read_distance_csv(&missing, &cs, &ws).unwrap_err();
    let text = e.to_string();
    assert!(
        text.contains("unknown site `w9`") && text.contains("no distance for (c3, w1)"),
        "{text}"
    );
}

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<Customer>, Vec<Site>, Scenario) {
    let n = rng.random_range(2..20);
    let y = rng.random_range(1..6);
    let pt = |rng: &mut ChaCha8Rng| {
        GeoPoint::new(
            rng.random_range(30.0..45.0),
            rng.random_range(-100.0..-70.0),
        )
        .unwrap()
    };
    let cs = (0..n)
        .map(|i| {
            Customer::new(format!("c{i}"), pt(rng), rng.random_range(0.0..1000.0), "S").unwrap()
        })
        .collect();
    let ws = (0..y)
        .map(|j| {
            Site::new(
                format!("w{j}"),
                pt(rng),
                "S",
                SiteStatus::GreenfieldCandidate,
                rng.random_range(0.0..1e4),
            )
            .unwrap()
        })
        .collect();
    let mut sc = Scenario::new(rng.random_range(1..=y));
    if rng.random_bool(0.5) {
        sc.mpct_radius = Some(rng.random_range(100.0..600.0));
        sc.mpct_fraction = Some(rng.random_range(0.0..0.5));
    }
    (cs, ws, sc)
}

#[test]
fn written_solutions_round_trip_through_the_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for k in 0..30 {
        let (cs, ws, sc) = random_case(&mut rng);
        let sol = solve_flat(&cs, &ws, &sc, &BnbParams::default())
            .unwrap()
            .solution;
        let dist = distance_matrix(
            &cs.iter().map(|c| c.point).collect::<Vec<_>>(),
            &ws.iter().map(|s| s.point).collect::<Vec<_>>(),
            sc.metric,
        )
        .unwrap();
        let dir = TempDir::new().unwrap();
        let out = SolutionOutput {
            solution: &sol,
            customers: &cs,
            sites: &ws,
            dist: &dist,
            seed: k,
            metric: sc.metric,
            meta: vec![],
        };
        write_solution(dir.path(), &out).unwrap();
        let back = read_solution(dir.path()).unwrap();
        assert_eq!(back.seed, Some(k));
        assert_eq!(back.metric, Some(sc.metric));
        // Shortest round-trip formatting: every value comes back bit for bit.
        assert_eq!(back.solution, sol);
        let eval = evaluate(&back.solution, &cs, &ws, &sc).unwrap();
        assert!((eval.objective - sol.objective).abs() <= 1e-9 * sol.objective.abs().max(1.0));
        for (id, (lat, lon)) in &back.opened_points {
            let s = ws.iter().find(|s| &s.id == id).unwrap();
            assert_eq!((s.point.lat(), s.point.lon()), (*lat, *lon));
        }
    }
}

#[test]
fn infeasible_solution_has_summary_but_no_flows() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join(FLOWS_FILE), "stale").unwrap();
    let cs = vec![Customer::new("c", GeoPoint::new(40.0, -77.0).unwrap(), 1.0, "PA").unwrap()];
    let ws = vec![Site::new(
        "w",
        GeoPoint::new(41.0, -77.0).unwrap(),
        "PA",
        SiteStatus::GreenfieldCandidate,
        0.0,
    )
    .unwrap()];
    let dist = distance_matrix(&[cs[0].point], &[ws[0].point], Metric::Haversine).unwrap();
    let sol = Solution::infeasible();
    let out = SolutionOutput {
        solution: &sol,
        customers: &cs,
        sites: &ws,
        dist: &dist,
        seed: 42,
        metric: Metric::Haversine,
        meta: vec![],
    };
    write_solution(dir.path(), &out).unwrap();
    let summary = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert!(summary.contains("meta,status,infeasible"));
    assert!(!dir.path().join(FLOWS_FILE).exists());
    assert_eq!(
        read_solution(dir.path()).unwrap().solution.status,
        SolverStatus::Infeasible
    );
}

#[test]
fn geojson_follows_the_format() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let (cs, ws, sc) = random_case(&mut rng);
    let sol = solve_flat(&cs, &ws, &sc, &BnbParams::default())
        .unwrap()
        .solution;
    let dist = distance_matrix(
        &cs.iter().map(|c| c.point).collect::<Vec<_>>(),
        &ws.iter().map(|s| s.point).collect::<Vec<_>>(),
        sc.metric,
    )
    .unwrap();
    let dir = TempDir::new().unwrap();
    let out = SolutionOutput {
        solution: &sol,
        customers: &cs,
        sites: &ws,
        dist: &dist,
        seed: 1,
        metric: sc.metric,
        meta: vec![],
    };
    write_solution(dir.path(), &out).unwrap();
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(GEOJSON_FILE)).unwrap()).unwrap();
    assert_eq!(doc["type"], "FeatureCollection");
    let features = doc["features"].as_array().unwrap();
    assert_eq!(features.len(), cs.len() + ws.len() + sol.flows.len());
    let position = |v: &serde_json::Value| -> (f64, f64) {
        let a = v.as_array().unwrap();
        assert_eq!(a.len(), 2);
        let (lon, lat) = (a[0].as_f64().unwrap(), a[1].as_f64().unwrap());
        assert!((-180.0..=180.0).contains(&lon) && (-90.0..=90.0).contains(&lat));
        (lon, lat)
    };
    for f in features {
        assert_eq!(f["type"], "Feature");
        let g = &f["geometry"];
        let props = f["properties"].as_object().unwrap();
        match g["type"].as_str().unwrap() {
            "Point" => {
                let (lon, lat) = position(&g["coordinates"]);
                let id = props["id"].as_str().unwrap();
                let p = cs
                    .iter()
                    .map(|c| (&c.id, c.point))
                    .chain(ws.iter().map(|s| (&s.id, s.point)))
                    .find(|(i, _)| *i == id)
                    .unwrap()
                    .1;
                assert_eq!((lon, lat), (p.lon(), p.lat()));
                assert!(
                    props.contains_key("role")
                        && props.contains_key("demand")
                        && props.contains_key("opened")
                );
            }
            "LineString" => {
                let line = g["coordinates"].as_array().unwrap();
                assert_eq!(line.len(), 2);
                line.iter().for_each(|p| {
                    position(p);
                });
                assert!(props["flow"].as_f64().unwrap() > 0.0);
            }
            other => panic!("unexpected geometry {other}"),
        }
    }
}

#[test]
fn distances_column_uses_the_supplied_matrix() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_by_two");
    let data = Dataset::load(
        &fixtures.join("demand.csv"),
        Some(&fixtures.join("warehouses.csv")),
        None,
    )
    .unwrap();
    let dist = read_distance_csv(
        &fixtures.join("distances.csv"),
        &data.customers,
        &data.sites,
    )
    .unwrap();
    assert_eq!(dist.as_slice(), &[1.0, 10.0, 10.0, 1.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn demand_rows_round_trip(rows in prop::collection::vec((0.0f64..1e9, -90.0f64..=90.0, -180.0f64..=180.0), 1..20)) {
        let dir = TempDir::new().unwrap();
        let mut text = String::from("id,state,demand,demand_latitude,demand_longitude\n");
        for (k, (d, la, lo)) in rows.iter().enumerate() {
            text.push_str(&format!("c{k},S,{d},{la},{lo}\n"));
        }
        let cs = read_demand_csv(&write(&dir, "d.csv", &text)).unwrap();
        for (c, (d, la, lo)) in cs.iter().zip(&rows) {
            prop_assert_eq!(c.demand, *d);
            prop_assert_eq!(c.point.lat(), *la);
            prop_assert_eq!(c.point.lon(), *lo);
        }
    }
}
