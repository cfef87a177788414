use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use cogloc_core::geo::{DistanceMatrix, Metric};
use cogloc_core::model::{Customer, Site, Solution, SolverStatus};
use cogloc_core::reduction::{ClsRecord, PacketSet};
use serde_json::{json, Value};

use super::{num, IoError};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const FLOWS_FILE: &str = "flows.csv";
pub const GEOJSON_FILE: &str = "network.geojson";

/// Everything needed to export one solved network.
#[derive(Debug, Clone)]
pub struct SolutionOutput<'a> {
    pub solution: &'a Solution,
    pub customers: &'a [Customer],
    pub sites: &'a [Site],
    /// Customer × site distances used for the `distance_miles` column.
    pub dist: &'a DistanceMatrix,
    pub seed: u64,
    pub metric: Metric,
    /// Extra `meta` rows for the summary, written in order.
    pub meta: Vec<(String, String)>,
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, IoError> {
    csv::Writer::from_path(path).map_err(|e| IoError::csv(path, e))
}

fn row<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    path: &Path,
    fields: &[&str],
) -> Result<(), IoError> {
    w.write_record(fields).map_err(|e| IoError::csv(path, e))
}

fn flush<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<(), IoError> {
    w.flush().map_err(|e| IoError::fs(path, e))
}

fn remove_stale(path: &Path) -> Result<(), IoError> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(IoError::fs(path, e)),
        _ => Ok(()),
    }
}

/// Writes `summary.csv`, `flows.csv` and `network.geojson` into `dir`.
///
/// The summary has columns `section,key,value,latitude,longitude`.
/// `meta` rows carry the status, seed and metric; `metric` rows carry the
/// objective terms, total demand, weighted average distance and
/// coverage; one `opened` row per opened site gives its served demand and
/// coordinates. A solution without a network gets only the `meta` rows and
/// no flows file.
pub fn write_solution(dir: &Path, out: &SolutionOutput) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::fs(dir, e))?;
    let sol = out.solution;
    let summary = dir.join(SUMMARY_FILE);
    let mut w = writer(&summary)?;
    row(
        &mut w,
        &summary,
        &["section", "key", "value", "latitude", "longitude"],
    )?;
    row(
        &mut w,
        &summary,
        &["meta", "status", sol.status.as_str(), "", ""],
    )?;
    row(
        &mut w,
        &summary,
        &["meta", "seed", &out.seed.to_string(), "", ""],
    )?;
    row(
        &mut w,
        &summary,
        &["meta", "metric", out.metric.as_str(), "", ""],
    )?;
    for (k, v) in &out.meta {
        row(&mut w, &summary, &["meta", k, v, "", ""])?;
    }
    let flows_path = dir.join(FLOWS_FILE);
    if !sol.has_network() {
        flush(w, &summary)?;
        remove_stale(&flows_path)?;
        return write_geojson(&dir.join(GEOJSON_FILE), out);
    }
    let total: f64 = out.customers.iter().map(|c| c.demand).sum();
    let pct = sol.pct_within.map(num).unwrap_or_default();
    for (k, v) in [
        ("objective", num(sol.objective)),
        ("transport_cost", num(sol.transport_cost)),
        ("fixed_cost", num(sol.fixed_cost)),
        ("total_demand", num(total)),
        ("wad_miles", num(sol.wad)),
        ("pct_within", pct),
        ("opened_count", sol.opened.len().to_string()),
    ] {
        row(&mut w, &summary, &["metric", k, &v, "", ""])?;
    }
    let served = sol.served_by_site();
    for s in out.sites.iter().filter(|s| sol.opened.contains(&s.id)) {
        let v = num(served.get(s.id.as_str()).copied().unwrap_or(0.0));
        row(
            &mut w,
            &summary,
            &[
                "opened",
                &s.id,
                &v,
                &num(s.point.lat()),
                &num(s.point.lon()),
            ],
        )?;
    }
    flush(w, &summary)?;

    let ci: BTreeMap<&str, usize> = out
        .customers
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let sj: BTreeMap<&str, usize> = out
        .sites
        .iter()
        .enumerate()
        .map(|(j, s)| (s.id.as_str(), j))
        .collect();
    let mut w = writer(&flows_path)?;
    row(
        &mut w,
        &flows_path,
        &["customer_id", "site_id", "flow", "distance_miles"],
    )?;
    for ((c, s), f) in &sol.flows {
        let (Some(&i), Some(&j)) = (ci.get(c.as_str()), sj.get(s.as_str())) else {
            return Err(IoError::single(
                &flows_path,
                None,
                None,
                format!("flow ({c}, {s}) references an unknown id"),
            ));
        };
        row(
            &mut w,
            &flows_path,
            &[c, s, &num(*f), &num(out.dist.get(i, j))],
        )?;
    }
    flush(w, &flows_path)?;
    write_geojson(&dir.join(GEOJSON_FILE), out)
}

fn write_geojson(path: &Path, out: &SolutionOutput) -> Result<(), IoError> {
    let sol = out.solution;
    let served = sol.served_by_site();
    let mut features: Vec<Value> = Vec::new();
    for s in out.sites {
        let opened = sol.opened.contains(&s.id);
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [s.point.lon(), s.point.lat()]},
            "properties": {
                "role": "site",
                "id": s.id,
                "status": s.status.as_str(),
                "opened": opened,
                "demand": served.get(s.id.as_str()).copied().unwrap_or(0.0),
            },
        }));
    }
    for c in out.customers {
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [c.point.lon(), c.point.lat()]},
            "properties": {"role": "customer", "id": c.id, "demand": c.demand, "opened": false},
        }));
    }
    let cp: BTreeMap<&str, &Customer> = out.customers.iter().map(|c| (c.id.as_str(), c)).collect();
    let sp: BTreeMap<&str, &Site> = out.sites.iter().map(|s| (s.id.as_str(), s)).collect();
    for ((c, s), f) in &sol.flows {
        if let (Some(c), Some(s)) = (cp.get(c.as_str()), sp.get(s.as_str())) {
            features.push(json!({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[s.point.lon(), s.point.lat()], [c.point.lon(), c.point.lat()]],
                },
                "properties": {"role": "flow", "customer_id": c.id, "site_id": s.id, "flow": f},
            }));
        }
    }
    let doc = json!({"type": "FeatureCollection", "features": features});
    let text = serde_json::to_string_pretty(&doc).map_err(|e| IoError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| IoError::fs(path, e))
}

/// A solution read back from an output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedSolution {
    pub solution: Solution,
    pub seed: Option<u64>,
    pub metric: Option<Metric>,
    /// Every `meta` row, including status, seed and metric.
    pub meta: BTreeMap<String, String>,
    /// Coordinates of opened sites as written.
    pub opened_points: BTreeMap<String, (f64, f64)>,
}

/// Reads `summary.csv` and, when present, `flows.csv` from `dir`.
pub fn read_solution(dir: &Path) -> Result<SavedSolution, IoError> {
    let summary = dir.join(SUMMARY_FILE);
    let mut r = csv::Reader::from_path(&summary).map_err(|e| IoError::csv(&summary, e))?;
    let mut sol = Solution::infeasible();
    let mut meta = BTreeMap::new();
    let mut metrics: BTreeMap<String, String> = BTreeMap::new();
    let mut opened = BTreeSet::new();
    let mut opened_points = BTreeMap::new();
    let bad = |row: u64, field: &str, v: &str| {
        IoError::single(
            &summary,
            Some(row),
            Some(field),
            format!("cannot parse `{v}`"),
        )
    };
    let float = |row: u64, field: &str, v: &str| v.parse::<f64>().map_err(|_| bad(row, field, v));
    for rec in r.records() {
        let rec = rec.map_err(|e| IoError::csv(&summary, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |k: usize| rec.get(k).unwrap_or("");
        match get(0) {
            "meta" => {
                meta.insert(get(1).to_string(), get(2).to_string());
            }
            "metric" => {
                metrics.insert(get(1).to_string(), get(2).to_string());
            }
            "opened" => {
                opened.insert(get(1).to_string());
                opened_points.insert(
                    get(1).to_string(),
                    (
                        float(line, "latitude", get(3))?,
                        float(line, "longitude", get(4))?,
                    ),
                );
            }
            other => {
                return Err(IoError::single(
                    &summary,
                    Some(line),
                    Some("section"),
                    format!("unknown section `{other}`"),
                ))
            }
        }
    }
    let status = meta.get("status").map(String::as_str).unwrap_or("");
    sol.status = status.parse::<SolverStatus>().map_err(|_| {
        IoError::single(
            &summary,
            None,
            Some("status"),
            format!("unknown status `{status}`"),
        )
    })?;
    let seed = match meta.get("seed") {
        Some(s) => Some(s.parse::<u64>().map_err(|_| bad(0, "seed", s))?),
        None => None,
    };
    let metric = match meta.get("metric") {
        Some(m) => Some(m.parse::<Metric>().map_err(|_| bad(0, "metric", m))?),
        None => None,
    };
    let metric_value = |k: &str| -> Result<Option<f64>, IoError> {
        match metrics.get(k) {
            Some(v) if !v.is_empty() => v.parse::<f64>().map(Some).map_err(|_| bad(0, k, v)),
            _ => Ok(None),
        }
    };
    if let Some(v) = metric_value("objective")? {
        sol.objective = v;
    }
    if let Some(v) = metric_value("transport_cost")? {
        sol.transport_cost = v;
    }
    if let Some(v) = metric_value("fixed_cost")? {
        sol.fixed_cost = v;
    }
    if let Some(v) = metric_value("wad_miles")? {
        sol.wad = v;
    }
    sol.pct_within = metric_value("pct_within")?;
    sol.opened = opened;

    let flows_path = dir.join(FLOWS_FILE);
    if flows_path.exists() && sol.has_network() {
        let mut r =
            csv::Reader::from_path(&flows_path).map_err(|e| IoError::csv(&flows_path, e))?;
        for rec in r.records() {
            let rec = rec.map_err(|e| IoError::csv(&flows_path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let f = rec.get(2).unwrap_or("");
            let flow = f.parse::<f64>().map_err(|_| {
                IoError::single(
                    &flows_path,
                    Some(line),
                    Some("flow"),
                    format!("cannot parse `{f}`"),
                )
            })?;
            sol.flows.insert(
                (
                    rec.get(0).unwrap_or("").to_string(),
                    rec.get(1).unwrap_or("").to_string(),
                ),
                flow,
            );
        }
    }
    Ok(SavedSolution {
        solution: sol,
        seed,
        metric,
        meta,
        opened_points,
    })
}

/// Writes CLS records with one row per state.
pub fn write_cls_csv(path: &Path, records: &[ClsRecord], seed: u64) -> Result<(), IoError> {
    let mut w = writer(path)?;
    row(
        &mut w,
        path,
        &[
            "state",
            "area_sq_miles",
            "demand",
            "density",
            "proximity_miles",
            "a_score",
            "p_score",
            "d_score",
            "cls_score",
            "allocation",
            "seed",
        ],
    )?;
    for r in records {
        row(
            &mut w,
            path,
            &[
                &r.state,
                &num(r.area),
                &num(r.demand),
                &num(r.density),
                &r.proximity_miles.map(num).unwrap_or_default(),
                &num(r.a_score),
                &num(r.p_score),
                &num(r.d_score),
                &num(r.cls_score),
                &r.allocation.to_string(),
                &seed.to_string(),
            ],
        )?;
    }
    flush(w, path)
}

/// Writes `packets.csv` (one row per packet) and `packet_members.csv`
/// (customer to packet) into `dir`.
pub fn write_packets(dir: &Path, set: &PacketSet, seed: u64) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::fs(dir, e))?;
    let path = dir.join("packets.csv");
    let mut w = writer(&path)?;
    row(
        &mut w,
        &path,
        &[
            "packet_id",
            "state",
            "latitude",
            "longitude",
            "demand",
            "members",
            "seed",
        ],
    )?;
    for p in &set.packets {
        row(
            &mut w,
            &path,
            &[
                &p.id,
                &p.state,
                &num(p.point.lat()),
                &num(p.point.lon()),
                &num(p.demand),
                &p.member_ids.len().to_string(),
                &seed.to_string(),
            ],
        )?;
    }
    flush(w, &path)?;
    let path = dir.join("packet_members.csv");
    let mut w = writer(&path)?;
    row(&mut w, &path, &["customer_id", "packet_id", "demand"])?;
    for p in &set.packets {
        for (id, d) in p.member_ids.iter().zip(&p.member_demands) {
            row(&mut w, &path, &[id, &p.id, &num(*d)])?;
        }
    }
    flush(w, &path)
}
