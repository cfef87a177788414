use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use cogloc_core::geo::{DistanceMatrix, GeoPoint};
use cogloc_core::model::{Customer, Site, SiteStatus, StateAttr};
use csv::{ReaderBuilder, StringRecord, Trim};

use super::{Diagnostic, IoError};

/// Column names of the demand file.
pub const DEMAND_COLUMNS: [&str; 5] = [
    "id",
    "state",
    "demand",
    "demand_latitude",
    "demand_longitude",
];
/// Required column names of the warehouse file; `fixed_cost` is optional.
pub const WAREHOUSE_COLUMNS: [&str; 5] = ["id", "state", "latitude", "longitude", "status"];
pub const STATE_COLUMNS: [&str; 2] = ["state", "area_sq_miles"];
pub const DISTANCE_COLUMNS: [&str; 3] = ["customer_id", "site_id", "distance_miles"];

/// A header-indexed CSV file with per-row positions.
struct Table {
    path: PathBuf,
    columns: BTreeMap<String, usize>,
    rows: Vec<(u64, StringRecord)>,
}

impl Table {
    fn open(path: &Path, required: &[&str]) -> Result<Self, IoError> {
        let mut reader = ReaderBuilder::new()
            .trim(Trim::All)
            .from_path(path)
            .map_err(|e| IoError::csv(path, e))?;
        let headers = reader.headers().map_err(|e| IoError::csv(path, e))?.clone();
        let mut diags = Vec::new();
        let mut columns = BTreeMap::new();
        for (k, h) in headers.iter().enumerate() {
            if columns.insert(h.to_string(), k).is_some() {
                diags.push(Diagnostic::new(path, Some(1), Some(h), "duplicate column"));
            }
        }
        for name in required {
            if !columns.contains_key(*name) {
                diags.push(Diagnostic::new(
                    path,
                    Some(1),
                    Some(name),
                    "missing required column",
                ));
            }
        }
        if !diags.is_empty() {
            return Err(IoError::Invalid(diags));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| IoError::csv(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.iter().all(str::is_empty) {
                continue;
            }
            rows.push((line, rec));
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    fn has(&self, column: &str) -> bool {
        self.columns.contains_key(column)
    }
}

/// Field access for one row that records problems instead of stopping.
struct Row<'a> {
    table: &'a Table,
    line: u64,
    rec: &'a StringRecord,
    diags: &'a mut Vec<Diagnostic>,
}

impl Row<'_> {
    fn raw(&self, column: &str) -> &str {
        self.table
            .columns
            .get(column)
            .and_then(|&k| self.rec.get(k))
            .unwrap_or("")
    }

    fn fail(&mut self, column: &str, message: impl Into<String>) {
        self.diags.push(Diagnostic::new(
            &self.table.path,
            Some(self.line),
            Some(column),
            message,
        ));
    }

    fn text(&mut self, column: &str) -> Option<String> {
        let v = self.raw(column).to_string();
        if v.is_empty() {
            self.fail(column, "value is empty");
            return None;
        }
        Some(v)
    }

    fn number(&mut self, column: &str) -> Option<f64> {
        let v = self.raw(column).to_string();
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Some(x),
            _ => {
                self.fail(column, format!("`{v}` is not a finite number"));
                None
            }
        }
    }

    fn ranged(&mut self, column: &str, lo: f64, hi: f64) -> Option<f64> {
        let v = self.number(column)?;
        if !(lo..=hi).contains(&v) {
            self.fail(column, format!("{v} is outside [{lo}, {hi}]"));
            return None;
        }
        Some(v)
    }

    fn non_negative(&mut self, column: &str) -> Option<f64> {
        let v = self.number(column)?;
        if v < 0.0 {
            self.fail(column, format!("{v} is negative"));
            return None;
        }
        Some(v)
    }

    fn point(&mut self, lat: &str, lon: &str) -> Option<GeoPoint> {
        let a = self.ranged(lat, -90.0, 90.0);
        let b = self.ranged(lon, -180.0, 180.0);
        GeoPoint::new(a?, b?).ok()
    }
}

fn each_row<T>(
    table: &Table,
    mut parse: impl FnMut(&mut Row) -> Option<T>,
) -> Result<Vec<(u64, T)>, IoError> {
    let mut diags = Vec::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let mut row = Row {
            table,
            line: *line,
            rec,
            diags: &mut diags,
        };
        if let Some(v) = parse(&mut row) {
            out.push((*line, v));
        }
    }
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(IoError::Invalid(diags))
    }
}

fn duplicate_ids<T>(
    path: &Path,
    items: &[(u64, T)],
    id: impl Fn(&T) -> &str,
    what: &str,
) -> Vec<Diagnostic> {
    let mut first: BTreeMap<&str, u64> = BTreeMap::new();
    let mut diags = Vec::new();
    for (line, item) in items {
        let key = id(item);
        match first.get(key) {
            Some(prev) => diags.push(Diagnostic::new(
                path,
                Some(*line),
                Some(what),
                format!("duplicate `{key}` (first seen on row {prev})"),
            )),
            None => {
                first.insert(key, *line);
            }
        }
    }
    diags
}

fn finish<T>(
    path: &Path,
    items: Vec<(u64, T)>,
    id: impl Fn(&T) -> &str,
    what: &str,
) -> Result<Vec<(u64, T)>, IoError> {
    let diags = duplicate_ids(path, &items, id, what);
    if diags.is_empty() {
        Ok(items)
    } else {
        Err(IoError::Invalid(diags))
    }
}

fn demand_rows(path: &Path) -> Result<Vec<(u64, Customer)>, IoError> {
    let table = Table::open(path, &DEMAND_COLUMNS)?;
    let items = each_row(&table, |r| {
        let id = r.text("id");
        let state = r.text("state");
        let demand = r.non_negative("demand");
        let point = r.point("demand_latitude", "demand_longitude");
        Customer::new(id?, point?, demand?, state?).ok()
    })?;
    finish(path, items, |c| c.id.as_str(), "id")
}

fn parse_status(token: &str) -> Option<SiteStatus> {
    match token.to_ascii_lowercase().as_str() {
        "open" | "existing_open" => Some(SiteStatus::ExistingOpen),
        "closed" | "existing_closed" => Some(SiteStatus::ExistingClosed),
        "candidate" | "greenfield" | "greenfield_candidate" => {
            Some(SiteStatus::GreenfieldCandidate)
        }
        _ => None,
    }
}

fn warehouse_rows(path: &Path) -> Result<Vec<(u64, Site)>, IoError> {
    let table = Table::open(path, &WAREHOUSE_COLUMNS)?;
    let with_cost = table.has("fixed_cost");
    let items = each_row(&table, |r| {
        let id = r.text("id");
        let state = r.text("state");
        let point = r.point("latitude", "longitude");
        let token = r.raw("status").to_string();
        let status = parse_status(&token);
        if status.is_none() {
            r.fail(
                "status",
                format!("unknown status `{token}`; expected open, closed or candidate"),
            );
        }
        let cost = if with_cost && !r.raw("fixed_cost").is_empty() {
            r.non_negative("fixed_cost")
        } else {
            Some(0.0)
        };
        Site::new(id?, point?, state?, status?, cost?).ok()
    })?;
    finish(path, items, |s| s.id.as_str(), "id")
}

fn state_rows(path: &Path) -> Result<Vec<(u64, StateAttr)>, IoError> {
    let table = Table::open(path, &STATE_COLUMNS)?;
    let items = each_row(&table, |r| {
        let name = r.text("state");
        let area = r.number("area_sq_miles");
        if area.is_some_and(|a| a <= 0.0) {
            r.fail("area_sq_miles", "area must be positive");
            return None;
        }
        StateAttr::new(name?, area?).ok()
    })?;
    finish(path, items, |s| s.name.as_str(), "state")
}

/// Reads customers from a demand CSV with columns
/// `id,state,demand,demand_latitude,demand_longitude`.
pub fn read_demand_csv(path: &Path) -> Result<Vec<Customer>, IoError> {
    Ok(demand_rows(path)?.into_iter().map(|(_, c)| c).collect())
}

/// Reads sites from a warehouse CSV with columns
/// `id,state,latitude,longitude,status[,fixed_cost]`. Status tokens are
/// `open`, `closed` and `candidate`; a missing or empty `fixed_cost` is 0.
pub fn read_warehouse_csv(path: &Path) -> Result<Vec<Site>, IoError> {
    Ok(warehouse_rows(path)?.into_iter().map(|(_, s)| s).collect())
}

/// Reads `state,area_sq_miles`.
pub fn read_states_csv(path: &Path) -> Result<Vec<StateAttr>, IoError> {
    Ok(state_rows(path)?.into_iter().map(|(_, s)| s).collect())
}

/// Reads an explicit distance table `customer_id,site_id,distance_miles`
/// that must cover every customer-site pair exactly once.
pub fn read_distance_csv(
    path: &Path,
    customers: &[Customer],
    sites: &[Site],
) -> Result<DistanceMatrix, IoError> {
    let table = Table::open(path, &DISTANCE_COLUMNS)?;
    let ci: BTreeMap<&str, usize> = customers
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let sj: BTreeMap<&str, usize> = sites
        .iter()
        .enumerate()
        .map(|(j, s)| (s.id.as_str(), j))
        .collect();
    let mut data = vec![f64::NAN; customers.len() * sites.len()];
    let mut seen: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut dup = Vec::new();
    let rows = each_row(&table, |r| {
        let c = r.raw("customer_id").to_string();
        let s = r.raw("site_id").to_string();
        let i = ci.get(c.as_str()).copied();
        if i.is_none() {
            r.fail("customer_id", format!("unknown customer `{c}`"));
        }
        let j = sj.get(s.as_str()).copied();
        if j.is_none() {
            r.fail("site_id", format!("unknown site `{s}`"));
        }
        let d = r.non_negative("distance_miles");
        let (i, j, d) = (i?, j?, d?);
        if let Some(prev) = seen.insert((i, j), r.line) {
            dup.push(Diagnostic::new(
                path,
                Some(r.line),
                Some("site_id"),
                format!("pair ({c}, {s}) repeats row {prev}"),
            ));
        }
        data[i * sites.len() + j] = d;
        Some(())
    });
    let mut diags = match rows {
        Ok(_) => Vec::new(),
        Err(IoError::Invalid(d)) => d,
        Err(e) => return Err(e),
    };
    diags.extend(dup);
    for (i, c) in customers.iter().enumerate() {
        for (j, s) in sites.iter().enumerate() {
            if data[i * sites.len() + j].is_nan() {
                diags.push(Diagnostic::new(
                    path,
                    None,
                    Some("distance_miles"),
                    format!("no distance for ({}, {})", c.id, s.id),
                ));
            }
        }
    }
    if !diags.is_empty() {
        return Err(IoError::Invalid(diags));
    }
    DistanceMatrix::from_row_major(customers.len(), sites.len(), data)
        .map_err(|e| IoError::single(path, None, None, e.to_string()))
}

/// Customers, sites and state attributes loaded together and checked
/// across files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub customers: Vec<Customer>,
    pub sites: Vec<Site>,
    pub states: Vec<StateAttr>,
}

impl Dataset {
    /// Loads every given file and reports all problems at once. Ids must be
    /// unique across customers and sites. With a states file, every
    /// customer and site state must be listed in it.
    pub fn load(
        demand: &Path,
        warehouses: Option<&Path>,
        states: Option<&Path>,
    ) -> Result<Self, IoError> {
        let mut diags = Vec::new();
        let customers = gather(demand_rows(demand), &mut diags)?;
        let sites = match warehouses {
            Some(p) => Some(gather(warehouse_rows(p), &mut diags)?),
            None => None,
        };
        let state_list = match states {
            Some(p) => Some(gather(state_rows(p), &mut diags)?),
            None => None,
        };

        if let Some(customers) = &customers {
            if customers.is_empty() {
                diags.push(Diagnostic::new(demand, None, None, "no customers"));
            }
            let ids: BTreeMap<&str, u64> =
                customers.iter().map(|(l, c)| (c.id.as_str(), *l)).collect();
            if let (Some(Some(sites)), Some(wpath)) = (&sites, warehouses) {
                for (line, s) in sites {
                    if let Some(row) = ids.get(s.id.as_str()) {
                        diags.push(Diagnostic::new(
                            wpath,
                            Some(*line),
                            Some("id"),
                            format!(
                                "`{}` is also a customer id ({} row {row})",
                                s.id,
                                demand.display()
                            ),
                        ));
                    }
                }
            }
        }
        if let (Some(Some(list)), Some(spath)) = (&state_list, states) {
            let names: BTreeSet<&str> = list.iter().map(|(_, s)| s.name.as_str()).collect();
            let unknown = |name: &str| !names.contains(name);
            if let Some(customers) = &customers {
                for (line, c) in customers.iter().filter(|(_, c)| unknown(&c.state)) {
                    diags.push(Diagnostic::new(
                        demand,
                        Some(*line),
                        Some("state"),
                        format!("state `{}` is not listed in {}", c.state, spath.display()),
                    ));
                }
            }
            if let (Some(Some(sites)), Some(wpath)) = (&sites, warehouses) {
                for (line, s) in sites.iter().filter(|(_, s)| unknown(&s.state)) {
                    diags.push(Diagnostic::new(
                        wpath,
                        Some(*line),
                        Some("state"),
                        format!("state `{}` is not listed in {}", s.state, spath.display()),
                    ));
                }
            }
        }
        if !diags.is_empty() {
            return Err(IoError::Invalid(diags));
        }
        Ok(Self {
            customers: customers.map(strip).unwrap_or_default(),
            sites: sites.flatten().map(strip).unwrap_or_default(),
            states: state_list.flatten().map(strip).unwrap_or_default(),
        })
    }
}

/// Moves validation problems into `diags`; other failures pass through.
fn gather<T>(r: Result<T, IoError>, diags: &mut Vec<Diagnostic>) -> Result<Option<T>, IoError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(IoError::Invalid(d)) => {
            diags.extend(d);
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn strip<T>(rows: Vec<(u64, T)>) -> Vec<T> {
    rows.into_iter().map(|(_, x)| x).collect()
}
