use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use cogloc_core::geo::Metric;
use cogloc_core::model::{CardinalityMode, Scenario};
use cogloc_core::pipeline::Overrides;

use super::{Diagnostic, IoError};

/// Keys accepted in a scenario file.
pub const SCENARIO_KEYS: [&str; 12] = [
    "warehouse_limit",
    "cardinality_mode",
    "mad_limit",
    "mpct_fraction",
    "mpct_radius",
    "single_source",
    "strict_demand",
    "total_demand_row",
    "forced_open",
    "forced_closed",
    "metric",
    "seed",
];

/// A parsed scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub seed: Option<u64>,
}

/// Reads a `key = value` scenario file. Blank lines and lines starting with
/// `#` are ignored. `warehouse_limit` is required; every other key has a
/// default. Site lists are comma separated. Forced ids are checked against
/// the data only when a solve binds the scenario.
pub fn read_scenario(path: &Path) -> Result<ScenarioFile, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::fs(path, e))?;
    parse_scenario(&text, path)
}

/// As [`read_scenario`] on in-memory text; `path` labels diagnostics.
pub fn parse_scenario(text: &str, path: &Path) -> Result<ScenarioFile, IoError> {
    let mut diags = Vec::new();
    let mut values: BTreeMap<&str, (u64, &str)> = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let row = k as u64 + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            diags.push(Diagnostic::new(
                path,
                Some(row),
                None,
                format!("expected `key = value`, found `{line}`"),
            ));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !SCENARIO_KEYS.contains(&key) {
            diags.push(Diagnostic::new(path, Some(row), Some(key), "unknown key"));
        } else if let Some((prev, _)) = values.insert(key, (row, value)) {
            diags.push(Diagnostic::new(
                path,
                Some(row),
                Some(key),
                format!("repeats row {prev}"),
            ));
        }
    }

    let mut fail = |key: &str, message: String| {
        let row = values.get(key).map(|v| v.0);
        diags.push(Diagnostic::new(path, row, Some(key), message));
    };
    fn parsed<T: std::str::FromStr>(
        values: &BTreeMap<&str, (u64, &str)>,
        key: &str,
    ) -> Option<Result<T, String>> {
        values
            .get(key)
            .map(|(_, v)| v.parse::<T>().map_err(|_| format!("cannot parse `{v}`")))
    }

    let mut scenario = Scenario::new(1);
    match parsed::<usize>(&values, "warehouse_limit") {
        Some(Ok(l)) if l >= 1 => scenario.warehouse_limit = l,
        Some(Ok(_)) => fail("warehouse_limit", "must be at least 1".into()),
        Some(Err(e)) => fail("warehouse_limit", e),
        None => fail("warehouse_limit", "missing required key".into()),
    }
    if let Some(v) = values.get("cardinality_mode") {
        match v.1.parse::<CardinalityMode>() {
            Ok(m) => scenario.cardinality_mode = m,
            Err(_) => fail(
                "cardinality_mode",
                format!("`{}` is not exact or at_most", v.1),
            ),
        }
    }
    for key in ["mad_limit", "mpct_radius"] {
        match parsed::<f64>(&values, key) {
            Some(Ok(x)) if x > 0.0 && x.is_finite() => {
                if key == "mad_limit" {
                    scenario.mad_limit = Some(x);
                } else {
                    scenario.mpct_radius = Some(x);
                }
            }
            Some(Ok(x)) => fail(key, format!("{x} must be positive miles")),
            Some(Err(e)) => fail(key, e),
            None => {}
        }
    }
    match parsed::<f64>(&values, "mpct_fraction") {
        Some(Ok(x)) if (0.0..=1.0).contains(&x) => scenario.mpct_fraction = Some(x),
        Some(Ok(x)) => fail("mpct_fraction", format!("{x} is outside [0, 1]")),
        Some(Err(e)) => fail("mpct_fraction", e),
        None => {}
    }
    if values.contains_key("mpct_fraction") && !values.contains_key("mpct_radius") {
        fail("mpct_fraction", "requires mpct_radius".into());
    }
    for key in ["single_source", "strict_demand", "total_demand_row"] {
        if let Some(v) = values.get(key) {
            match parse_bool(v.1) {
                Some(b) => match key {
                    "single_source" => scenario.single_source = b,
                    "strict_demand" => scenario.strict_demand = b,
                    _ => scenario.total_demand_row = b,
                },
                None => fail(key, format!("`{}` is not true or false", v.1)),
            }
        }
    }
    if let Some(v) = values.get("forced_open") {
        scenario.forced_open = id_list(v.1, ',');
    }
    if let Some(v) = values.get("forced_closed") {
        scenario.forced_closed = id_list(v.1, ',');
    }
    if let Some(v) = values.get("metric") {
        match v.1.parse::<Metric>() {
            Ok(m) => scenario.metric = m,
            Err(_) => fail("metric", format!("`{}` is not haversine or planar", v.1)),
        }
    }
    let seed = match parsed::<u64>(&values, "seed") {
        Some(Ok(s)) => Some(s),
        Some(Err(e)) => {
            fail("seed", e);
            None
        }
        None => None,
    };

    if diags.is_empty() {
        if let Err(e) = scenario.validate() {
            diags.push(Diagnostic::new(path, None, None, e.to_string()));
        }
    }
    if diags.is_empty() {
        Ok(ScenarioFile { scenario, seed })
    } else {
        Err(IoError::Invalid(diags))
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn id_list(v: &str, sep: char) -> BTreeSet<String> {
    v.split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// One row of a scenario batch file.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEntry {
    pub name: String,
    pub overrides: Overrides,
}

/// Reads a batch file with columns
/// `name,demand_scale,warehouse_limit,forced_open,forced_closed`. Only
/// `name` is required; empty cells leave the base scenario unchanged. Site
/// lists inside a cell are separated by `;`. Names must be unique and made
/// of letters, digits, `-`, `_` and `.`, since each names an output
/// directory.
pub fn read_batch_csv(path: &Path) -> Result<Vec<BatchEntry>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| IoError::csv(path, e))?;
    let headers = reader.headers().map_err(|e| IoError::csv(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let known = [
        "name",
        "demand_scale",
        "warehouse_limit",
        "forced_open",
        "forced_closed",
    ];
    let mut diags = Vec::new();
    for h in headers.iter().filter(|h| !known.contains(h)) {
        diags.push(Diagnostic::new(path, Some(1), Some(h), "unknown column"));
    }
    let Some(name_col) = col("name") else {
        diags.push(Diagnostic::new(
            path,
            Some(1),
            Some("name"),
            "missing required column",
        ));
        return Err(IoError::Invalid(diags));
    };
    let mut out = Vec::new();
    let mut names: BTreeMap<String, u64> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        let row = rec.position().map_or(0, |p| p.line());
        let cell = |name: &str| col(name).and_then(|k| rec.get(k)).unwrap_or("");
        let name = rec.get(name_col).unwrap_or("").to_string();
        if name.is_empty()
            || name == "."
            || name == ".."
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            diags.push(Diagnostic::new(
                path,
                Some(row),
                Some("name"),
                format!("`{name}` is not a usable directory name"),
            ));
        } else if let Some(prev) = names.insert(name.clone(), row) {
            diags.push(Diagnostic::new(
                path,
                Some(row),
                Some("name"),
                format!("`{name}` repeats row {prev}"),
            ));
        }
        let mut ov = Overrides::default();
        let scale = cell("demand_scale");
        if !scale.is_empty() {
            match scale.parse::<f64>() {
                Ok(k) if k > 0.0 && k.is_finite() => ov.demand_scale = Some(k),
                _ => diags.push(Diagnostic::new(
                    path,
                    Some(row),
                    Some("demand_scale"),
                    format!("`{scale}` is not a positive number"),
                )),
            }
        }
        let limit = cell("warehouse_limit");
        if !limit.is_empty() {
            match limit.parse::<usize>() {
                Ok(l) if l >= 1 => ov.warehouse_limit = Some(l),
                _ => diags.push(Diagnostic::new(
                    path,
                    Some(row),
                    Some("warehouse_limit"),
                    format!("`{limit}` is not a positive integer"),
                )),
            }
        }
        if !cell("forced_open").is_empty() {
            ov.forced_open = Some(id_list(cell("forced_open"), ';'));
        }
        if !cell("forced_closed").is_empty() {
            ov.forced_closed = Some(id_list(cell("forced_closed"), ';'));
        }
        out.push(BatchEntry {
            name,
            overrides: ov,
        });
    }
    if out.is_empty() {
        diags.push(Diagnostic::new(path, None, None, "no scenarios"));
    }
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(IoError::Invalid(diags))
    }
}
