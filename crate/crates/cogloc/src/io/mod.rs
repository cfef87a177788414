//! File formats: input CSVs, scenario files and solution exports.
//!
//! CSV files name their coordinate columns explicitly (`latitude`,
//! `longitude`). GeoJSON output uses the format's `[longitude, latitude]`
//! order.

mod dataset;
mod output;
mod scenario;

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use dataset::{
    read_demand_csv, read_distance_csv, read_states_csv, read_warehouse_csv, Dataset,
};
pub use output::{
    read_solution, write_cls_csv, write_packets, write_solution, SavedSolution, SolutionOutput,
    FLOWS_FILE, GEOJSON_FILE, SUMMARY_FILE,
};
pub use scenario::{parse_scenario, read_batch_csv, read_scenario, BatchEntry, ScenarioFile};

/// One problem found in an input file. Rows count from 1 at the header, so
/// the first data row is row 2, as in a spreadsheet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub file: PathBuf,
    pub row: Option<u64>,
    pub field: Option<String>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(
        file: &Path,
        row: Option<u64>,
        field: Option<&str>,
        message: impl Into<String>,
    ) -> Self {
        Self {
            file: file.to_path_buf(),
            row,
            field: field.map(str::to_string),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file.display())?;
        if let Some(r) = self.row {
            write!(f, ": row {r}")?;
        }
        if let Some(c) = &self.field {
            write!(f, ", field `{c}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}", render(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("{}: {source}", path.display())]
    Fs {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl IoError {
    pub fn single(
        file: &Path,
        row: Option<u64>,
        field: Option<&str>,
        message: impl Into<String>,
    ) -> Self {
        IoError::Invalid(vec![Diagnostic::new(file, row, field, message)])
    }

    /// Diagnostics carried by a validation failure.
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            IoError::Invalid(d) => d,
            _ => &[],
        }
    }

    pub(crate) fn fs(path: &Path, source: std::io::Error) -> Self {
        IoError::Fs {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        IoError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn render(list: &[Diagnostic]) -> String {
    let mut out = format!("{} problem(s) in input", list.len());
    for d in list {
        out.push_str("\n  ");
        out.push_str(&d.to_string());
    }
    out
}

/// Shortest text that parses back to the same `f64`.
pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}
