//! Distance primitives.
//!
//! Two metrics are provided. [`Metric::Haversine`] is the great-circle
//! distance on a sphere of radius [`EARTH_RADIUS_MILES`] and is the default
//! everywhere. [`Metric::Planar`] is a local equirectangular projection
//! (longitude scaled by the cosine of the mean latitude, then
//! [`MILES_PER_DEGREE`]) and matches the Euclidean cost surface used by the
//! continuous center-of-gravity gradient.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::math;

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MILES: f64 = 3958.8;

/// Miles per degree of latitude used by the planar projection.
pub const MILES_PER_DEGREE: f64 = 69.17;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {0} is outside [-90, 90] or not finite")]
    Latitude(f64),
    #[error("longitude {0} is outside [-180, 180] or not finite")]
    Longitude(f64),
    #[error("distance matrix needs at least one customer and one site")]
    EmptyInput,
    #[error("distance matrix entry ({row}, {col}) is negative or not finite: {value}")]
    BadEntry { row: usize, col: usize, value: f64 },
    #[error("distance matrix data has {got} entries, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("unknown metric `{0}` (expected `haversine` or `planar`)")]
    UnknownMetric(alloc::string::String),
}

/// A validated latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Longitude(lon));
        }
        Ok(Self { lat, lon })
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Weighted arithmetic mean of latitude and longitude. Every centroid in
    /// this crate is computed this way. `None` when the total weight is not
    /// positive.
    pub fn weighted_mean<I>(items: I) -> Option<GeoPoint>
    where
        I: IntoIterator<Item = (GeoPoint, f64)>,
    {
        let (mut w, mut lat, mut lon) = (0.0, 0.0, 0.0);
        for (p, wi) in items {
            w += wi;
            lat += wi * p.lat;
            lon += wi * p.lon;
        }
        if w > 0.0 && w.is_finite() {
            // Convex combinations stay in range up to rounding.
            Some(GeoPoint {
                lat: (lat / w).clamp(-90.0, 90.0),
                lon: (lon / w).clamp(-180.0, 180.0),
            })
        } else {
            None
        }
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Haversine,
    Planar,
}

impl Metric {
    pub fn distance(self, a: GeoPoint, b: GeoPoint) -> f64 {
        match self {
            Metric::Haversine => haversine_miles(a, b),
            Metric::Planar => planar_miles(a, b),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Haversine => "haversine",
            Metric::Planar => "planar",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "haversine" => Ok(Metric::Haversine),
            "planar" => Ok(Metric::Planar),
            other => Err(GeoError::UnknownMetric(other.into())),
        }
    }
}

/// Great-circle distance in miles.
pub fn haversine_miles(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let s1 = math::sin(dlat / 2.0);
    let s2 = math::sin(dlon / 2.0);
    let h = s1 * s1 + math::cos(lat1) * math::cos(lat2) * s2 * s2;
    2.0 * EARTH_RADIUS_MILES * math::asin(math::sqrt(h.clamp(0.0, 1.0)))
}

/// Equirectangular distance in miles. Only meaningful over regional spans.
pub fn planar_miles(a: GeoPoint, b: GeoPoint) -> f64 {
    let mean_lat = ((a.lat + b.lat) / 2.0).to_radians();
    let dx = (b.lon - a.lon) * math::cos(mean_lat) * MILES_PER_DEGREE;
    let dy = (b.lat - a.lat) * MILES_PER_DEGREE;
    math::hypot(dx, dy)
}

/// Dense customer × site distance table in miles.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps row-major data, validating shape and entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, GeoError> {
        if rows == 0 || cols == 0 {
            return Err(GeoError::EmptyInput);
        }
        if data.len() != rows * cols {
            return Err(GeoError::Shape {
                expected: rows * cols,
                got: data.len(),
            });
        }
        for (k, &value) in data.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(GeoError::BadEntry {
                    row: k / cols,
                    col: k % cols,
                    value,
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn distance_matrix(
    customers: &[GeoPoint],
    sites: &[GeoPoint],
    metric: Metric,
) -> Result<DistanceMatrix, GeoError> {
    if customers.is_empty() || sites.is_empty() {
        return Err(GeoError::EmptyInput);
    }
    let mut data = Vec::with_capacity(customers.len() * sites.len());
    for &c in customers {
        data.extend(sites.iter().map(|&s| metric.distance(c, s)));
    }
    Ok(DistanceMatrix {
        rows: customers.len(),
        cols: sites.len(),
        data,
    })
}
