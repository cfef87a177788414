//! Candidate location selection: score each state on area, distance to the
//! existing network and demand density, then apportion a candidate budget.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ReductionError;
use crate::geo::{GeoPoint, Metric};
use crate::math;
use crate::model::{Customer, Site, SiteStatus, StateAttr};

#[derive(Debug, Clone, PartialEq)]
pub struct ClsRecord {
    pub state: String,
    pub area: f64,
    /// Miles from the state's demand centroid to the nearest open existing
    /// site. `None` when there is nothing to measure.
    pub proximity_miles: Option<f64>,
    pub demand: f64,
    /// Demand per square mile.
    pub density: f64,
    pub a_score: f64,
    pub p_score: f64,
    pub d_score: f64,
    pub cls_score: f64,
    pub allocation: usize,
}

/// Min-max scaling onto `[1, 10]`. A constant input maps every value to 10.
pub fn scale_scores(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 1e-12 * hi.abs().max(lo.abs()).max(1e-300)) {
        return vec![10.0; raw.len()];
    }
    raw.iter()
        .map(|v| (1.0 + 9.0 * (v - lo) / span).clamp(1.0, 10.0))
        .collect()
}

/// Scores every state and splits `total_candidates` among them.
///
/// Output order follows `states`. Internally everything is computed in
/// state-name order so that permuting the input cannot change any result.
pub fn cls_scores(
    states: &[StateAttr],
    customers: &[Customer],
    existing_sites: &[Site],
    total_candidates: usize,
    metric: Metric,
) -> Result<Vec<ClsRecord>, ReductionError> {
    if states.is_empty() {
        return Err(ReductionError::NoStates);
    }
    let mut by_name: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, s) in states.iter().enumerate() {
        if by_name.insert(s.name.as_str(), k).is_some() {
            return Err(ReductionError::DuplicateState(s.name.clone()));
        }
    }
    if total_candidates < states.len() {
        return Err(ReductionError::TooFewCandidates {
            total: total_candidates,
            states: states.len(),
        });
    }

    let mut members: BTreeMap<&str, Vec<&Customer>> =
        by_name.keys().map(|&n| (n, Vec::new())).collect();
    for c in customers {
        match members.get_mut(c.state.as_str()) {
            Some(list) => list.push(c),
            None => {
                return Err(ReductionError::UnknownState {
                    customer: c.id.clone(),
                    state: c.state.clone(),
                })
            }
        }
    }

    let open: Vec<GeoPoint> = existing_sites
        .iter()
        .filter(|s| s.status == SiteStatus::ExistingOpen)
        .map(|s| s.point)
        .collect();

    let names: Vec<&str> = by_name.keys().copied().collect();
    let mut area = Vec::with_capacity(names.len());
    let mut demand = Vec::with_capacity(names.len());
    let mut density = Vec::with_capacity(names.len());
    let mut proximity: Vec<Option<f64>> = Vec::with_capacity(names.len());
    for name in &names {
        let attr = &states[by_name[name]];
        let list = &members[name];
        let total: f64 = list.iter().map(|c| c.demand).sum();
        let centroid = GeoPoint::weighted_mean(list.iter().map(|c| (c.point, c.demand)))
            .or_else(|| GeoPoint::weighted_mean(list.iter().map(|c| (c.point, 1.0))));
        let near = match centroid {
            Some(p) if !open.is_empty() => Some(
                open.iter()
                    .map(|&s| metric.distance(p, s))
                    .fold(f64::INFINITY, f64::min),
            ),
            _ => None,
        };
        area.push(attr.area);
        demand.push(total);
        density.push(total / attr.area);
        proximity.push(near);
    }

    let a_score = scale_scores(&area);
    let d_score = scale_scores(&density);
    let p_score = if open.is_empty() {
        vec![10.0; names.len()]
    } else {
        // States without customers have no centroid; treat them as the
        // farthest from the network.
        let far = proximity.iter().flatten().copied().fold(0.0, f64::max);
        let raw: Vec<f64> = proximity.iter().map(|p| p.unwrap_or(far)).collect();
        scale_scores(&raw)
    };
    let cls: Vec<f64> = (0..names.len())
        .map(|k| math::cbrt(a_score[k] * p_score[k] * d_score[k]))
        .collect();
    let allocation = apportion(&cls, total_candidates);

    let mut out: Vec<Option<ClsRecord>> = vec![None; states.len()];
    for (k, name) in names.iter().enumerate() {
        out[by_name[name]] = Some(ClsRecord {
            state: String::from(*name),
            area: area[k],
            proximity_miles: proximity[k],
            demand: demand[k],
            density: density[k],
            a_score: a_score[k],
            p_score: p_score[k],
            d_score: d_score[k],
            cls_score: cls[k],
            allocation: allocation[k],
        });
    }
    Ok(out
        .into_iter()
        .map(|r| r.expect("every state scored"))
        .collect())
}

/// One seat each, then the rest by largest remainder in proportion to
/// `weights`. Ties go to the lower index.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let n = weights.len();
    let mut seats = vec![1usize; n];
    let rest = total - n;
    if rest == 0 {
        return seats;
    }
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| rest as f64 * w / sum).collect();
    let mut given = 0;
    for (s, q) in seats.iter_mut().zip(&quotas) {
        let whole = (math::floor(*q) as usize).min(rest - given);
        *s += whole;
        given += whole;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - math::floor(quotas[a]);
        let rb = quotas[b] - math::floor(quotas[b]);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(rest - given) {
        seats[k] += 1;
    }
    seats
}
