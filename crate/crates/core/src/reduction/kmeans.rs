//! Demand-weighted Lloyd clustering in a local equirectangular frame.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ReductionError;
use crate::geo::GeoPoint;
use crate::math;
use crate::model::{Customer, Site, SiteStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Vec<GeoPoint>,
    /// Cluster index per input point.
    pub assignment: Vec<usize>,
    /// Weighted sum of squared distances (projected degrees²) after each
    /// assignment step. Non-increasing.
    pub ssd_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansResult {
    pub fn ssd(&self) -> f64 {
        self.ssd_trace.last().copied().unwrap_or(0.0)
    }
}

struct Frame {
    scale: f64,
}

impl Frame {
    fn new(points: &[GeoPoint], weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let lat0 = points
            .iter()
            .zip(weights)
            .map(|(p, w)| p.lat() * w)
            .sum::<f64>()
            / total;
        Self {
            scale: math::cos(lat0.to_radians()).max(1e-6),
        }
    }

    fn project(&self, p: GeoPoint) -> (f64, f64) {
        (p.lon() * self.scale, p.lat())
    }

    fn unproject(&self, (x, y): (f64, f64)) -> GeoPoint {
        GeoPoint::new(y.clamp(-90.0, 90.0), (x / self.scale).clamp(-180.0, 180.0)).expect("clamped")
    }
}

fn sq(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (a.0 - b.0, a.1 - b.1);
    dx * dx + dy * dy
}

fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn distinct_count(points: &[GeoPoint]) -> usize {
    let mut keys: Vec<(u64, u64)> = points
        .iter()
        .map(|p| (p.lat().to_bits(), p.lon().to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// Weighted k-means.
///
/// The first center is drawn with probability proportional to weight using
/// a ChaCha8 stream seeded by `seed`. Each further center is the point with
/// the largest `weight * d²` to its nearest chosen center (largest `d²` if
/// every weighted point is already covered). Lloyd iterations then run until
/// the relative SSD improvement drops below `tol`, assignments stop
/// changing, or `max_iters` is reached. An empty cluster is re-seeded at the
/// point farthest from its assigned center.
pub fn kmeans_weighted(
    points: &[GeoPoint],
    weights: &[f64],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansResult, ReductionError> {
    if points.len() != weights.len() {
        return Err(ReductionError::WeightLength {
            points: points.len(),
            weights: weights.len(),
        });
    }
    if k == 0 {
        return Err(ReductionError::ZeroK);
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !weights.iter().any(|w| *w > 0.0) {
        return Err(ReductionError::Weights);
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(ReductionError::TooManyClusters { k, distinct });
    }

    let frame = Frame::new(points, weights);
    let xy: Vec<(f64, f64)> = points.iter().map(|&p| frame.project(p)).collect();
    let n = xy.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = weights.iter().sum();
    let target = unit_f64(&mut rng) * total;
    let mut acc = 0.0;
    let mut first = n - 1;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if *w > 0.0 && acc > target {
            first = i;
            break;
        }
    }
    while weights[first] == 0.0 {
        first -= 1;
    }
    let mut centers = vec![xy[first]];
    let mut nearest: Vec<f64> = xy.iter().map(|&p| sq(p, xy[first])).collect();
    while centers.len() < k {
        let pick = |score: &dyn Fn(usize) -> f64| {
            (0..n).fold((0usize, -1.0f64), |best, i| {
                if score(i) > best.1 {
                    (i, score(i))
                } else {
                    best
                }
            })
        };
        let (mut i, s) = pick(&|i| weights[i] * nearest[i]);
        if s <= 0.0 {
            i = pick(&|i| nearest[i]).0;
        }
        centers.push(xy[i]);
        for (d, &p) in nearest.iter_mut().zip(&xy) {
            *d = d.min(sq(p, xy[i]));
        }
    }

    let assign = |centers: &[(f64, f64)], assignment: &mut [usize], dist: &mut [f64]| -> f64 {
        let mut ssd = 0.0;
        for i in 0..n {
            let (mut best, mut bd) = (0, f64::INFINITY);
            for (c, &ctr) in centers.iter().enumerate() {
                let d = sq(xy[i], ctr);
                if d < bd {
                    best = c;
                    bd = d;
                }
            }
            assignment[i] = best;
            dist[i] = bd;
            ssd += weights[i] * bd;
        }
        ssd
    };

    let mut assignment = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut trace = vec![assign(&centers, &mut assignment, &mut dist)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![(0.0, 0.0, 0.0); k];
        let mut counts = vec![(0usize, 0.0, 0.0); k];
        for i in 0..n {
            let c = assignment[i];
            sums[c].0 += weights[i] * xy[i].0;
            sums[c].1 += weights[i] * xy[i].1;
            sums[c].2 += weights[i];
            counts[c].0 += 1;
            counts[c].1 += xy[i].0;
            counts[c].2 += xy[i].1;
        }
        let saved = (centers.clone(), assignment.clone());
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            let (sx, sy, sw) = sums[c];
            let (m, ux, uy) = counts[c];
            if sw > 0.0 {
                centers[c] = (sx / sw, sy / sw);
            } else if m > 0 {
                centers[c] = (ux / m as f64, uy / m as f64);
            } else {
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .fold((0usize, -1.0f64), |best, i| {
                        if dist[i] > best.1 {
                            (i, dist[i])
                        } else {
                            best
                        }
                    })
                    .0;
                taken.push(far);
                centers[c] = xy[far];
            }
        }
        let ssd = assign(&centers, &mut assignment, &mut dist);
        let prev = *trace.last().expect("trace starts non-empty");
        if ssd > prev {
            // Only reachable through rounding in the centroid update.
            (centers, assignment) = saved;
            converged = true;
            break;
        }
        trace.push(ssd);
        if saved.1 == assignment || prev - ssd <= tol * prev || ssd == 0.0 {
            converged = true;
            break;
        }
    }

    Ok(KMeansResult {
        centers: centers.into_iter().map(|c| frame.unproject(c)).collect(),
        assignment,
        ssd_trace: trace,
        iterations,
        converged,
    })
}

/// Candidate sites for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub sites: Vec<Site>,
    /// The allocation exceeded the number of distinct customer locations
    /// and was reduced to it.
    pub clamped: bool,
}

/// Clusters one state's customers into `allocation` groups and returns the
/// cluster centers as greenfield candidates with ids `gc_<state>_<n>`.
pub fn generate_candidates(
    customers_in_state: &[Customer],
    allocation: usize,
    seed: u64,
) -> Result<CandidateSet, ReductionError> {
    let first = customers_in_state
        .first()
        .ok_or(ReductionError::NoCustomers)?;
    if let Some(other) = customers_in_state.iter().find(|c| c.state != first.state) {
        return Err(ReductionError::MixedStates(
            first.state.clone(),
            other.state.clone(),
        ));
    }
    if allocation == 0 {
        return Err(ReductionError::ZeroK);
    }
    let points: Vec<GeoPoint> = customers_in_state.iter().map(|c| c.point).collect();
    let mut weights: Vec<f64> = customers_in_state.iter().map(|c| c.demand).collect();
    if !weights.iter().any(|w| *w > 0.0) {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    let distinct = distinct_count(&points);
    let k = allocation.min(distinct);
    let result = kmeans_weighted(&points, &weights, k, seed, 300, 1e-9)?;
    let sites = result
        .centers
        .iter()
        .enumerate()
        .map(|(n, &p)| Site {
            id: format!("gc_{}_{}", first.state, n + 1),
            point: p,
            state: first.state.clone(),
            status: SiteStatus::GreenfieldCandidate,
            fixed_cost: 0.0,
        })
        .collect();
    Ok(CandidateSet {
        sites,
        clamped: k < allocation,
    })
}
