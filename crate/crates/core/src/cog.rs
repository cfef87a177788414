//! Continuous single-facility center of gravity.
//!
//! Everything here works in a planar frame measured in degrees:
//! `x = lon * cos(lat0)`, `y = lat`, where `lat0` is the demand-weighted
//! mean latitude of the customers. The cost of a point is
//! `sum_i w_i * sqrt((x - x_i)^2 + (y - y_i)^2)`. Multiply by
//! [`MILES_PER_DEGREE`] for planar miles.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geo::{GeoPoint, MILES_PER_DEGREE};
use crate::math;
use crate::model::Customer;

/// Points closer than this (degrees) are treated as coincident.
pub const COINCIDENCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CogError {
    #[error("total demand must be positive")]
    NoDemand,
    #[error("point coincides with customer `{0}`; the gradient is undefined there")]
    Coincident(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CogFrame {
    pub ref_lat: f64,
    scale: f64,
}

impl CogFrame {
    pub fn new(ref_lat: f64) -> Self {
        Self {
            ref_lat,
            scale: math::cos(ref_lat.to_radians()).max(1e-6),
        }
    }

    pub fn for_customers(customers: &[Customer]) -> Result<Self, CogError> {
        let seed = centroid_seed(customers)?;
        Ok(Self::new(seed.lat()))
    }

    pub fn project(&self, p: GeoPoint) -> (f64, f64) {
        (p.lon() * self.scale, p.lat())
    }

    pub fn unproject(&self, (x, y): (f64, f64)) -> GeoPoint {
        GeoPoint::new(y.clamp(-90.0, 90.0), (x / self.scale).clamp(-180.0, 180.0)).expect("clamped")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CogResult {
    pub point: GeoPoint,
    /// Weighted distance sum in frame degrees.
    pub objective: f64,
    pub iterations: usize,
    /// Norm of the gradient divided by total demand. At a customer that
    /// satisfies the majority condition this is the smallest subgradient
    /// norm, which is zero.
    pub grad_norm: f64,
    pub converged: bool,
    /// Index of the customer the result sits on, if any.
    pub at_customer: Option<usize>,
    /// Objective before the first step and after every step.
    pub trace: Vec<f64>,
}

impl CogResult {
    pub fn objective_miles(&self) -> f64 {
        self.objective * MILES_PER_DEGREE
    }
}

/// Demand-weighted mean of the customer coordinates.
pub fn centroid_seed(customers: &[Customer]) -> Result<GeoPoint, CogError> {
    GeoPoint::weighted_mean(customers.iter().map(|c| (c.point, c.demand))).ok_or(CogError::NoDemand)
}

struct Weighted {
    xy: Vec<(f64, f64)>,
    w: Vec<f64>,
    idx: Vec<usize>,
    total: f64,
}

impl Weighted {
    fn new(frame: &CogFrame, customers: &[Customer]) -> Self {
        let mut out = Self {
            xy: Vec::new(),
            w: Vec::new(),
            idx: Vec::new(),
            total: 0.0,
        };
        for (i, c) in customers.iter().enumerate() {
            if c.demand > 0.0 {
                out.xy.push(frame.project(c.point));
                out.w.push(c.demand);
                out.idx.push(i);
                out.total += c.demand;
            }
        }
        out
    }

    fn objective(&self, p: (f64, f64)) -> f64 {
        self.xy
            .iter()
            .zip(&self.w)
            .map(|(q, w)| w * math::hypot(p.0 - q.0, p.1 - q.1))
            .sum()
    }

    /// Summed unit pull `sum w_i (q_i - p) / |q_i - p|` over customers not
    /// coincident with `p`, the weight sitting on `p`, and the Weiszfeld
    /// map's numerator and denominator over the same customers.
    fn pull(&self, p: (f64, f64)) -> ((f64, f64), f64, (f64, f64), f64) {
        let (mut rx, mut ry, mut here, mut nx, mut ny, mut den) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (q, &w) in self.xy.iter().zip(&self.w) {
            let d = math::hypot(p.0 - q.0, p.1 - q.1);
            if d <= COINCIDENCE_EPS {
                here += w;
                continue;
            }
            rx += w * (q.0 - p.0) / d;
            ry += w * (q.1 - p.1) / d;
            nx += w * q.0 / d;
            ny += w * q.1 / d;
            den += w / d;
        }
        ((rx, ry), here, (nx, ny), den)
    }
}

/// Cost at `point` in frame degrees.
pub fn objective(point: GeoPoint, customers: &[Customer]) -> Result<f64, CogError> {
    let frame = CogFrame::for_customers(customers)?;
    Ok(Weighted::new(&frame, customers).objective(frame.project(point)))
}

/// Gradient of the cost with respect to the frame coordinates:
/// `(sum w_i (x - x_i) / d_i, sum w_i (y - y_i) / d_i)`.
pub fn gradient(point: GeoPoint, customers: &[Customer]) -> Result<(f64, f64), CogError> {
    let frame = CogFrame::for_customers(customers)?;
    let p = frame.project(point);
    let (mut gx, mut gy) = (0.0, 0.0);
    for c in customers.iter().filter(|c| c.demand > 0.0) {
        let q = frame.project(c.point);
        let d = math::hypot(p.0 - q.0, p.1 - q.1);
        if d <= COINCIDENCE_EPS {
            return Err(CogError::Coincident(c.id.clone()));
        }
        gx += c.demand * (p.0 - q.0) / d;
        gy += c.demand * (p.1 - q.1) / d;
    }
    Ok((gx, gy))
}

/// Weiszfeld iteration from `init`.
///
/// Each step moves to `sum(w_i q_i / d_i) / sum(w_i / d_i)`. At every
/// iterate the nearest customer is tested for the majority condition
/// (its weight is at least the norm of the others' summed unit pull); if it
/// holds that customer is the optimum and the iteration stops there. An
/// iterate that lands on a customer failing the test takes the
/// Vardi-Zhang step away from it. The iteration has converged when the
/// normalized gradient norm or the length of a step in degrees is below
/// `tol`. It also stops when a step cannot lower the cost any further, or
/// after `max_iters` steps; `converged` is then false unless one of the two
/// tests holds.
pub fn weiszfeld(
    customers: &[Customer],
    init: GeoPoint,
    tol: f64,
    max_iters: usize,
) -> Result<CogResult, CogError> {
    let frame = CogFrame::for_customers(customers)?;
    let data = Weighted::new(&frame, customers);
    let mut x = frame.project(init);
    let mut f = data.objective(x);
    let mut trace = alloc::vec![f];
    let mut iterations = 0;

    let nearest = |p: (f64, f64)| -> usize {
        (0..data.xy.len())
            .map(|k| (k, math::hypot(p.0 - data.xy[k].0, p.1 - data.xy[k].1)))
            .fold(
                (0, f64::INFINITY),
                |b, (k, d)| if d < b.1 { (k, d) } else { b },
            )
            .0
    };
    let residual = |p: (f64, f64)| -> (f64, bool) {
        let ((rx, ry), here, _, _) = data.pull(p);
        let r = math::hypot(rx, ry);
        if here > 0.0 {
            ((r - here).max(0.0) / data.total, r <= here)
        } else {
            (r / data.total, false)
        }
    };

    let finish = |x: (f64, f64), f: f64, iterations, converged, trace| {
        let (grad_norm, _) = residual(x);
        let k = nearest(x);
        let on = math::hypot(x.0 - data.xy[k].0, x.1 - data.xy[k].1) <= COINCIDENCE_EPS;
        Ok(CogResult {
            point: frame.unproject(x),
            objective: f,
            iterations,
            grad_norm,
            converged,
            at_customer: on.then(|| data.idx[k]),
            trace,
        })
    };

    loop {
        let k = nearest(x);
        let qk = data.xy[k];
        let (_, majority) = residual(qk);
        if majority {
            let fk = data.objective(qk);
            if fk <= f {
                if fk < f || x != qk {
                    x = qk;
                    f = fk;
                    trace.push(f);
                }
                return finish(x, f, iterations, true, trace);
            }
        }
        let (g, _) = residual(x);
        if g <= tol {
            return finish(x, f, iterations, true, trace);
        }
        if iterations >= max_iters {
            return finish(x, f, iterations, false, trace);
        }

        let ((rx, ry), here, (nx, ny), den) = data.pull(x);
        let t = (nx / den, ny / den);
        let next = if here > 0.0 {
            let r = math::hypot(rx, ry);
            let lambda = (here / r).min(1.0);
            (
                (1.0 - lambda) * t.0 + lambda * x.0,
                (1.0 - lambda) * t.1 + lambda * x.1,
            )
        } else {
            t
        };
        let (a, b) = (frame.unproject(x), frame.unproject(next));
        let step = math::hypot(b.lat() - a.lat(), b.lon() - a.lon());
        let fn_ = data.objective(next);
        if !(fn_ < f) {
            return finish(x, f, iterations, step < tol, trace);
        }
        iterations += 1;
        x = next;
        f = fn_;
        trace.push(f);
        if step < tol {
            return finish(x, f, iterations, true, trace);
        }
    }
}
