//! Small independent references: geodesics, finite differences, brute-force
//! clustering.

/// Great-circle distance via the atan2 (Vincenty special case) form on a
/// sphere of radius `r`. Numerically independent of the haversine form.
pub fn great_circle(lat1: f64, lon1: f64, lat2: f64, lon2: f64, r: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    let a = p2.cos() * dl.sin();
    let b = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    let num = (a * a + b * b).sqrt();
    let den = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    r * num.atan2(den)
}

/// Central difference of `f` along each coordinate.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[k] += h;
            lo[k] -= h;
            (f(&hi) - f(&lo)) / (2.0 * h)
        })
        .collect()
}

/// Sum of `w * ||p - c||` for a planar point `c`.
pub fn weighted_distance_sum(points: &[(f64, f64)], weights: &[f64], c: (f64, f64)) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| w * ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt())
        .sum()
}

/// Best weighted within-cluster sum of squares over every assignment of the
/// points into exactly `k` non-empty clusters. Returns `(ssd, assignment)`.
pub fn kmeans_brute_force(points: &[(f64, f64)], weights: &[f64], k: usize) -> (f64, Vec<usize>) {
    let n = points.len();
    assert!(k >= 1 && k <= n && n <= 10);
    let mut best = (f64::INFINITY, vec![]);
    let mut assign = vec![0usize; n];
    for code in 0..k.pow(n as u32) {
        let mut rest = code;
        for a in assign.iter_mut() {
            *a = rest % k;
            rest /= k;
        }
        let mut ssd = 0.0;
        let mut nonempty = true;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            if members.is_empty() {
                nonempty = false;
                break;
            }
            let w: f64 = members.iter().map(|&i| weights[i]).sum();
            let cx = members
                .iter()
                .map(|&i| weights[i] * points[i].0)
                .sum::<f64>()
                / w;
            let cy = members
                .iter()
                .map(|&i| weights[i] * points[i].1)
                .sum::<f64>()
                / w;
            ssd += members
                .iter()
                .map(|&i| weights[i] * ((points[i].0 - cx).powi(2) + (points[i].1 - cy).powi(2)))
                .sum::<f64>();
        }
        if nonempty && ssd < best.0 {
            best = (ssd, assign.clone());
        }
    }
    best
}
