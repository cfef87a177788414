//! Unoptimized textbook two-phase simplex with Bland's rule.
//!
//! Bounds are handled by substitution `x = l + x'` plus explicit rows
//! `x' <= u - l`, so the tableau only ever sees `x' >= 0`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct RefLp {
    pub costs: Vec<f64>,
    /// Dense rows.
    pub rows: Vec<(Vec<f64>, Rel, f64)>,
    /// Must be finite.
    pub lower: Vec<f64>,
    /// May be `f64::INFINITY`.
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct RefSolution {
    pub status: RefStatus,
    pub objective: f64,
    pub x: Vec<f64>,
}

const EPS: f64 = 1e-9;

pub fn solve(lp: &RefLp) -> RefSolution {
    let n = lp.costs.len();
    assert!(
        lp.lower.iter().all(|l| l.is_finite()),
        "oracle needs finite lower bounds"
    );
    if (0..n).any(|j| lp.lower[j] > lp.upper[j]) {
        return RefSolution {
            status: RefStatus::Infeasible,
            objective: f64::NAN,
            x: vec![],
        };
    }

    // Rows over x' with rhs >= 0.
    let mut rows: Vec<(Vec<f64>, Rel, f64)> = Vec::new();
    for (a, rel, b) in &lp.rows {
        let shift: f64 = a.iter().zip(&lp.lower).map(|(ai, li)| ai * li).sum();
        rows.push((a.clone(), *rel, b - shift));
    }
    for j in 0..n {
        if lp.upper[j].is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            rows.push((a, Rel::Le, lp.upper[j] - lp.lower[j]));
        }
    }
    for row in rows.iter_mut() {
        if row.2 < 0.0 {
            row.0.iter_mut().for_each(|v| *v = -*v);
            row.2 = -row.2;
            row.1 = match row.1 {
                Rel::Le => Rel::Ge,
                Rel::Ge => Rel::Le,
                Rel::Eq => Rel::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Rel::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Rel::Le).count();
    let width = n + n_slack + n_art;
    // Tableau columns: x', slacks, artificials, rhs.
    let mut t = vec![vec![0.0; width + 1]; m];
    let mut basis = vec![0usize; m];
    let (mut s, mut a) = (n, n + n_slack);
    for (i, (coef, rel, b)) in rows.iter().enumerate() {
        t[i][..n].copy_from_slice(coef);
        t[i][width] = *b;
        match rel {
            Rel::Le => {
                t[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Rel::Ge => {
                t[i][s] = -1.0;
                s += 1;
                t[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
            Rel::Eq => {
                t[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
        }
    }
    let art_start = n + n_slack;

    // Phase 1.
    let mut c1 = vec![0.0; width];
    for c in c1.iter_mut().skip(art_start) {
        *c = 1.0;
    }
    if run_phase(&mut t, &mut basis, &c1, width, width) == RefStatus::Unbounded {
        unreachable!("phase one is bounded");
    }
    let infeas: f64 = (0..m)
        .filter(|&i| basis[i] >= art_start)
        .map(|i| t[i][width])
        .sum();
    let scale = rows.iter().fold(1.0f64, |acc, r| acc.max(r.2.abs()));
    if infeas > 1e-7 * scale {
        return RefSolution {
            status: RefStatus::Infeasible,
            objective: f64::NAN,
            x: vec![],
        };
    }
    // Drive artificials out where possible.
    for i in 0..m {
        if basis[i] >= art_start {
            if let Some(k) = (0..art_start).find(|&k| t[i][k].abs() > EPS) {
                pivot(&mut t, i, k);
                basis[i] = k;
            }
        }
    }

    // Phase 2 over non-artificial columns.
    let mut c2 = vec![0.0; width];
    c2[..n].copy_from_slice(&lp.costs);
    let status = run_phase(&mut t, &mut basis, &c2, art_start, width);
    if status == RefStatus::Unbounded {
        return RefSolution {
            status,
            objective: f64::NEG_INFINITY,
            x: vec![],
        };
    }
    let mut x = lp.lower.clone();
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] += t[i][width];
        }
    }
    let objective = lp.costs.iter().zip(&x).map(|(c, v)| c * v).sum();
    RefSolution {
        status: RefStatus::Optimal,
        objective,
        x,
    }
}

fn pivot(t: &mut [Vec<f64>], r: usize, k: usize) {
    let p = t[r][k];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r {
            let f = row[k];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
            }
        }
    }
}

/// Bland's rule over columns `0..allowed`.
fn run_phase(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    allowed: usize,
    width: usize,
) -> RefStatus {
    let m = t.len();
    loop {
        let reduced = |k: usize, t: &[Vec<f64>], basis: &[usize]| -> f64 {
            cost[k] - (0..m).map(|i| cost[basis[i]] * t[i][k]).sum::<f64>()
        };
        let entering = (0..allowed).find(|&k| !basis.contains(&k) && reduced(k, t, basis) < -EPS);
        let Some(k) = entering else {
            return RefStatus::Optimal;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][k] > EPS {
                let ratio = t[i][width] / t[i][k];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - 1e-12 || (ratio <= best + 1e-12 && basis[i] < basis[r]) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        let Some((r, _)) = leave else {
            return RefStatus::Unbounded;
        };
        pivot(t, r, k);
        basis[r] = k;
    }
}
