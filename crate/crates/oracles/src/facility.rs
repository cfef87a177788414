//! Subset-enumeration oracle for the facility MILP.
//!
//! Enumerates every admissible open set, solves the remaining flow problem
//! for that set in closed form, and keeps the cheapest. With the open set
//! fixed, the flow problem separates by customer except for the single
//! coverage row and the average-distance row:
//!
//! * without a coverage target every customer ships from its nearest open
//!   site;
//! * a coverage target in flow mode is a fractional knapsack over
//!   per-customer segments (switch to the nearest covered site, then
//!   over-serve at further covered sites), each with capacity equal to the
//!   customer's demand;
//! * a coverage target in single-source mode is a 0/1 knapsack solved by
//!   dynamic programming over integer coverage (demands must be integers);
//! * the average-distance row bounds the same sum the objective minimizes,
//!   so the cheapest flow is feasible iff it meets that bound.

#[derive(Debug, Clone)]
pub struct FacilityInstance {
    pub demand: Vec<f64>,
    pub fixed_cost: Vec<f64>,
    /// `dist[i][j]`, customer by site.
    pub dist: Vec<Vec<f64>>,
    pub limit: usize,
    /// `true`: exactly `limit` sites; `false`: at most.
    pub exact: bool,
    pub mad: Option<f64>,
    /// `(fraction, radius)`.
    pub mpct: Option<(f64, f64)>,
    pub single_source: bool,
    pub strict: bool,
    pub forced_open: Vec<usize>,
    pub forced_closed: Vec<usize>,
}

impl FacilityInstance {
    pub fn new(demand: Vec<f64>, dist: Vec<Vec<f64>>, limit: usize) -> Self {
        let y = dist.first().map_or(0, |r| r.len());
        Self {
            demand,
            fixed_cost: vec![0.0; y],
            dist,
            limit,
            exact: true,
            mad: None,
            mpct: None,
            single_source: false,
            strict: false,
            forced_open: vec![],
            forced_closed: vec![],
        }
    }

    fn num_sites(&self) -> usize {
        self.fixed_cost.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptimum {
    pub objective: f64,
    pub open: Vec<usize>,
}

/// Minimum objective over all admissible open sets, or `None` if infeasible.
pub fn enumerate_optimum(inst: &FacilityInstance) -> Option<OracleOptimum> {
    let y = inst.num_sites();
    assert!(
        y <= 20,
        "enumeration oracle is exponential in the site count"
    );
    let mut best: Option<OracleOptimum> = None;
    for mask in 0u32..(1u32 << y) {
        let size = mask.count_ones() as usize;
        let ok_size = if inst.exact {
            size == inst.limit
        } else {
            size <= inst.limit
        };
        if !ok_size {
            continue;
        }
        if inst.forced_open.iter().any(|&j| mask & (1 << j) == 0) {
            continue;
        }
        if inst.forced_closed.iter().any(|&j| mask & (1 << j) != 0) {
            continue;
        }
        let open: Vec<usize> = (0..y).filter(|&j| mask & (1 << j) != 0).collect();
        let Some(transport) = subset_transport_cost(inst, &open) else {
            continue;
        };
        let objective = transport + open.iter().map(|&j| inst.fixed_cost[j]).sum::<f64>();
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(OracleOptimum { objective, open });
        }
    }
    best
}

/// Cheapest transport cost for a fixed open set, or `None` if no flow meets
/// the constraints.
pub fn subset_transport_cost(inst: &FacilityInstance, open: &[usize]) -> Option<f64> {
    let total: f64 = inst.demand.iter().sum();
    if open.is_empty() {
        return if total > 0.0 { None } else { Some(0.0) };
    }
    let radius = inst.mpct.map(|(_, r)| r);
    let covered = |i: usize, j: usize| radius.is_some_and(|r| inst.dist[i][j] <= r);

    // Nearest open site, preferring covered ones among equals.
    let mut base_cost = 0.0;
    let mut base_cov = 0.0;
    let mut nearest = Vec::with_capacity(inst.demand.len());
    for (i, &w) in inst.demand.iter().enumerate() {
        let mut best = open[0];
        for &j in &open[1..] {
            let (dj, db) = (inst.dist[i][j], inst.dist[i][best]);
            if dj < db || (dj == db && covered(i, j) && !covered(i, best)) {
                best = j;
            }
        }
        nearest.push(best);
        base_cost += w * inst.dist[i][best];
        if covered(i, best) {
            base_cov += w;
        }
    }

    let mut cost = base_cost;
    if let Some((frac, _)) = inst.mpct {
        let target = frac * total;
        let deficit = target - base_cov;
        if deficit > 1e-9 {
            let extra = if inst.single_source {
                single_source_cover(inst, open, &nearest, deficit, &covered)?
            } else {
                fractional_cover(inst, open, &nearest, deficit, &covered)?
            };
            cost += extra;
        }
    }

    if let Some(mad) = inst.mad {
        let cap = mad * total;
        if cost > cap + 1e-9 * cap.abs().max(1.0) {
            return None;
        }
    }
    Some(cost)
}

fn fractional_cover(
    inst: &FacilityInstance,
    open: &[usize],
    nearest: &[usize],
    deficit: f64,
    covered: &dyn Fn(usize, usize) -> bool,
) -> Option<f64> {
    // (unit cost, capacity)
    let mut segments: Vec<(f64, f64)> = Vec::new();
    for (i, &w) in inst.demand.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let mut cov_sites: Vec<usize> = open.iter().copied().filter(|&j| covered(i, j)).collect();
        cov_sites.sort_by(|&a, &b| inst.dist[i][a].total_cmp(&inst.dist[i][b]));
        let n = nearest[i];
        let dn = inst.dist[i][n];
        if covered(i, n) {
            if !inst.strict {
                for &k in cov_sites.iter().filter(|&&k| k != n) {
                    segments.push((inst.dist[i][k], w));
                }
            }
        } else if let Some((&k1, rest)) = cov_sites.split_first() {
            segments.push((inst.dist[i][k1] - dn, w));
            if !inst.strict {
                for &k in rest {
                    segments.push((inst.dist[i][k], w));
                }
            }
        }
    }
    segments.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut need = deficit;
    let mut extra = 0.0;
    for (unit, cap) in segments {
        if need <= 0.0 {
            break;
        }
        let take = cap.min(need);
        extra += take * unit;
        need -= take;
    }
    (need <= 1e-9).then_some(extra)
}

fn single_source_cover(
    inst: &FacilityInstance,
    open: &[usize],
    nearest: &[usize],
    deficit: f64,
    covered: &dyn Fn(usize, usize) -> bool,
) -> Option<f64> {
    // Items: customers whose nearest site is uncovered but have a covered one.
    let mut items: Vec<(usize, f64)> = Vec::new();
    for (i, &w) in inst.demand.iter().enumerate() {
        if w <= 0.0 || covered(i, nearest[i]) {
            continue;
        }
        let best_cov = open
            .iter()
            .copied()
            .filter(|&j| covered(i, j))
            .map(|j| inst.dist[i][j])
            .min_by(f64::total_cmp);
        if let Some(dc) = best_cov {
            assert!(
                w.fract() == 0.0,
                "single-source cover oracle needs integer demands"
            );
            items.push((w as usize, w * (dc - inst.dist[i][nearest[i]])));
        }
    }
    let need = (deficit - 1e-9).ceil().max(0.0) as usize;
    // dp[c]: min extra cost to gain at least c coverage (c capped at need).
    let mut dp = vec![f64::INFINITY; need + 1];
    dp[0] = 0.0;
    for (w, c) in items {
        for have in (0..=need).rev() {
            if dp[have].is_finite() {
                let to = (have + w).min(need);
                if dp[have] + c < dp[to] {
                    dp[to] = dp[have] + c;
                }
            }
        }
    }
    dp[need].is_finite().then_some(dp[need])
}

/// Transport cost when every customer ships from its nearest site in `open`.
pub fn nearest_assignment(demand: &[f64], dist: &[Vec<f64>], open: &[usize]) -> (f64, Vec<usize>) {
    let mut cost = 0.0;
    let mut assign = Vec::with_capacity(demand.len());
    for (i, &w) in demand.iter().enumerate() {
        let j = *open
            .iter()
            .min_by(|&&a, &&b| dist[i][a].total_cmp(&dist[i][b]).then(a.cmp(&b)))
            .expect("open set is non-empty");
        cost += w * dist[i][j];
        assign.push(j);
    }
    (cost, assign)
}
