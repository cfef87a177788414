//! Bounded-variable primal simplex.
//!
//! Dense tableau, two phases. Every row gets one initial basic column: its
//! slack when the slack can absorb the row residual at the starting point,
//! otherwise an artificial. Phase one minimizes the sum of artificials;
//! phase two fixes artificials at zero and minimizes the real objective.
//!
//! Pricing is Dantzig's largest reduced cost. After [`STALL_LIMIT`]
//! consecutive degenerate pivots the solver switches to Bland's
//! smallest-index rule until a step makes progress, which guarantees
//! termination. All choices break ties on the lowest index so runs are
//! deterministic.
//!
//! Because the initial basis is a signed identity, the tableau columns of
//! the initial basic variables hold `B^-1` at all times. That is used to
//! recompute basic values from the original data periodically and before
//! reporting, instead of trusting accumulated updates.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::formulation::{Constraint, MilpProblem, Relation, VarKind};

const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-14;
const STALL_LIMIT: usize = 50;
const REFRESH_EVERY: usize = 100;
/// Problems with fewer rows are always solved in one pass.
const LAZY_MIN_ROWS: usize = 200;
const LAZY_MAX_ROUNDS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpParams {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iters: usize,
}

impl Default for LpParams {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            opt_tol: 1e-7,
            max_iters: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisStatus {
    Basic,
    AtLower,
    AtUpper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective at `values`. Meaningful for `Optimal`; for other statuses
    /// it is the objective of the last basis visited.
    pub objective: f64,
    pub values: Vec<f64>,
    pub basis: Vec<BasisStatus>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("variable {0} has no finite bound; free variables are not supported")]
    FreeVariable(usize),
    #[error("bound vectors have length {got}, expected {expected}")]
    BoundLength { expected: usize, got: usize },
    #[error("invalid problem: {0}")]
    Invalid(#[from] crate::formulation::FormulationError),
    #[error("basis lost accuracy: residual {residual:e} exceeds {threshold:e}")]
    NumericalInstability { residual: f64, threshold: f64 },
}

/// Solves the LP relaxation of `problem` (integrality is ignored).
pub fn solve_lp(problem: &MilpProblem, params: &LpParams) -> Result<LpSolution, LpError> {
    if problem.kinds.iter().any(|k| *k != VarKind::Continuous) {
        log::warn!("solve_lp: ignoring integrality restrictions");
    }
    solve_lp_bounded(problem, &problem.lower, &problem.upper, params)
}

/// Solves the LP with the variable bounds replaced by `lower`/`upper`.
pub fn solve_lp_bounded(
    problem: &MilpProblem,
    lower: &[f64],
    upper: &[f64],
    params: &LpParams,
) -> Result<LpSolution, LpError> {
    let mut rows = LazyRows::new(problem, lower, upper);
    solve_with_rows(problem, lower, upper, params, &mut rows)
}

/// The rows a row-generation solve currently carries. Reusing one value
/// across solves of the same problem with different bounds (as branch and
/// bound does) starts each solve from the rows earlier solves needed.
#[derive(Debug, Clone, PartialEq)]
pub struct LazyRows {
    active: Vec<bool>,
    enabled: bool,
}

impl LazyRows {
    /// Defers every inequality row that holds at the starting point (each
    /// variable at its finite lower bound, else its upper bound). Small
    /// problems, or problems where few rows qualify, are solved whole.
    pub fn new(problem: &MilpProblem, lower: &[f64], upper: &[f64]) -> Self {
        let start: Vec<f64> = lower
            .iter()
            .zip(upper)
            .map(|(&l, &u)| if l.is_finite() { l } else { u })
            .collect();
        let active: Vec<bool> = problem
            .constraints
            .iter()
            .map(|c| c.relation == Relation::Eq || c.violation(&start) != 0.0)
            .collect();
        let deferred = active.iter().filter(|a| !**a).count();
        let enabled = problem.num_rows() >= LAZY_MIN_ROWS && deferred * 2 >= problem.num_rows();
        Self { active, enabled }
    }

    pub fn active_count(&self) -> usize {
        if self.enabled {
            self.active.iter().filter(|a| **a).count()
        } else {
            self.active.len()
        }
    }
}

/// As [`solve_lp_bounded`], generating rows into `rows`.
///
/// Solves with the active rows, activates every deferred row the optimum
/// violates and repeats. An optimum of the reduced problem that satisfies
/// every row is optimal for the full problem. If the reduced problem is
/// unbounded or hits a limit, or rounds run out, the full problem is solved.
pub fn solve_with_rows(
    problem: &MilpProblem,
    lower: &[f64],
    upper: &[f64],
    params: &LpParams,
    rows: &mut LazyRows,
) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let n = problem.num_vars();
    if lower.len() != n || upper.len() != n {
        return Err(LpError::BoundLength {
            expected: n,
            got: lower.len().min(upper.len()),
        });
    }
    if (0..n).any(|j| lower[j] > upper[j] + params.feas_tol) {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            objective: f64::INFINITY,
            values: lower.to_vec(),
            basis: vec![BasisStatus::AtLower; n],
            iterations: 0,
        });
    }
    let all: Vec<&Constraint> = problem.constraints.iter().collect();
    if !rows.enabled || rows.active.len() != all.len() {
        return solve_rows(&problem.objective, &all, lower, upper, params);
    }
    let mut iterations = 0;
    for _ in 0..LAZY_MAX_ROUNDS {
        let subset: Vec<&Constraint> = all
            .iter()
            .zip(&rows.active)
            .filter(|(_, a)| **a)
            .map(|(c, _)| *c)
            .collect();
        let mut sol = solve_rows(&problem.objective, &subset, lower, upper, params)?;
        iterations += sol.iterations;
        sol.iterations = iterations;
        match sol.status {
            LpStatus::Infeasible => return Ok(sol),
            LpStatus::Optimal => {}
            LpStatus::Unbounded | LpStatus::IterationLimit => break,
        }
        let mut added = 0;
        for (k, c) in all.iter().enumerate() {
            if !rows.active[k] && c.violation(&sol.values) > params.feas_tol * c.rhs.abs().max(1.0)
            {
                rows.active[k] = true;
                added += 1;
            }
        }
        if added == 0 {
            return Ok(sol);
        }
    }
    let mut sol = solve_rows(&problem.objective, &all, lower, upper, params)?;
    sol.iterations += iterations;
    Ok(sol)
}

fn solve_rows(
    objective: &[f64],
    rows: &[&Constraint],
    lower: &[f64],
    upper: &[f64],
    params: &LpParams,
) -> Result<LpSolution, LpError> {
    let mut t = Tableau::new(objective, rows, lower, upper)?;
    let status = t.run(params);
    t.finish(objective, rows, status, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    m: usize,
    /// Structural variable count.
    n: usize,
    ncols: usize,
    /// Row-major `m x ncols`, holds `B^-1 A`.
    t: Vec<f64>,
    /// Values of the basic variables, by row.
    beta: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<ColState>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Cost of the current phase.
    cost: Vec<f64>,
    /// Reduced costs of the current phase.
    d: Vec<f64>,
    /// Original rows over all columns, sparse.
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    /// Column of the initial basic variable of each row and its sign.
    init_col: Vec<usize>,
    init_sign: Vec<f64>,
    artificial_start: usize,
    phase_two_cost: Vec<f64>,
    iterations: usize,
    scratch: Vec<(usize, f64)>,
}

impl Tableau {
    fn new(
        objective: &[f64],
        constraints: &[&Constraint],
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Self, LpError> {
        let n = objective.len();
        let m = constraints.len();

        let mut x0 = vec![0.0; n];
        let mut state = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            if lower[j].is_finite() {
                x0[j] = lower[j];
                state.push(ColState::Lower);
            } else if upper[j].is_finite() {
                x0[j] = upper[j];
                state.push(ColState::Upper);
            } else {
                return Err(LpError::FreeVariable(j));
            }
        }
        let mut lo: Vec<f64> = lower.to_vec();
        let mut up: Vec<f64> = upper.to_vec();

        // Slack columns first, then artificials, so column order does not
        // depend on which rows need an artificial.
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        let mut slack_of = vec![None; m];
        let mut col = n;
        for (i, row) in constraints.iter().enumerate() {
            let mut r: Vec<(usize, f64)> = row
                .coeffs
                .iter()
                .copied()
                .filter(|&(_, a)| a != 0.0)
                .collect();
            let sigma = match row.relation {
                Relation::Le => Some(1.0),
                Relation::Ge => Some(-1.0),
                Relation::Eq => None,
            };
            if let Some(s) = sigma {
                r.push((col, s));
                slack_of[i] = Some((col, s));
                lo.push(0.0);
                up.push(f64::INFINITY);
                state.push(ColState::Lower);
                col += 1;
            }
            rows.push(r);
        }
        let artificial_start = col;

        let rhs: Vec<f64> = constraints.iter().map(|r| r.rhs).collect();
        let mut init_col = vec![0; m];
        let mut init_sign = vec![0.0; m];
        let mut beta = vec![0.0; m];
        for i in 0..m {
            let activity: f64 = constraints[i].coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
            let resid = rhs[i] - activity;
            match slack_of[i] {
                Some((sc, s)) if s * resid >= 0.0 => {
                    init_col[i] = sc;
                    init_sign[i] = s;
                    beta[i] = s * resid;
                    state[sc] = ColState::Basic;
                }
                _ => {
                    let s = if resid >= 0.0 { 1.0 } else { -1.0 };
                    rows[i].push((col, s));
                    init_col[i] = col;
                    init_sign[i] = s;
                    beta[i] = resid.abs();
                    lo.push(0.0);
                    up.push(f64::INFINITY);
                    state.push(ColState::Basic);
                    col += 1;
                }
            }
        }
        let ncols = col;

        let mut t = vec![0.0; m * ncols];
        for i in 0..m {
            let s = init_sign[i];
            for &(j, a) in &rows[i] {
                t[i * ncols + j] = a * s;
            }
        }

        Ok(Self {
            m,
            n,
            ncols,
            t,
            beta,
            basis: init_col.clone(),
            state,
            lower: lo,
            upper: up,
            cost: vec![0.0; ncols],
            d: vec![0.0; ncols],
            rows,
            rhs,
            init_col,
            init_sign,
            artificial_start,
            phase_two_cost: objective.to_vec(),
            iterations: 0,
            scratch: Vec::new(),
        })
    }

    fn has_artificials(&self) -> bool {
        self.ncols > self.artificial_start
    }

    fn value_of_nonbasic(&self, j: usize) -> f64 {
        match self.state[j] {
            ColState::Upper => self.upper[j],
            _ => self.lower[j],
        }
    }

    /// `d = c - y A` with duals `y = c_B B^-1` read from the initial-basis
    /// columns of the rows whose basic variable has a cost.
    fn recompute_reduced_costs(&mut self) {
        let mut y = vec![0.0; self.m];
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
                for k in 0..self.m {
                    let binv = row[self.init_col[k]];
                    if binv != 0.0 {
                        y[k] += cb * binv * self.init_sign[k];
                    }
                }
            }
        }
        self.d.copy_from_slice(&self.cost);
        for (k, row) in self.rows.iter().enumerate() {
            if y[k] != 0.0 {
                for &(j, a) in row {
                    self.d[j] -= y[k] * a;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    /// Recomputes basic values as `B^-1 (b - N x_N)` from the original rows.
    fn recompute_beta(&mut self) {
        let mut r = self.rhs.clone();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                if self.state[j] != ColState::Basic {
                    r[i] -= a * self.value_of_nonbasic(j);
                }
            }
        }
        let nz: Vec<(usize, f64)> = (0..self.m)
            .filter(|&k| r[k] != 0.0)
            .map(|k| (self.init_col[k], self.init_sign[k] * r[k]))
            .collect();
        for i in 0..self.m {
            let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
            self.beta[i] = nz.iter().map(|&(c, v)| row[c] * v).sum();
        }
    }

    fn refresh(&mut self) {
        self.recompute_beta();
        self.recompute_reduced_costs();
    }

    fn choose_entering(&self, opt_tol: f64, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.ncols {
            let score = match self.state[j] {
                ColState::Basic => continue,
                _ if self.upper[j] - self.lower[j] <= 0.0 => continue,
                ColState::Lower if self.d[j] < -opt_tol => -self.d[j],
                ColState::Upper if self.d[j] > opt_tol => self.d[j],
                _ => continue,
            };
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Returns `(step, leaving row)`; `None` row means a bound flip.
    fn ratio_test(&self, q: usize, dir: f64, bland: bool) -> Option<(f64, Option<usize>)> {
        let mut best_step = self.upper[q] - self.lower[q];
        let mut best_row: Option<usize> = None;
        let mut best_alpha = 0.0;
        for i in 0..self.m {
            let alpha = dir * self.t[i * self.ncols + q];
            let b = self.basis[i];
            let limit = if alpha > PIVOT_TOL {
                (self.beta[i] - self.lower[b]) / alpha
            } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                (self.upper[b] - self.beta[i]) / -alpha
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            let better = match best_row {
                _ if limit < best_step - 1e-12 => true,
                None => false,
                Some(r) if limit <= best_step + 1e-12 => {
                    if bland {
                        b < self.basis[r]
                    } else {
                        alpha.abs() > best_alpha
                    }
                }
                Some(_) => false,
            };
            if better {
                best_step = limit;
                best_row = Some(i);
                best_alpha = alpha.abs();
            }
        }
        if best_row.is_none() && !best_step.is_finite() {
            return None;
        }
        Some((best_step, best_row))
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let nc = self.ncols;
        let piv = self.t[p * nc + q];
        self.scratch.clear();
        {
            let row = &mut self.t[p * nc..(p + 1) * nc];
            for (k, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v /= piv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        self.scratch.push((k, *v));
                    }
                }
            }
            row[q] = 1.0;
        }
        for r in 0..self.m {
            if r == p {
                continue;
            }
            let f = self.t[r * nc + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[r * nc..(r + 1) * nc];
            for &(k, v) in &self.scratch {
                let nv = row[k] - f * v;
                row[k] = if nv.abs() < DROP_TOL { 0.0 } else { nv };
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for &(k, v) in &self.scratch {
                self.d[k] -= f * v;
            }
            self.d[q] = 0.0;
        }
    }

    /// Runs one phase to completion. Returns the phase status.
    fn optimize(&mut self, params: &LpParams) -> LpStatus {
        let mut stall = 0;
        let mut bland = false;
        let mut fresh = false;
        loop {
            if self.iterations >= params.max_iters {
                return LpStatus::IterationLimit;
            }
            let Some(q) = self.choose_entering(params.opt_tol, bland) else {
                if fresh {
                    return LpStatus::Optimal;
                }
                // Confirm optimality against freshly computed data.
                self.refresh();
                fresh = true;
                continue;
            };
            fresh = false;
            let dir = if self.state[q] == ColState::Upper {
                -1.0
            } else {
                1.0
            };
            let Some((step, row)) = self.ratio_test(q, dir, bland) else {
                return LpStatus::Unbounded;
            };
            self.iterations += 1;

            if step > 0.0 {
                for i in 0..self.m {
                    let a = self.t[i * self.ncols + q];
                    if a != 0.0 {
                        self.beta[i] -= dir * step * a;
                    }
                }
            }
            match row {
                None => {
                    self.state[q] = if dir > 0.0 {
                        ColState::Upper
                    } else {
                        ColState::Lower
                    };
                }
                Some(p) => {
                    let entering_value = self.value_of_nonbasic(q) + dir * step;
                    let leaving = self.basis[p];
                    let alpha = dir * self.t[p * self.ncols + q];
                    self.state[leaving] = if alpha > 0.0 {
                        ColState::Lower
                    } else {
                        ColState::Upper
                    };
                    self.state[q] = ColState::Basic;
                    self.basis[p] = q;
                    self.pivot(p, q);
                    self.beta[p] = entering_value;
                }
            }

            if step <= 1e-12 {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }
            if self.iterations % REFRESH_EVERY == 0 {
                self.refresh();
            }
        }
    }

    fn run(&mut self, params: &LpParams) -> LpStatus {
        if self.has_artificials() {
            for j in self.artificial_start..self.ncols {
                self.cost[j] = 1.0;
            }
            self.recompute_reduced_costs();
            match self.optimize(params) {
                LpStatus::Optimal => {}
                other => return other,
            }
            let infeas: f64 = (0..self.m)
                .filter(|&i| self.basis[i] >= self.artificial_start)
                .map(|i| self.beta[i].max(0.0))
                .sum();
            let scale = self.rhs.iter().fold(1.0f64, |acc, b| acc.max(b.abs()));
            if infeas > params.feas_tol * scale {
                return LpStatus::Infeasible;
            }
            for j in self.artificial_start..self.ncols {
                self.cost[j] = 0.0;
                self.upper[j] = 0.0;
            }
        }
        self.cost[..self.n].copy_from_slice(&self.phase_two_cost);
        self.recompute_reduced_costs();
        self.optimize(params)
    }

    fn finish(
        mut self,
        objective: &[f64],
        constraints: &[&Constraint],
        status: LpStatus,
        params: &LpParams,
    ) -> Result<LpSolution, LpError> {
        self.recompute_beta();
        let mut values = vec![0.0; self.n];
        let mut basis = vec![BasisStatus::AtLower; self.n];
        for j in 0..self.n {
            match self.state[j] {
                ColState::Lower => values[j] = self.lower[j],
                ColState::Upper => {
                    values[j] = self.upper[j];
                    basis[j] = BasisStatus::AtUpper;
                }
                ColState::Basic => basis[j] = BasisStatus::Basic,
            }
        }
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                values[b] = self.beta[i];
            }
        }
        if status == LpStatus::Optimal {
            let scale = self.rhs.iter().fold(1.0f64, |acc, b| acc.max(b.abs()));
            let threshold = 1e3 * params.feas_tol * scale;
            for j in 0..self.n {
                let v = values[j];
                let clamped = v.clamp(self.lower[j], self.upper[j]);
                let off = (v - clamped).abs();
                if off > threshold {
                    return Err(LpError::NumericalInstability {
                        residual: off,
                        threshold,
                    });
                }
                values[j] = clamped;
            }
            let residual = constraints
                .iter()
                .map(|c| c.violation(&values))
                .fold(0.0, f64::max);
            if residual > threshold {
                return Err(LpError::NumericalInstability {
                    residual,
                    threshold,
                });
            }
        }
        Ok(LpSolution {
            status,
            objective: objective.iter().zip(&values).map(|(c, v)| c * v).sum(),
            values,
            basis,
            iterations: self.iterations,
        })
    }
}
