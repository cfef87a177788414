//! LP-based branch and bound.
//!
//! Each node is the root problem with tightened bounds on integer
//! variables. A node's LP relaxation is solved from scratch; if its
//! optimum is integral it becomes a candidate incumbent, otherwise one
//! fractional variable `v` is chosen and two children are created with
//! `x_v <= floor(v)` and `x_v >= ceil(v)`.
//!
//! The default search dives depth first until the first incumbent exists
//! and then switches to best-bound order. Ties are broken by node id and
//! variable index, so identical inputs produce identical trees.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::formulation::MilpProblem;
use crate::lp::{solve_with_rows, LazyRows, LpError, LpParams, LpStatus};
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BnbError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("the LP relaxation is unbounded")]
    Unbounded,
    #[error("variable {var} has integral value {value}; nothing to branch on")]
    IntegralValue { var: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    Params(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branching {
    #[default]
    MostFractional,
    PseudoCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchStrategy {
    /// Dive for a first incumbent, then best bound.
    #[default]
    BestBound,
    DepthFirstDive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbParams {
    pub int_tol: f64,
    pub rel_gap: f64,
    pub node_limit: usize,
    /// Seconds. Only enforced with the `std` feature.
    pub time_limit: Option<f64>,
    pub branching: Branching,
    pub search: SearchStrategy,
    pub lp: LpParams,
    /// Optional starting solution; used only if it is feasible and integral.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for BnbParams {
    fn default() -> Self {
        Self {
            int_tol: 1e-6,
            rel_gap: 1e-6,
            node_limit: 1_000_000,
            time_limit: None,
            branching: Branching::MostFractional,
            search: SearchStrategy::BestBound,
            lp: LpParams::default(),
            warm_start: None,
        }
    }
}

impl BnbParams {
    fn validate(&self) -> Result<(), BnbError> {
        if !(self.int_tol > 0.0 && self.int_tol < 0.5) {
            return Err(BnbError::Params("int_tol must be in (0, 0.5)"));
        }
        if !(self.rel_gap > 0.0) {
            return Err(BnbError::Params("rel_gap must be positive"));
        }
        if self.node_limit == 0 {
            return Err(BnbError::Params("node_limit must be positive"));
        }
        if self.time_limit.is_some_and(|t| !(t > 0.0)) {
            return Err(BnbError::Params("time_limit must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    /// Search finished with an incumbent but some node LP hit its iteration
    /// limit, so optimality is not proven.
    Feasible,
    Infeasible,
    LimitReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Incumbent objective, `+inf` without one.
    pub objective: f64,
    /// Incumbent values with integer variables snapped; empty without one.
    pub values: Vec<f64>,
    /// Best proven lower bound.
    pub bound: f64,
    pub nodes_explored: usize,
}

impl MilpSolution {
    pub fn has_incumbent(&self) -> bool {
        !self.values.is_empty()
    }
}

/// A subproblem: the root with replaced variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub depth: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// LP bound inherited from the parent (`-inf` at the root).
    pub parent_bound: f64,
    origin: Option<Origin>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Origin {
    var: usize,
    up: bool,
    distance: f64,
}

impl Node {
    pub fn root(problem: &MilpProblem) -> Self {
        Self {
            id: 0,
            depth: 0,
            lower: problem.lower.clone(),
            upper: problem.upper.clone(),
            parent_bound: f64::NEG_INFINITY,
            origin: None,
        }
    }
}

/// Splits `node` on `var` at fractional `value`: the first child gets
/// `x_var <= floor(value)`, the second `x_var >= ceil(value)`. Child ids
/// are left at 0 for the caller to assign.
pub fn branch(node: &Node, var: usize, value: f64, int_tol: f64) -> Result<(Node, Node), BnbError> {
    let (lo, hi) = (math::floor(value), math::ceil(value));
    if (value - lo).min(hi - value) <= int_tol {
        return Err(BnbError::IntegralValue { var, value });
    }
    let mut low = node.clone();
    low.id = 0;
    low.depth = node.depth + 1;
    low.upper[var] = low.upper[var].min(lo);
    low.origin = Some(Origin {
        var,
        up: false,
        distance: value - lo,
    });
    let mut high = low.clone();
    high.upper[var] = node.upper[var];
    high.lower[var] = high.lower[var].max(hi);
    high.origin = Some(Origin {
        var,
        up: true,
        distance: hi - value,
    });
    Ok((low, high))
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeAction {
    Branched {
        var: usize,
        value: f64,
    },
    /// LP optimum was integral; `improved` if it replaced the incumbent.
    Integral {
        improved: bool,
    },
    PrunedByBound,
    Infeasible,
    /// The node LP stopped at its iteration limit and was dropped.
    LpLimit,
}

/// One line of the node log.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEvent {
    pub id: usize,
    pub depth: usize,
    pub lp_bound: Option<f64>,
    pub global_bound: f64,
    pub incumbent: Option<f64>,
    pub action: NodeAction,
}

impl fmt::Display for NodeEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node={} depth={} lp_bound=", self.id, self.depth)?;
        match self.lp_bound {
            Some(b) => write!(f, "{b}")?,
            None => f.write_str("-")?,
        }
        write!(f, " global_bound={} incumbent=", self.global_bound)?;
        match self.incumbent {
            Some(v) => write!(f, "{v}")?,
            None => f.write_str("-")?,
        }
        match &self.action {
            NodeAction::Branched { var, value } => {
                write!(f, " action=branch var={var} value={value}")
            }
            NodeAction::Integral { improved } => {
                write!(
                    f,
                    " action={}",
                    if *improved { "incumbent" } else { "integral" }
                )
            }
            NodeAction::PrunedByBound => f.write_str(" action=prune"),
            NodeAction::Infeasible => f.write_str(" action=infeasible"),
            NodeAction::LpLimit => f.write_str(" action=lp_limit"),
        }
    }
}

pub fn solve_milp(problem: &MilpProblem, params: &BnbParams) -> Result<MilpSolution, BnbError> {
    solve_milp_logged(problem, params, |_| {})
}

/// As [`solve_milp`], calling `log` once per processed node.
pub fn solve_milp_logged(
    problem: &MilpProblem,
    params: &BnbParams,
    mut log: impl FnMut(&NodeEvent),
) -> Result<MilpSolution, BnbError> {
    params.validate()?;
    problem.validate().map_err(LpError::from)?;
    let int_vars: Vec<usize> = problem.integer_vars().collect();
    let mut search = Search::new(problem, params, &int_vars);

    if let Some(start) = &params.warm_start {
        if start.len() == problem.num_vars() {
            let snapped = search.snap(start);
            let scale = problem
                .constraints
                .iter()
                .fold(1.0f64, |a, c| a.max(c.rhs.abs()));
            if problem.max_violation(&snapped) <= params.lp.feas_tol * scale {
                search.incumbent = Some((problem.objective_value(&snapped), snapped));
            }
        }
    }

    #[cfg(feature = "std")]
    let started = std::time::Instant::now();

    let mut open: Vec<Node> = vec![Node::root(problem)];
    let mut next_id = 1;
    let mut limit_hit = false;
    let mut lp_incomplete = false;
    let mut explored = 0usize;
    let mut lazy = LazyRows::new(problem, &problem.lower, &problem.upper);

    while let Some(node) = search.pop(&mut open) {
        if search.prunable(node.parent_bound) {
            let ev = search.event(&node, None, NodeAction::PrunedByBound, &open);
            log(&ev);
            continue;
        }
        if explored >= params.node_limit {
            open.push(node);
            limit_hit = true;
            break;
        }
        #[cfg(feature = "std")]
        if params
            .time_limit
            .is_some_and(|t| started.elapsed().as_secs_f64() >= t)
        {
            open.push(node);
            limit_hit = true;
            break;
        }

        let lp = solve_with_rows(problem, &node.lower, &node.upper, &params.lp, &mut lazy)?;
        explored += 1;
        match lp.status {
            LpStatus::Infeasible => {
                let ev = search.event(&node, None, NodeAction::Infeasible, &open);
                log(&ev);
            }
            LpStatus::Unbounded => return Err(BnbError::Unbounded),
            LpStatus::IterationLimit => {
                lp_incomplete = true;
                let ev = search.event(&node, None, NodeAction::LpLimit, &open);
                log(&ev);
            }
            LpStatus::Optimal => {
                let z = lp.objective;
                search.record_pseudo_cost(&node, z);
                if search.prunable(z) {
                    let ev = search.event(&node, Some(z), NodeAction::PrunedByBound, &open);
                    log(&ev);
                    continue;
                }
                match search.select(&lp.values) {
                    None => {
                        let snapped = search.snap(&lp.values);
                        let obj = problem.objective_value(&snapped);
                        let improved = search
                            .incumbent
                            .as_ref()
                            .is_none_or(|(best, _)| obj < *best);
                        if improved {
                            search.incumbent = Some((obj, snapped));
                        }
                        let ev =
                            search.event(&node, Some(z), NodeAction::Integral { improved }, &open);
                        log(&ev);
                    }
                    Some(var) => {
                        let value = lp.values[var];
                        let (mut low, mut high) = branch(&node, var, value, params.int_tol)?;
                        low.parent_bound = z;
                        high.parent_bound = z;
                        low.id = next_id;
                        high.id = next_id + 1;
                        next_id += 2;
                        // The child nearer the LP value is explored first when diving.
                        let up_first = value - math::floor(value) >= 0.5;
                        if up_first {
                            open.push(low);
                            open.push(high);
                        } else {
                            open.push(high);
                            open.push(low);
                        }
                        let ev = search.event(
                            &node,
                            Some(z),
                            NodeAction::Branched { var, value },
                            &open,
                        );
                        log(&ev);
                    }
                }
            }
        }
        if let Some((inc, _)) = &search.incumbent {
            if !open.is_empty() && search.global_bound(&open) >= inc - search.slack() {
                open.clear();
            }
        }
    }

    let bound = search.global_bound(&open);
    let (status, objective, values) = match search.incumbent.take() {
        Some((obj, values)) => {
            let status = if limit_hit {
                MilpStatus::LimitReached
            } else if lp_incomplete {
                MilpStatus::Feasible
            } else {
                MilpStatus::Optimal
            };
            (status, obj, values)
        }
        None if limit_hit => (MilpStatus::LimitReached, f64::INFINITY, Vec::new()),
        None if lp_incomplete => (MilpStatus::LimitReached, f64::INFINITY, Vec::new()),
        None => (MilpStatus::Infeasible, f64::INFINITY, Vec::new()),
    };
    let bound = if status == MilpStatus::Optimal {
        bound.min(objective)
    } else {
        bound
    };
    Ok(MilpSolution {
        status,
        objective,
        values,
        bound,
        nodes_explored: explored,
    })
}

struct Search<'a> {
    params: &'a BnbParams,
    int_vars: &'a [usize],
    incumbent: Option<(f64, Vec<f64>)>,
    /// Per variable: (sum down, count down, sum up, count up).
    pseudo: Vec<(f64, u32, f64, u32)>,
}

impl<'a> Search<'a> {
    fn new(problem: &'a MilpProblem, params: &'a BnbParams, int_vars: &'a [usize]) -> Self {
        Self {
            params,
            int_vars,
            incumbent: None,
            pseudo: vec![(0.0, 0, 0.0, 0); problem.num_vars()],
        }
    }

    fn slack(&self) -> f64 {
        match &self.incumbent {
            Some((inc, _)) => self.params.rel_gap * inc.abs().max(1.0),
            None => 0.0,
        }
    }

    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            Some((inc, _)) => bound >= inc - self.slack(),
            None => false,
        }
    }

    fn global_bound(&self, open: &[Node]) -> f64 {
        let open_min = open
            .iter()
            .map(|n| n.parent_bound)
            .fold(f64::INFINITY, f64::min);
        match &self.incumbent {
            Some((inc, _)) => open_min.min(*inc),
            None => open_min,
        }
    }

    fn pop(&self, open: &mut Vec<Node>) -> Option<Node> {
        if open.is_empty() {
            return None;
        }
        let dive = match self.params.search {
            SearchStrategy::DepthFirstDive => true,
            SearchStrategy::BestBound => self.incumbent.is_none(),
        };
        if dive {
            return open.pop();
        }
        let mut best = 0;
        for (k, n) in open.iter().enumerate().skip(1) {
            let b = &open[best];
            if n.parent_bound < b.parent_bound || (n.parent_bound == b.parent_bound && n.id < b.id)
            {
                best = k;
            }
        }
        Some(open.swap_remove(best))
    }

    fn snap(&self, values: &[f64]) -> Vec<f64> {
        let mut x = values.to_vec();
        for &j in self.int_vars {
            x[j] = math::round(x[j]);
        }
        x
    }

    fn record_pseudo_cost(&mut self, node: &Node, z: f64) {
        if let Some(o) = node.origin {
            let gain = (z - node.parent_bound).max(0.0) / o.distance.max(1e-9);
            let e = &mut self.pseudo[o.var];
            if o.up {
                e.2 += gain;
                e.3 += 1;
            } else {
                e.0 += gain;
                e.1 += 1;
            }
        }
    }

    /// Branching variable, or `None` if `values` is integral.
    fn select(&self, values: &[f64]) -> Option<usize> {
        let tol = self.params.int_tol;
        let fractional = self.int_vars.iter().copied().filter(|&j| {
            let v = values[j];
            (v - math::round(v)).abs() > tol
        });
        match self.params.branching {
            Branching::MostFractional => {
                let mut best: Option<(usize, f64)> = None;
                for j in fractional {
                    let f = values[j] - math::floor(values[j]);
                    let score = f.min(1.0 - f);
                    if best.is_none_or(|(_, s)| score > s + 1e-12) {
                        best = Some((j, score));
                    }
                }
                best.map(|(j, _)| j)
            }
            Branching::PseudoCost => {
                let (mut sum, mut cnt) = (0.0, 0u32);
                for e in &self.pseudo {
                    sum += e.0 + e.2;
                    cnt += e.1 + e.3;
                }
                let fallback = if cnt > 0 { sum / cnt as f64 } else { 1.0 };
                let mut best: Option<(usize, f64)> = None;
                for j in fractional {
                    let f = values[j] - math::floor(values[j]);
                    let e = self.pseudo[j];
                    let down = if e.1 > 0 { e.0 / e.1 as f64 } else { fallback };
                    let up = if e.3 > 0 { e.2 / e.3 as f64 } else { fallback };
                    let score = (f * down).max(1e-6) * ((1.0 - f) * up).max(1e-6);
                    if best.is_none_or(|(_, s)| score > s * (1.0 + 1e-12)) {
                        best = Some((j, score));
                    }
                }
                best.map(|(j, _)| j)
            }
        }
    }

    fn event(
        &self,
        node: &Node,
        lp_bound: Option<f64>,
        action: NodeAction,
        open: &[Node],
    ) -> NodeEvent {
        NodeEvent {
            id: node.id,
            depth: node.depth,
            lp_bound,
            global_bound: self.global_bound(open),
            incumbent: self.incumbent.as_ref().map(|(v, _)| *v),
            action,
        }
    }
}

/// Names of integer variables set to one, for diagnostics.
pub fn active_binaries(problem: &MilpProblem, values: &[f64]) -> Vec<String> {
    problem
        .integer_vars()
        .filter(|&j| values.get(j).is_some_and(|v| *v > 0.5))
        .map(|j| problem.names[j].clone())
        .collect()
}
