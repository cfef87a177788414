//! Facility-location MILP in row form.
//!
//! Variable layout for `x` customers and `y` sites:
//!
//! * `c_j` (index `j`, `0 <= j < y`): binary, site `j` is open.
//! * `f_i_j` (index `y + i*y + j`): flow from site `j` to customer `i`,
//!   continuous in `[0, demand_i]`. In single-source mode the same slot
//!   holds the binary assignment `a_i_j` and the shipped flow is
//!   `demand_i * a_i_j`.
//!
//! Rows, in order:
//!
//! 1. `demand_i`: `sum_j f_ij >= demand_i` (`=` in strict mode;
//!    `sum_j a_ij = 1` in single-source mode).
//! 2. `cardinality`: `sum_j c_j = L` (or `<= L`).
//! 3. `link_i_j`: `f_ij - demand_i * c_j <= 0` (`a_ij - c_j <= 0`). Without
//!    these, flow could leave closed sites.
//! 4. `mad` (optional): `sum f_ij d_ij <= MAD * total_demand`.
//! 5. `mpct` (optional): `sum f_ij p_ij >= MPCT * total_demand` with
//!    `p_ij = [d_ij <= radius]` unless explicit coverage is supplied.
//! 6. `total_demand` (optional): `sum f_ij >= total_demand`.
//! 7. `open_j` / `closed_j`: `c_j = 1` / `c_j = 0` for forced sites.
//!
//! The ratio constraints on average distance and coverage are multiplied
//! through by total demand so every row stays linear.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use thiserror::Error;

use crate::geo::DistanceMatrix;
use crate::model::{CardinalityMode, Customer, ModelError, Scenario, Site};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error("distance matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Dimension {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("coverage table has {got} entries, expected {expected}")]
    CoverageShape { expected: usize, got: usize },
    #[error("formulation needs at least one customer and one site")]
    Empty,
    #[error(transparent)]
    Scenario(#[from] ModelError),
    #[error("forced site `{0}` is not among the candidate sites")]
    UnknownForcedSite(String),
    #[error("{forced} sites forced open exceed the warehouse limit {limit}")]
    ForcedExceedsLimit { forced: usize, limit: usize },
    #[error("row `{row}` references variable {var} but the problem has {num_vars}")]
    BadIndex {
        row: String,
        var: usize,
        num_vars: usize,
    },
    #[error("variable `{name}` has invalid bounds [{lower}, {upper}]")]
    BadBounds {
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("non-finite coefficient in `{0}`")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_integer(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// Sparse `(variable, coefficient)` pairs. Indices are unique.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A minimization problem `min c'x` subject to rows and variable bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MilpProblem {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kinds: Vec<VarKind>,
    pub names: Vec<String>,
    pub constraints: Vec<Constraint>,
}

impl MilpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        cost: f64,
        lower: f64,
        upper: f64,
        kind: VarKind,
    ) -> usize {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.kinds.push(kind);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn integer_vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| k.is_integer())
            .map(|(j, _)| j)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn is_integral(&self, x: &[f64], tol: f64) -> bool {
        self.integer_vars()
            .all(|j| (x[j] - crate::math::round(x[j])).abs() <= tol)
    }

    pub fn validate(&self) -> Result<(), FormulationError> {
        let n = self.num_vars();
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(FormulationError::BadBounds {
                    name: self.names[j].clone(),
                    lower: l,
                    upper: u,
                });
            }
            if self.kinds[j] == VarKind::Binary && (l < 0.0 || u > 1.0) {
                return Err(FormulationError::BadBounds {
                    name: self.names[j].clone(),
                    lower: l,
                    upper: u,
                });
            }
            if !self.objective[j].is_finite() {
                return Err(FormulationError::NonFinite(self.names[j].clone()));
            }
        }
        for row in &self.constraints {
            if !row.rhs.is_finite() {
                return Err(FormulationError::NonFinite(row.name.clone()));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(FormulationError::BadIndex {
                        row: row.name.clone(),
                        var: j,
                        num_vars: n,
                    });
                }
                if !a.is_finite() {
                    return Err(FormulationError::NonFinite(row.name.clone()));
                }
            }
        }
        Ok(())
    }

    /// Renders the problem in CPLEX-style LP text. The grammar is described
    /// in the repository README.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        out.push_str("\\ cogloc facility-location MILP\nMinimize\n obj:");
        let obj: Vec<(usize, f64)> = self
            .objective
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, c)| c != 0.0)
            .collect();
        write_terms(&mut out, &obj, &self.names);
        if obj.is_empty() {
            out.push_str(" 0");
        }
        out.push_str("\nSubject To\n");
        for row in &self.constraints {
            let _ = write!(out, " {}:", row.name);
            write_terms(&mut out, &row.coeffs, &self.names);
            if row.coeffs.is_empty() {
                out.push_str(" 0");
            }
            let _ = writeln!(out, " {} {}", row.relation.symbol(), fmt_num(row.rhs));
        }
        out.push_str("Bounds\n");
        for j in 0..self.num_vars() {
            let (l, u, name) = (self.lower[j], self.upper[j], &self.names[j]);
            let _ = match (l.is_finite(), u.is_finite()) {
                (true, true) => writeln!(out, " {} <= {} <= {}", fmt_num(l), name, fmt_num(u)),
                (true, false) => writeln!(out, " {} >= {}", name, fmt_num(l)),
                (false, true) => writeln!(out, " -inf <= {} <= {}", name, fmt_num(u)),
                (false, false) => writeln!(out, " {} free", name),
            };
        }
        for (section, kind) in [
            ("Binaries", VarKind::Binary),
            ("Generals", VarKind::Integer),
        ] {
            let vars: Vec<&str> = (0..self.num_vars())
                .filter(|&j| self.kinds[j] == kind)
                .map(|j| self.names[j].as_str())
                .collect();
            if !vars.is_empty() {
                let _ = writeln!(out, "{section}");
                for chunk in vars.chunks(10) {
                    let _ = writeln!(out, " {}", chunk.join(" "));
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn write_terms(out: &mut String, terms: &[(usize, f64)], names: &[String]) {
    for (k, &(j, a)) in terms.iter().enumerate() {
        if k > 0 && k % 8 == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", fmt_num(a.abs()), names[j]);
    }
}

/// Index arithmetic for the facility variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub customers: usize,
    pub sites: usize,
}

impl VarLayout {
    pub fn new(customers: usize, sites: usize) -> Self {
        Self { customers, sites }
    }

    #[inline]
    pub fn open(&self, site: usize) -> usize {
        site
    }

    #[inline]
    pub fn flow(&self, customer: usize, site: usize) -> usize {
        self.sites + customer * self.sites + site
    }

    pub fn num_vars(&self) -> usize {
        self.sites + self.customers * self.sites
    }
}

/// Builds the MILP with the radius indicator as coverage.
pub fn build(
    customers: &[Customer],
    sites: &[Site],
    scenario: &Scenario,
    distances: &DistanceMatrix,
) -> Result<MilpProblem, FormulationError> {
    build_with_coverage(customers, sites, scenario, distances, None)
}

/// Builds the MILP. `coverage`, when given, is a row-major customer × site
/// table of the fraction of each customer's demand counted as "within the
/// radius" (used for aggregated customers, where the fraction need not be
/// 0 or 1).
pub fn build_with_coverage(
    customers: &[Customer],
    sites: &[Site],
    scenario: &Scenario,
    distances: &DistanceMatrix,
    coverage: Option<&[f64]>,
) -> Result<MilpProblem, FormulationError> {
    scenario.validate()?;
    let (x, y) = (customers.len(), sites.len());
    if x == 0 || y == 0 {
        return Err(FormulationError::Empty);
    }
    if distances.rows() != x || distances.cols() != y {
        return Err(FormulationError::Dimension {
            rows: distances.rows(),
            cols: distances.cols(),
            expected_rows: x,
            expected_cols: y,
        });
    }
    if let Some(cov) = coverage {
        if cov.len() != x * y {
            return Err(FormulationError::CoverageShape {
                expected: x * y,
                got: cov.len(),
            });
        }
    }
    let site_index: BTreeMap<&str, usize> = sites
        .iter()
        .enumerate()
        .map(|(j, s)| (s.id.as_str(), j))
        .collect();
    for id in scenario.forced_open.iter().chain(&scenario.forced_closed) {
        if !site_index.contains_key(id.as_str()) {
            return Err(FormulationError::UnknownForcedSite(id.clone()));
        }
    }
    if scenario.forced_open.len() > scenario.warehouse_limit {
        return Err(FormulationError::ForcedExceedsLimit {
            forced: scenario.forced_open.len(),
            limit: scenario.warehouse_limit,
        });
    }

    let layout = VarLayout::new(x, y);
    let single = scenario.single_source;
    let demand: Vec<f64> = customers.iter().map(|c| c.demand).collect();
    let total_demand: f64 = demand.iter().sum();

    let mut p = MilpProblem::new();
    for (j, s) in sites.iter().enumerate() {
        p.add_var(format!("c_{j}"), s.fixed_cost, 0.0, 1.0, VarKind::Binary);
    }
    for i in 0..x {
        for j in 0..y {
            let d = distances.get(i, j);
            if single {
                p.add_var(
                    format!("a_{i}_{j}"),
                    demand[i] * d,
                    0.0,
                    1.0,
                    VarKind::Binary,
                );
            } else {
                p.add_var(format!("f_{i}_{j}"), d, 0.0, demand[i], VarKind::Continuous);
            }
        }
    }
    debug_assert_eq!(p.num_vars(), layout.num_vars());

    // Coefficient turning the slot value into shipped flow.
    let ship = |i: usize| if single { demand[i] } else { 1.0 };

    for i in 0..x {
        let coeffs = (0..y).map(|j| (layout.flow(i, j), 1.0)).collect();
        if single {
            p.add_constraint(format!("demand_{i}"), coeffs, Relation::Eq, 1.0);
        } else {
            let rel = if scenario.strict_demand {
                Relation::Eq
            } else {
                Relation::Ge
            };
            p.add_constraint(format!("demand_{i}"), coeffs, rel, demand[i]);
        }
    }

    let rel = match scenario.cardinality_mode {
        CardinalityMode::Exact => Relation::Eq,
        CardinalityMode::AtMost => Relation::Le,
    };
    let coeffs = (0..y).map(|j| (layout.open(j), 1.0)).collect();
    p.add_constraint("cardinality", coeffs, rel, scenario.warehouse_limit as f64);

    for i in 0..x {
        let link = if single { 1.0 } else { demand[i] };
        for j in 0..y {
            p.add_constraint(
                format!("link_{i}_{j}"),
                alloc::vec![(layout.open(j), -link), (layout.flow(i, j), 1.0)],
                Relation::Le,
                0.0,
            );
        }
    }

    if let Some(mad) = scenario.mad_limit {
        let coeffs = (0..x)
            .flat_map(|i| (0..y).map(move |j| (i, j)))
            .map(|(i, j)| (layout.flow(i, j), ship(i) * distances.get(i, j)))
            .collect();
        p.add_constraint("mad", coeffs, Relation::Le, mad * total_demand);
    }

    if let Some(frac) = scenario.mpct_fraction {
        let radius = scenario.mpct_radius.ok_or(ModelError::MpctRadiusMissing)?;
        let mut coeffs = Vec::new();
        for i in 0..x {
            for j in 0..y {
                let cov = match coverage {
                    Some(c) => c[i * y + j],
                    None if distances.get(i, j) <= radius => 1.0,
                    None => 0.0,
                };
                if cov != 0.0 {
                    coeffs.push((layout.flow(i, j), ship(i) * cov));
                }
            }
        }
        p.add_constraint("mpct", coeffs, Relation::Ge, frac * total_demand);
    }

    if scenario.total_demand_row {
        let coeffs = (0..x)
            .flat_map(|i| (0..y).map(move |j| (i, j)))
            .map(|(i, j)| (layout.flow(i, j), ship(i)))
            .collect();
        p.add_constraint("total_demand", coeffs, Relation::Ge, total_demand);
    }

    for id in &scenario.forced_open {
        let j = site_index[id.as_str()];
        p.add_constraint(
            format!("open_{j}"),
            alloc::vec![(layout.open(j), 1.0)],
            Relation::Eq,
            1.0,
        );
    }
    for id in &scenario.forced_closed {
        let j = site_index[id.as_str()];
        p.add_constraint(
            format!("closed_{j}"),
            alloc::vec![(layout.open(j), 1.0)],
            Relation::Eq,
            0.0,
        );
    }

    Ok(p)
}

/// The same problem with every integrality restriction dropped.
pub fn lp_relaxation(problem: &MilpProblem) -> MilpProblem {
    let mut relaxed = problem.clone();
    relaxed
        .kinds
        .iter_mut()
        .for_each(|k| *k = VarKind::Continuous);
    relaxed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::model::SiteStatus;

    fn instance(x: usize, y: usize) -> (Vec<Customer>, Vec<Site>, DistanceMatrix) {
        let customers: Vec<Customer> = (0..x)
            .map(|i| {
                Customer::new(
                    format!("c{i}"),
                    GeoPoint::new(0.0, i as f64).unwrap(),
                    1.0 + i as f64,
                    "S",
                )
                .unwrap()
            })
            .collect();
        let sites: Vec<Site> = (0..y)
            .map(|j| {
                Site::new(
                    format!("w{j}"),
                    GeoPoint::new(1.0, j as f64).unwrap(),
                    "S",
                    SiteStatus::GreenfieldCandidate,
                    0.0,
                )
                .unwrap()
            })
            .collect();
        let data = (0..x * y).map(|k| (k % 7) as f64 + 1.0).collect();
        (
            customers,
            sites,
            DistanceMatrix::from_row_major(x, y, data).unwrap(),
        )
    }

    #[test]
    fn smallest_instance_counts() {
        let (c, s, d) = instance(1, 1);
        let p = build(&c, &s, &Scenario::new(1), &d).unwrap();
        assert_eq!(p.num_vars(), 2);
        let names: Vec<&str> = p.constraints.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["demand_0", "cardinality", "link_0_0"]);
    }

    #[test]
    fn three_by_two_counts() {
        let (c, s, d) = instance(3, 2);
        let p = build(&c, &s, &Scenario::new(1), &d).unwrap();
        assert_eq!(p.num_vars(), 2 + 6);
        assert_eq!(p.num_rows(), 3 + 1 + 6);
        assert_eq!(p.integer_vars().count(), 2);

        let mut sc = Scenario::new(1);
        sc.mad_limit = Some(3.0);
        sc.mpct_fraction = Some(0.5);
        sc.mpct_radius = Some(2.0);
        let q = build(&c, &s, &sc, &d).unwrap();
        assert_eq!(q.num_rows(), p.num_rows() + 2);
    }

    #[test]
    fn single_source_uses_binary_assignments() {
        let (c, s, d) = instance(3, 2);
        let mut sc = Scenario::new(1);
        sc.single_source = true;
        let p = build(&c, &s, &sc, &d).unwrap();
        assert_eq!(p.num_vars(), 2 + 6);
        assert_eq!(p.integer_vars().count(), 8);
        assert_eq!(p.constraints[0].relation, Relation::Eq);
        assert_eq!(p.constraints[0].rhs, 1.0);
        // cost of a_0_0 is demand_0 * d_00
        assert_eq!(p.objective[2], 1.0 * d.get(0, 0));
    }

    #[test]
    fn forced_sites_add_rows_and_unknown_ids_fail() {
        let (c, s, d) = instance(2, 3);
        let mut sc = Scenario::new(2);
        sc.forced_open.insert("w1".into());
        sc.forced_closed.insert("w2".into());
        let p = build(&c, &s, &sc, &d).unwrap();
        let tail: Vec<&str> = p
            .constraints
            .iter()
            .rev()
            .take(2)
            .map(|r| r.name.as_str())
            .collect();
        assert_eq!(tail, ["closed_2", "open_1"]);

        sc.forced_open.insert("w9".into());
        assert_eq!(
            build(&c, &s, &sc, &d),
            Err(FormulationError::UnknownForcedSite("w9".into()))
        );
    }

    #[test]
    fn dimension_mismatch() {
        let (c, s, _) = instance(2, 2);
        let (_, _, d) = instance(3, 2);
        assert!(matches!(
            build(&c, &s, &Scenario::new(1), &d),
            Err(FormulationError::Dimension { .. })
        ));
    }

    #[test]
    fn relaxation_drops_integrality_and_is_idempotent() {
        let (c, s, d) = instance(2, 2);
        let p = build(&c, &s, &Scenario::new(1), &d).unwrap();
        let r = lp_relaxation(&p);
        assert_eq!(r.integer_vars().count(), 0);
        assert_eq!(r.constraints, p.constraints);
        assert_eq!(lp_relaxation(&r), r);
    }

    #[test]
    fn unit_fixed_costs_make_fixed_term_equal_limit() {
        let (c, mut s, d) = instance(3, 4);
        s.iter_mut().for_each(|site| site.fixed_cost = 1.0);
        let p = build(&c, &s, &Scenario::new(2), &d).unwrap();
        // any point with exactly two open sites
        let mut x = alloc::vec![0.0; p.num_vars()];
        x[1] = 1.0;
        x[3] = 1.0;
        let fixed: f64 = (0..4).map(|j| p.objective[j] * x[j]).sum();
        assert_eq!(fixed, 2.0);
    }

    #[test]
    fn lp_text_has_all_sections() {
        let (c, s, d) = instance(1, 2);
        let text = build(&c, &s, &Scenario::new(1), &d).unwrap().to_lp_format();
        for section in ["Minimize", "Subject To", "Bounds", "Binaries", "End"] {
            assert!(text.contains(section), "{section} missing:\n{text}");
        }
        assert!(text.contains(" cardinality: + 1 c_0 + 1 c_1 = 1"));
        assert!(text.contains(" link_0_1: - 1 c_1 + 1 f_0_1 <= 0"));
    }
}
