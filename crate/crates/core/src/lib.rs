//! Center-of-gravity warehouse location.
//!
//! This crate holds the algorithmic half of the toolkit: distance
//! primitives, the facility-location MILP, a bounded-variable primal
//! simplex, an LP-based branch and bound, the candidate/packet
//! reductions, continuous single-facility refinement and the two-stage
//! "step-well" orchestration.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. Without `std`, wall-clock limits in [`bnb::BnbParams`] are
//! ignored and stage timings in [`pipeline::StepWellReport`] read zero.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod math;

pub mod bnb;
pub mod cog;
pub mod formulation;
pub mod geo;
pub mod lp;
pub mod model;
pub mod pipeline;
pub mod reduction;

pub use bnb::{solve_milp, BnbParams, MilpSolution, MilpStatus};
pub use formulation::{build, lp_relaxation, MilpProblem};
pub use geo::{distance_matrix, haversine_miles, planar_miles, DistanceMatrix, GeoPoint, Metric};
pub use lp::{solve_lp, LpParams, LpSolution, LpStatus};
pub use model::{
    evaluate, Customer, Scenario, Site, SiteStatus, Solution, SolverStatus, StateAttr,
};
pub use pipeline::{
    compare, run_scenario, solve_flat, step_well_solve, step_well_stage1, StepWellConfig,
    StepWellReport, StepWellStage1,
};
