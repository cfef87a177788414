//! Reference solvers for tests.
//!
//! Everything here is written for clarity over speed and shares no code with
//! `cogloc-core`. Inputs are plain slices so the oracles cannot accidentally
//! reuse the implementation's data structures.

pub mod facility;
pub mod misc;
pub mod simplex;
