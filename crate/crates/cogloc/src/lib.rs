//! File formats and command-line front end for `cogloc-core`.

pub mod cli;
pub mod io;
