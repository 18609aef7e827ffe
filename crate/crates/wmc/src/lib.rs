//! File formats, experiment harness and command line for subspace-weighted
//! matrix completion, built on `wmc_core`.

pub mod cli;
pub mod experiments;
pub mod io;
