//! Pipeline CLI for the finite-range lattice covariance decomposition:
//! configuration, disk caching of Poisson tables, and the batch
//! subcommands (`decompose`, `verify`, `rates`, `levy`, `export`).

pub mod cache;
pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;
