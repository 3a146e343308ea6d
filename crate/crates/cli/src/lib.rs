//! Command-line pipeline and HTTP service over `profiling-core`.

pub mod commands;
pub mod service;
