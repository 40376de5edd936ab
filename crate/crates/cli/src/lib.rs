//! Driver library for the techembed pipeline: configuration, file formats,
//! the remote generation backend, experiment orchestration, report
//! rendering, and the bundled synthetic benchmark.

pub mod config;
pub mod experiment;
pub mod files;
pub mod remote;
pub mod report;
pub mod synth;
