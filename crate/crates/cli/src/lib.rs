//! Configuration, orchestration, persistence and verification for the
//! brake-orbit and strip solvers.

pub mod config;
pub mod io;
pub mod manifest;
pub mod runner;

pub use config::{Mode, RunConfig};
pub use manifest::Manifest;
pub use runner::{run, RunError, RunOutcome};
