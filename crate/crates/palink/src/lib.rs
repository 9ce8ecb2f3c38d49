//! File formats, experiment harness and command-line front end for the
//! `palink-core` link simulator.
//!
//! The core crate is pure computation. Everything that touches the file
//! system lives here: scenario files, amplifier and predistorter
//! coefficient files, the covariance and Bussgang caches, CSV result
//! bundles and run manifests.

pub mod cache;
pub mod coeffs;
pub mod dump;
pub mod error;
pub mod harness;
pub mod manifest;
pub mod outputs;
pub mod scenario_file;

pub use error::{Error, Result};
pub use harness::{ExitStatus, Leg, Metric, Plan, RunOptions};
pub use manifest::RunManifest;
