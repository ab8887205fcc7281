//! Training runs, evaluation, file formats and the command line on top of
//! `bac-core`.

pub mod checkpoint;
pub mod config;
pub mod csvlog;
pub mod error;
pub mod evaluate;
pub mod fixtures;
pub mod plot;
pub mod replay;
pub mod selftest;
pub mod snapshot;
pub mod store;
pub mod suites;
pub mod train;

pub use config::{OpponentSpec, RunConfig};
pub use error::HarnessError;
