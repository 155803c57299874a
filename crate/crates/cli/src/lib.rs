//! Command-line driver: configuration, scenario runners and artifact output.

pub mod config;
pub mod output;
mod scenarios;

pub use scenarios::{run, Check, Outcome, RunError, Verdict};
