//! Batch experiments on performance estimation problems: parameter sweeps,
//! closed-form cross-checks, worst-case instances and optimal steps.

pub mod config;
pub mod error;
pub mod instance;
pub mod output;
pub mod run;
pub mod steps;
pub mod verify;

pub use error::{CliError, Result};
