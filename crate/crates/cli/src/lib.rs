//! Command-line driver for private few-shot demonstration synthesis.
//!
//! The binary wraps these modules; they are exposed as a library so the
//! integration tests can drive each subcommand in-process.

mod error;

pub mod config;
pub mod generate;
pub mod measure;
pub mod privacy;
pub mod utility;

pub use error::{CliError, Result};
