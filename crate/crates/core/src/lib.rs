//! Differentially private aggregation of next-token distributions.
//!
//! * [`simplex`]: vector primitives on the probability simplex.
//! * [`accountant`]: Rényi-DP accounting and noise calibration.
//! * [`good_radius`]: private estimate of a covering radius.
//! * [`aggregate`]: the iterative radius-reduction aggregator and the
//!   data-independent baseline.
//! * [`seeding`]: named, reproducible random substreams.

mod error;

pub mod accountant;
pub mod aggregate;
pub mod good_radius;
pub mod seeding;
pub mod simplex;

pub use error::{Error, Result};
