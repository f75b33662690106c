//! Reflected modulated branching processes (RMBP), reflected multiplicative
//! processes (RMP) and their queueing duals.
//!
//! The crate is split along the lines of the workflow:
//!
//! - [`rng`], [`modulator`], [`offspring`]: environment and offspring models
//!   with reproducible, splittable random streams.
//! - [`engine`]: the recursions themselves (branching, multiplicative,
//!   Lindley queue, Loynes backward supremum, cycle maxima, randomly stopped
//!   and absorbed systems, truncation).
//! - [`analytics`]: the cumulant function `Psi`, its positive root `alpha*`,
//!   ladder-height statistics and the exact tail constants built on them.
//! - [`tail`]: empirical CCDFs, log-log slopes, Hill estimates, double-Pareto
//!   fits and the lighter-than-power probe.
//!
//! Multiplicative quantities are carried in the log domain throughout.

pub mod analytics;
pub mod engine;
pub mod error;
pub mod modulator;
pub mod offspring;
pub mod rng;
pub mod tail;

pub use error::{Error, Result};
pub use modulator::{LogLaw, ModulatorSpec, TailFn};
pub use offspring::{OffspringDist, OffspringSpec};
pub use rng::RngStream;
