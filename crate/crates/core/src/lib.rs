//! Numerical laboratory for information-estimation identities on Gaussian
//! channels with feedback and memory.
//!
//! The crate pairs sampling-free linear-Gaussian oracles ([`gauss`]) with
//! Monte Carlo estimators for general discrete-time systems ([`mc`]) and
//! continuous-time systems driven by Brownian motion ([`ctsim`]). The
//! [`identities`] harness differentiates the information side by
//! Richardson-extrapolated finite differences and compares it against the
//! estimation side, emitting [`identities::IdentityReport`]s.
//!
//! All randomness is derived from a single 64-bit seed through fixed
//! substreams (see [`rng`]), so results do not depend on the number of
//! worker threads. With the default `parallel` feature, outer Monte Carlo
//! loops run on rayon; without it everything runs sequentially and produces
//! the same bits.

pub mod builtins;
pub mod ctsim;
mod error;
pub mod gauss;
pub mod identities;
pub mod mc;
pub mod model;
pub mod par;
pub mod quad;
pub mod registry;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    AnySpec, CTSystemSpec, DeBruijnSpec, LinearFeedbackSpec, MessagePrior, Prior,
    ScalarChannelSpec, SystemSpec, ValidationReport,
};
