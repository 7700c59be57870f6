//! Equilibrium information disclosure in a consumer-search market with savvy and
//! inexperienced consumers.
//!
//! Firms choose a distribution G of posterior valuations subject to Bayes
//! plausibility (G is a mean-preserving contraction of the prior F). Savvy
//! consumers inspect every firm; inexperienced ones search sequentially with a
//! reservation value. The crate solves for the symmetric equilibrium, certifies
//! it with a convex multiplier and an LP best-response oracle, computes welfare,
//! and simulates the market.

pub mod candidate;
pub mod endogenous;
pub mod error;
pub mod montecarlo;
pub mod exogenous;
pub mod posterior;
pub mod prior;
pub mod quad;
pub mod roots;
pub mod tolerances;
pub mod verify;
pub mod welfare;

pub use candidate::{Candidate, DisclosureShape};
pub use error::{Error, Result};
pub use posterior::{Atom, PosteriorDistribution, Segment};
pub use prior::{Prior, TruncatedMoments};
