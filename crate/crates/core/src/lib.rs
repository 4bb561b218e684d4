//! Detection and policy engine for behavioral (interest-based) ad targeting.
//!
//! * [`profiles`] turns clickstreams into per-selector uncertainty classes
//!   and estimates the distribution of untargeted ads.
//! * [`detector`] solves the robust minimax test deciding whether an ad was
//!   targeted at the user's browsing interests.
//! * [`uniqueness`] measures how atypical the profiles a selector may hold
//!   are, relative to the population.
//! * [`policy`] applies user blocking rules to annotated ads.
//! * [`simulator`] generates labelled streams for end-to-end validation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what the pipeline uses.

pub mod categorizer;
pub mod detector;
pub mod error;
pub mod events;
pub mod lp;
pub mod pmf;
pub mod policy;
pub mod profiles;
pub mod scalar;
pub mod simulator;
pub mod taxonomy;
pub mod uniqueness;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Pmf = pmf::Pmf<f64>;
pub type PmfF32 = pmf::Pmf<f32>;
pub type UncertaintyClass = profiles::UncertaintyClass<f64>;
pub type UncertaintyClassF32 = profiles::UncertaintyClass<f32>;
pub type SelectorState = profiles::SelectorState<f64>;
pub type DetectorRule = detector::DetectorRule<f64>;
pub type DetectorRuleF32 = detector::DetectorRule<f32>;
pub type WorstCaseReport = detector::WorstCaseReport<f64>;
pub type UniquenessReport = uniqueness::UniquenessReport<f64>;
