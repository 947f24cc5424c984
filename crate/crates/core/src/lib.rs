//! Early type-2 diabetes prediction from routine EHR data.
//!
//! The crate covers the whole chain: turning dated encounters into one
//! labelled example per patient ([`preprocess`]), balancing and encoding
//! ([`dataset`]), an attention + dense classifier and its baselines built on
//! a small autodiff substrate ([`nn`], [`model`]), MC-dropout uncertainty with
//! entropy-based abstention ([`uncertainty`]), and confusion-matrix metrics
//! broken down by demographic group ([`evaluation`]). [`synthgen`] produces
//! seeded cohorts in the ingestion format.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod synthgen;
pub mod uncertainty;

pub use error::{Error, Result};
