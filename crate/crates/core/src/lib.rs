//! Semantic contracts for distributed uplift policy scoring and split search.
//!
//! The crate is organised around a small in-memory columnar engine
//! ([`frame`]) and the pieces built on top of it:
//!
//! - [`synth`] generates seeded adversarial datasets;
//! - [`forest`] holds array-native policy forests and the batch traversal kernel;
//! - [`inference`] scores partitioned frames with interchangeable backends;
//! - [`split`] finds multi-treatment splits from fixed-boundary prefix sums;
//! - [`trainer`] grows witness policy trees and compares them.

pub mod error;
pub mod forest;
pub mod frame;
pub mod inference;
pub mod rng;
pub mod split;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
