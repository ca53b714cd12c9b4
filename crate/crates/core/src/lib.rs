//! Shared energy storage (SES) aggregation among price-tolerant prosumers.
//!
//! The crate is `no_std` + `alloc`: every module is a pure computation over
//! in-memory values. File formats, reports and the command line live in the
//! `sesim` companion crate.
//!
//! Module map:
//!
//! - [`domain`]: prosumers, tariffs, SES configuration and aggregate state.
//! - [`dws`]: credit-based deposit/withdrawal service (credits, factors,
//!   virtual routing, day-end settlement).
//! - [`market`]: SOC dynamics with feasibility repair, trading, degradation,
//!   virtual cash flows, bills and the daily objective.
//! - [`matching`]: contract threshold, matching evaluation and Shapley split.
//! - [`lifecycle`]: construction / operation / reconstruction driver and the
//!   four ablation cases.
//! - [`env`]: hourly simulator and the MDP wrapper used for learning.
//! - [`cnepr`]: combined neighboring experience pool replay.
//! - [`nn`] and [`td3`]: dense networks with hand-written backprop and the
//!   twin-delayed actor-critic learner.
//! - [`scenario`]: scenario container, synthetic generator, price forecaster.
//! - [`training`]: training loops, policies and evaluation helpers.
#![no_std]
// `!(x > 0.0)` style checks reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cnepr;
pub mod domain;
pub mod dws;
pub mod env;
mod error;
pub mod lifecycle;
pub mod market;
pub mod matching;
pub mod nn;
pub mod scenario;
pub mod td3;
pub mod training;

pub use error::{Error, Result};
