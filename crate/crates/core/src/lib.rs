//! Model risk as an investment opportunity.
//!
//! Simulates vol-targeted indices under competing diffusions, buckets the
//! booking-believed and market-implied distributions of a path variable, and
//! measures their disagreement as the expected log return of the
//! growth-optimal payoff `f = b / m`.
//!
//! * [`market_models`]: constant-vol, Dupire local-vol and SLV path simulation.
//! * [`vol_target`]: the realized-vol estimator and vol-targeting overlay.
//! * [`distributions`]: bucket schemes, histograms and state-price normalization.
//! * [`risk_engine`]: MRP, payoff, expected return, materiality and the
//!   moment-matching ladder.
//! * [`scenario`]: config-driven runs that write `report.json` and payoff CSVs.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod error;
pub mod market_models;
mod par;
pub mod risk_engine;
pub mod scenario;
pub mod vol_target;

pub use error::{Error, Result};
