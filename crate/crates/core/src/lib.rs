//! Proper scoring rules for extreme-value forecasts.
//!
//! The crate provides closed-form threshold-weighted and scaled CRPS for the
//! GEV family, Monte Carlo estimators for arbitrary samples, maximum-likelihood
//! fitting of stationary and trend models, paired comparison tests and the
//! simulation drivers that tie them together.
//!
//! All scores are positively oriented: higher is better.

pub mod distributions;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod kernel_mc;
pub mod numerics;
pub mod scoring;
pub mod seeding;
pub mod stattests;

pub use distributions::{BenchmarkForecast, BenchmarkKind, Forecast, GevParams, PgevParams};
pub use error::{Error, Result};
pub use scoring::{ScoreRule, ScoreValue, WeightSpec};
