//! Closed-form scores.
//!
//! Every score is positively oriented: higher is better and a correct
//! forecast maximises the expected score, so typical values are negative.
//! Nothing in the library flips signs; [`ScoreValue::display`] exists for
//! front ends that want to print the conventional loss orientation.

mod benchmark;
mod gev;
mod kernel;
mod likelihood;
mod rule;

use std::fmt;

pub use benchmark::{
    benchmark_expected_dist, crps_benchmark, crps_extremist, crps_tau_informed,
    exp_gp_min_mean, scrps_benchmark,
};
pub use gev::{crps_gev, ew_dist_gev, scrps_gev, swcrps_gev, wcrps_gev};
pub use kernel::{
    expected_distance, expected_obs_distance, generic_expected_distance_quantile,
    generic_expected_obs_distance_quantile, generic_wcrps_quantile, swcrps, swcrps_direct, wcrps,
    KernelLaw, TruncatedGev,
};
pub use likelihood::{censored_ls, log_score};
pub use rule::{PreparedScore, ScoreRule};

/// Chaining weight `w` and its antiderivative `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSpec {
    /// `w ≡ 1`: the unweighted CRPS kernel.
    Unweighted,
    /// `w(x) = 1{x ≥ q}`, `W(x) = max(x − q, 0)`.
    Quantile(f64),
    /// `w(x) = a + b·1{x ≥ u}`.
    AffineIndicator { a: f64, b: f64, u: f64 },
}

impl WeightSpec {
    pub fn affine(a: f64, b: f64, u: f64) -> crate::Result<Self> {
        if !(a >= 0.0 && b >= 0.0) || !(a + b > 0.0) || u.is_nan() {
            return Err(crate::Error::Domain(format!(
                "affine-indicator weight needs a, b >= 0 not both zero (a = {a}, b = {b})"
            )));
        }
        Ok(WeightSpec::AffineIndicator { a, b, u })
    }

    pub fn weight(&self, x: f64) -> f64 {
        match *self {
            WeightSpec::Unweighted => 1.0,
            WeightSpec::Quantile(q) => f64::from(u8::from(x >= q)),
            WeightSpec::AffineIndicator { a, b, u } => a + b * f64::from(u8::from(x >= u)),
        }
    }

    /// Chaining function `W(x) = ∫_{−∞}^x w(t) dt`, up to an additive constant.
    pub fn chain(&self, x: f64) -> f64 {
        match *self {
            WeightSpec::Unweighted => x,
            WeightSpec::Quantile(q) if q == f64::NEG_INFINITY => x,
            WeightSpec::Quantile(q) => (x - q).max(0.0),
            WeightSpec::AffineIndicator { a, b, u } => a * x + b * (x - u).max(0.0),
        }
    }
}

/// A score in the positive (higher-is-better) orientation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ScoreValue(pub f64);

impl ScoreValue {
    pub fn value(self) -> f64 {
        self.0
    }

    /// Value for printing; `negate` flips to the loss orientation.
    pub fn display(self, negate: bool) -> f64 {
        if negate {
            -self.0
        } else {
            self.0
        }
    }
}

impl From<ScoreValue> for f64 {
    fn from(s: ScoreValue) -> f64 {
        s.0
    }
}

impl fmt::Display for ScoreValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_functions() {
        assert_eq!(WeightSpec::Quantile(2.0).chain(1.0), 0.0);
        assert_eq!(WeightSpec::Quantile(2.0).chain(3.5), 1.5);
        assert_eq!(WeightSpec::Unweighted.chain(-4.0), -4.0);
        let w = WeightSpec::affine(1.0, 0.0, 3.0).unwrap();
        assert_eq!(w.chain(5.0), WeightSpec::Unweighted.chain(5.0));
        assert_eq!(w.weight(10.0), 1.0);
        assert!(WeightSpec::affine(0.0, 0.0, 1.0).is_err());
        assert!(WeightSpec::affine(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn display_negation() {
        assert_eq!(ScoreValue(-0.5).display(true), 0.5);
        assert_eq!(ScoreValue(-0.5).display(false), -0.5);
    }
}
