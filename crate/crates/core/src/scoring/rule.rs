use std::fmt;

use crate::distributions::Forecast;
use crate::error::{Error, Result};

use super::benchmark::{crps_benchmark, scrps_benchmark};
use super::kernel::{expected_distance, KernelLaw};
use super::likelihood::censored_ls;
use super::WeightSpec;

/// A scoring rule, selectable at run time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreRule {
    /// Logarithmic score.
    Ls,
    /// Censored likelihood score with threshold `q`.
    CensoredLs(f64),
    Crps,
    /// Scaled CRPS.
    Scrps,
    Wcrps(WeightSpec),
    /// Scaled threshold-weighted CRPS.
    Swcrps(WeightSpec),
}

impl ScoreRule {
    pub fn name(&self) -> &'static str {
        match self {
            ScoreRule::Ls => "LS",
            ScoreRule::CensoredLs(_) => "LS_q",
            ScoreRule::Crps => "CRPS",
            ScoreRule::Scrps => "SCRPS",
            ScoreRule::Wcrps(_) => "wCRPS",
            ScoreRule::Swcrps(_) => "swCRPS",
        }
    }

    /// Kernel weight for the kernel-score rules; `None` for likelihood scores.
    pub fn kernel_weight(&self) -> Option<WeightSpec> {
        match *self {
            ScoreRule::Crps | ScoreRule::Scrps => Some(WeightSpec::Unweighted),
            ScoreRule::Wcrps(w) | ScoreRule::Swcrps(w) => Some(w),
            ScoreRule::Ls | ScoreRule::CensoredLs(_) => None,
        }
    }

    pub fn is_scaled(&self) -> bool {
        matches!(self, ScoreRule::Scrps | ScoreRule::Swcrps(_))
    }

    /// Score a law at `y`.
    pub fn evaluate<L: KernelLaw + ?Sized>(&self, law: &L, y: f64) -> Result<f64> {
        Ok(self.prepare(law)?.score(y))
    }

    /// Precompute the `y`-independent parts for repeated scoring of one law.
    pub fn prepare<'a, L: KernelLaw + ?Sized>(&self, law: &'a L) -> Result<PreparedScore<'a, L>> {
        let mut expected = None;
        if let Some(w) = self.kernel_weight() {
            law.check_kernel()?;
            if self.is_scaled() {
                expected = Some(expected_distance(law, &w)?);
            }
        }
        Ok(PreparedScore {
            law,
            rule: *self,
            expected,
        })
    }

    /// Score any [`Forecast`]. Benchmark laws support the likelihood scores,
    /// CRPS and SCRPS; ensembles only the censored branch of `LS_q`.
    pub fn evaluate_forecast(&self, f: &Forecast, y: f64) -> Result<f64> {
        match f {
            Forecast::Gev(p) => self.evaluate(p, y),
            Forecast::Pgev(p) => self.evaluate(&p.to_gev(), y),
            Forecast::Benchmark(b) => match self {
                ScoreRule::Ls => f.logpdf(y),
                ScoreRule::CensoredLs(q) => censored_ls(f, *q, y).map(f64::from),
                ScoreRule::Crps => crps_benchmark(b, y).map(f64::from),
                ScoreRule::Scrps => scrps_benchmark(b, y).map(f64::from),
                _ => Err(Error::domain(format!(
                    "{} has no closed form for benchmark forecasts",
                    self.name()
                ))),
            },
            Forecast::Ensemble(_) => match self {
                ScoreRule::CensoredLs(q) => censored_ls(f, *q, y).map(f64::from),
                _ => Err(Error::domain(format!(
                    "{} of an ensemble needs the Monte Carlo estimators",
                    self.name()
                ))),
            },
        }
    }
}

impl fmt::Display for ScoreRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A rule bound to one law with its kernel expectation cached.
#[derive(Debug, Clone, Copy)]
pub struct PreparedScore<'a, L: ?Sized> {
    law: &'a L,
    rule: ScoreRule,
    expected: Option<f64>,
}

impl<L: KernelLaw + ?Sized> PreparedScore<'_, L> {
    pub fn score(&self, y: f64) -> f64 {
        let law = self.law;
        match self.rule {
            ScoreRule::Ls => law.logpdf(y),
            ScoreRule::CensoredLs(q) => {
                if y <= q {
                    law.log_cdf(q)
                } else {
                    law.logpdf(y)
                }
            }
            ScoreRule::Crps => law.wcrps_quantile(f64::NEG_INFINITY, y),
            ScoreRule::Wcrps(w) => weighted(law, &w, y),
            ScoreRule::Scrps => scaled(law, &WeightSpec::Unweighted, self.expected, y),
            ScoreRule::Swcrps(w) => scaled(law, &w, self.expected, y),
        }
    }
}

fn weighted<L: KernelLaw + ?Sized>(law: &L, w: &WeightSpec, y: f64) -> f64 {
    match *w {
        WeightSpec::Unweighted => law.wcrps_quantile(f64::NEG_INFINITY, y),
        WeightSpec::Quantile(q) => law.wcrps_quantile(q, y),
        WeightSpec::AffineIndicator { a, b, u } => {
            let mut total = 0.0;
            if a != 0.0 {
                total += a * law.wcrps_quantile(f64::NEG_INFINITY, y);
            }
            if b != 0.0 {
                total += b * law.wcrps_quantile(u, y);
            }
            total
        }
    }
}

fn scaled<L: KernelLaw + ?Sized>(law: &L, w: &WeightSpec, e: Option<f64>, y: f64) -> f64 {
    let e = e.expect("scaled rules cache their kernel expectation");
    weighted(law, w, y) / e - 0.5 * e.ln() - 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{BenchmarkForecast, GevParams};
    use crate::scoring::{crps_gev, swcrps_gev, TruncatedGev};
    use approx::assert_abs_diff_eq;

    #[test]
    fn rules_agree_with_named_functions() {
        let p = GevParams::new(0.0, 1.0, 0.12).unwrap();
        let q = p.quantile(0.9).unwrap();
        let w = WeightSpec::Quantile(q);
        assert_eq!(ScoreRule::Crps.evaluate(&p, 1.0).unwrap(), crps_gev(&p, 1.0).unwrap().value());
        assert_abs_diff_eq!(
            ScoreRule::Swcrps(w).evaluate(&p, 3.0).unwrap(),
            swcrps_gev(&p, &w, 3.0).unwrap().value(),
            epsilon = 1e-15
        );
        assert_eq!(ScoreRule::Ls.evaluate(&p, 1.0).unwrap(), p.logpdf(1.0));
        assert_eq!(ScoreRule::CensoredLs(q).evaluate(&p, 0.0).unwrap(), -p.neg_log_cdf(q));
    }

    #[test]
    fn censored_score_on_exceedance_law() {
        // On the law conditioned on Y > u, LS_u equals the conditional LS above u.
        let p = GevParams::new(0.0, 1.0, 0.12).unwrap();
        let u = p.quantile(0.9).unwrap();
        let t = TruncatedGev::new(p, u).unwrap();
        let y = u + 0.4;
        assert_abs_diff_eq!(
            ScoreRule::Ls.evaluate(&t, y).unwrap(),
            p.logpdf(y) - 0.1f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn forecast_dispatch() {
        let b = Forecast::Benchmark(BenchmarkForecast::ideal(1.0).unwrap());
        assert_abs_diff_eq!(ScoreRule::Crps.evaluate_forecast(&b, 0.0).unwrap(), -0.5, epsilon = 1e-15);
        assert!(ScoreRule::Wcrps(WeightSpec::Quantile(1.0)).evaluate_forecast(&b, 0.0).is_err());
        let e = Forecast::ensemble(vec![1.0, 2.0]).unwrap();
        assert!(ScoreRule::Crps.evaluate_forecast(&e, 0.0).is_err());
    }

    #[test]
    fn scaled_rule_propagates_degenerate_weight() {
        let p = GevParams::new(0.0, 1.0, -0.3).unwrap();
        assert!(ScoreRule::Swcrps(WeightSpec::Quantile(4.0)).prepare(&p).is_err());
        assert!(ScoreRule::Crps.prepare(&GevParams::new(0.0, 1.0, 1.5).unwrap()).is_err());
    }
}
