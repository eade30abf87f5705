use crate::error::{Error, Result};
use crate::seeding::{open_uniform, rng_from_seed};

use super::{BenchmarkForecast, GevParams, PgevParams};

/// A predictive distribution that can be scored.
#[derive(Debug, Clone, PartialEq)]
pub enum Forecast {
    Gev(GevParams),
    Pgev(PgevParams),
    Benchmark(BenchmarkForecast),
    /// Sorted ensemble members.
    Ensemble(Vec<f64>),
}

impl Forecast {
    /// Build an ensemble forecast, sorting the members.
    pub fn ensemble(mut members: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::SampleTooSmall { needed: 1, got: 0 });
        }
        if members.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("ensemble members must be finite"));
        }
        members.sort_by(f64::total_cmp);
        Ok(Forecast::Ensemble(members))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Forecast::Gev(p) => p.cdf(x),
            Forecast::Pgev(p) => p.cdf(x),
            Forecast::Benchmark(b) => b.cdf(x),
            Forecast::Ensemble(xs) => xs.partition_point(|&v| v <= x) as f64 / xs.len() as f64,
        }
    }

    /// Log density, or an error for laws without one.
    pub fn logpdf(&self, x: f64) -> Result<f64> {
        match self {
            Forecast::Gev(p) => Ok(p.logpdf(x)),
            Forecast::Pgev(p) => Ok(p.to_gev().logpdf(x)),
            Forecast::Benchmark(b) => Ok(b.logpdf(x)),
            Forecast::Ensemble(_) => Err(Error::NoDensity("ensemble forecast".into())),
        }
    }

    /// Inverse-cdf draw from a single open uniform.
    pub fn draw(&self, u: f64) -> f64 {
        match self {
            Forecast::Gev(p) => p.quantile_unchecked(u),
            Forecast::Pgev(p) => p.to_gev().quantile_unchecked(u),
            Forecast::Benchmark(b) => b.draw(u),
            Forecast::Ensemble(xs) => {
                let idx = ((u * xs.len() as f64) as usize).min(xs.len() - 1);
                xs[idx]
            }
        }
    }

    /// `n` draws, sorted ascending. Deterministic given `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::SampleTooSmall { needed: 1, got: 0 });
        }
        let mut rng = rng_from_seed(seed);
        let mut out: Vec<f64> = (0..n).map(|_| self.draw(open_uniform(&mut rng))).collect();
        out.sort_by(f64::total_cmp);
        Ok(out)
    }
}

pub fn forecast_sample(f: &Forecast, n: usize, seed: u64) -> Result<Vec<f64>> {
    f.sample(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::open_uniform;

    #[test]
    fn single_gumbel_draw_is_inverse_cdf() {
        let f = Forecast::Gev(GevParams::new(0.0, 1.0, 0.0).unwrap());
        let x = f.sample(1, 17).unwrap()[0];
        let u = open_uniform(&mut rng_from_seed(17));
        assert_eq!(x, -(-u.ln()).ln());
    }

    #[test]
    fn bounded_support_respected() {
        let f = Forecast::Gev(GevParams::new(0.0, 1.0, -0.3).unwrap());
        let xs = f.sample(10_000, 2).unwrap();
        assert!(*xs.last().unwrap() <= 1.0 / 0.3 + 1e-12);
        assert!(xs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sampling_needs_positive_n() {
        let f = Forecast::Gev(GevParams::new(0.0, 1.0, 0.0).unwrap());
        assert!(f.sample(0, 1).is_err());
        assert!(Forecast::ensemble(vec![]).is_err());
    }

    #[test]
    fn ensemble_has_no_density() {
        let f = Forecast::ensemble(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(f, Forecast::Ensemble(vec![1.0, 2.0, 3.0]));
        assert!(f.logpdf(1.0).is_err());
        assert!((f.cdf(2.0) - 2.0 / 3.0).abs() < 1e-15);
    }
}
