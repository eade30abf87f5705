//! Laws of the exponential/Pareto benchmark: the hierarchical truth
//! `X ~ Gamma(1/ξ, rate 1/ξ)`, `Y | X ~ Exp(rate X)`, and its four forecasts.

use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::seeding::{open_uniform, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkKind {
    Ideal,
    Extremist,
    Climatological,
    TauInformed,
}

/// One benchmark forecast. Fields the kind does not use are ignored.
///
/// `delta` is the exponential *rate* (the latent `X`); the extremist forecast
/// uses rate `delta / nu`, i.e. its mean is inflated by `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkForecast {
    pub kind: BenchmarkKind,
    pub delta: f64,
    pub nu: f64,
    pub xi: f64,
    pub tau: f64,
}

impl BenchmarkForecast {
    pub fn ideal(delta: f64) -> Result<Self> {
        Self::new(BenchmarkKind::Ideal, delta, 1.0, 0.5, 1.0)
    }

    pub fn extremist(delta: f64, nu: f64) -> Result<Self> {
        Self::new(BenchmarkKind::Extremist, delta, nu, 0.5, 1.0)
    }

    pub fn climatological(xi: f64) -> Result<Self> {
        Self::new(BenchmarkKind::Climatological, 1.0, 1.0, xi, 0.0)
    }

    pub fn tau_informed(delta: f64, xi: f64, tau: f64) -> Result<Self> {
        Self::new(BenchmarkKind::TauInformed, delta, 1.0, xi, tau)
    }

    pub fn new(kind: BenchmarkKind, delta: f64, nu: f64, xi: f64, tau: f64) -> Result<Self> {
        let f = BenchmarkForecast {
            kind,
            delta,
            nu,
            xi,
            tau,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        use BenchmarkKind::*;
        let uses_delta = matches!(self.kind, Ideal | Extremist | TauInformed);
        let uses_xi = matches!(self.kind, Climatological | TauInformed);
        if uses_delta && !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::domain(format!("benchmark delta must be > 0, got {}", self.delta)));
        }
        if self.kind == Extremist && !(self.nu >= 1.0 && self.nu.is_finite()) {
            return Err(Error::domain(format!("extremist nu must be >= 1, got {}", self.nu)));
        }
        if uses_xi && !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::domain(format!("benchmark xi must lie in (0,1), got {}", self.xi)));
        }
        if self.kind == TauInformed && !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::domain(format!("tau must lie in [0,1], got {}", self.tau)));
        }
        Ok(())
    }

    /// Weight on the exponential component and its rate.
    fn exp_component(&self) -> (f64, f64) {
        match self.kind {
            BenchmarkKind::Ideal => (1.0, self.delta),
            BenchmarkKind::Extremist => (1.0, self.delta / self.nu),
            BenchmarkKind::Climatological => (0.0, 1.0),
            BenchmarkKind::TauInformed => (self.tau, self.delta),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (w, rate) = self.exp_component();
        let mut p = 0.0;
        if w > 0.0 {
            p += w * exp_cdf(rate, x);
        }
        if w < 1.0 {
            p += (1.0 - w) * unit_gp_cdf(self.xi, x);
        }
        p
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (w, rate) = self.exp_component();
        let mut d = 0.0;
        if w > 0.0 {
            d += w * exp_pdf(rate, x);
        }
        if w < 1.0 {
            d += (1.0 - w) * unit_gp_pdf(self.xi, x);
        }
        d
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        self.pdf(x).ln()
    }

    pub fn mean(&self) -> f64 {
        let (w, rate) = self.exp_component();
        w / rate + (1.0 - w) / (1.0 - self.xi)
    }

    /// Inverse-cdf draw from one open uniform. The mixture picks its
    /// component by comparing `u` with `tau` and reuses the rescaled uniform.
    pub fn draw(&self, u: f64) -> f64 {
        let (w, rate) = self.exp_component();
        if w >= 1.0 {
            exp_quantile(rate, u)
        } else if w <= 0.0 {
            unit_gp_quantile(self.xi, u)
        } else if u < w {
            exp_quantile(rate, u / w)
        } else {
            unit_gp_quantile(self.xi, (u - w) / (1.0 - w))
        }
    }
}

pub fn exp_cdf(rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-rate * x).exp_m1()
    }
}

pub fn exp_pdf(rate: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        rate * (-rate * x).exp()
    }
}

pub fn exp_quantile(rate: f64, p: f64) -> f64 {
    -(-p).ln_1p() / rate
}

/// Generalised Pareto with unit scale and shape `xi`: `1 − (1 + ξx)^{−1/ξ}`.
pub fn unit_gp_cdf(xi: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -((-1.0 / xi) * (xi * x).ln_1p()).exp_m1()
    }
}

pub fn unit_gp_pdf(xi: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        ((-1.0 / xi - 1.0) * (xi * x).ln_1p()).exp()
    }
}

pub fn unit_gp_quantile(xi: f64, p: f64) -> f64 {
    ((-xi) * (-p).ln_1p()).exp_m1() / xi
}

/// Whether the latent rate is redrawn for every observation or held per series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LatentMode {
    #[default]
    PerObservation,
    PerSeries,
}

/// One simulated benchmark series: latent rates and the observations drawn from them.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSeries {
    pub rates: Vec<f64>,
    pub values: Vec<f64>,
}

/// Simulate `n_series` series of length `series_len` from the hierarchical model.
pub fn benchmark_generate(
    xi: f64,
    n_series: usize,
    series_len: usize,
    seed: u64,
    mode: LatentMode,
) -> Result<Vec<BenchmarkSeries>> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::domain(format!("benchmark xi must lie in (0,1), got {xi}")));
    }
    let latent = Gamma::new(1.0 / xi, xi).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(n_series);
    for _ in 0..n_series {
        let mut rates = Vec::with_capacity(series_len);
        let mut values = Vec::with_capacity(series_len);
        let mut held = latent.sample(&mut rng);
        for j in 0..series_len {
            if mode == LatentMode::PerObservation && j > 0 {
                held = latent.sample(&mut rng);
            }
            let u = open_uniform(&mut rng);
            rates.push(held);
            values.push(exp_quantile(held, u));
        }
        out.push(BenchmarkSeries { rates, values });
    }
    Ok(out)
}
