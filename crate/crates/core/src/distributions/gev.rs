use crate::error::{Error, Result};

/// Shapes with `|γ|` below this use the Gumbel formulas everywhere.
pub const GAMMA_TOL: f64 = 1e-8;

/// Generalised extreme value law with location `mu`, scale `sigma` and shape `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl GevParams {
    pub fn new(mu: f64, sigma: f64, gamma: f64) -> Result<Self> {
        if !mu.is_finite() || !gamma.is_finite() {
            return Err(Error::domain(format!(
                "GEV location and shape must be finite (mu = {mu}, gamma = {gamma})"
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::domain(format!("GEV scale must be > 0, got {sigma}")));
        }
        Ok(GevParams { mu, sigma, gamma })
    }

    pub fn gumbel(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(mu, sigma, 0.0)
    }

    #[inline]
    pub fn is_gumbel(&self) -> bool {
        self.gamma.abs() < GAMMA_TOL
    }

    /// Finite lower support endpoint (only when γ > 0).
    pub fn lower_endpoint(&self) -> Option<f64> {
        (!self.is_gumbel() && self.gamma > 0.0).then(|| self.mu - self.sigma / self.gamma)
    }

    /// Finite upper support endpoint (only when γ < 0).
    pub fn upper_endpoint(&self) -> Option<f64> {
        (!self.is_gumbel() && self.gamma < 0.0).then(|| self.mu - self.sigma / self.gamma)
    }

    pub fn support(&self) -> (f64, f64) {
        (
            self.lower_endpoint().unwrap_or(f64::NEG_INFINITY),
            self.upper_endpoint().unwrap_or(f64::INFINITY),
        )
    }

    /// `−ln F(x)`, evaluated without forming `F` so that the far left tail
    /// keeps full precision. Returns `+∞` at and below a lower endpoint and
    /// `0` at and above an upper endpoint.
    pub fn neg_log_cdf(&self, x: f64) -> f64 {
        let s = (x - self.mu) / self.sigma;
        if self.is_gumbel() {
            return (-s).exp();
        }
        let gs = self.gamma * s;
        if gs <= -1.0 {
            return if self.gamma > 0.0 { f64::INFINITY } else { 0.0 };
        }
        (-gs.ln_1p() / self.gamma).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (-self.neg_log_cdf(x)).exp()
    }

    /// Survival function `1 − F(x)` without cancellation in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        -(-self.neg_log_cdf(x)).exp_m1()
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        let s = (x - self.mu) / self.sigma;
        if self.is_gumbel() {
            return -self.sigma.ln() - s - (-s).exp();
        }
        let t = 1.0 + self.gamma * s;
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let lt = t.ln();
        -self.sigma.ln() - (1.0 + 1.0 / self.gamma) * lt - (-lt / self.gamma).exp()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.logpdf(x).exp()
    }

    pub fn quantile(&self, prob: f64) -> Result<f64> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::domain(format!(
                "GEV quantile probability must lie in (0,1), got {prob}"
            )));
        }
        Ok(self.quantile_unchecked(prob))
    }

    /// Inverse cdf for `prob` in `[0, 1]`; the endpoints map to the support bounds.
    pub(crate) fn quantile_unchecked(&self, prob: f64) -> f64 {
        let e = -prob.ln();
        if self.is_gumbel() {
            return self.mu - self.sigma * e.ln();
        }
        // (e^{−γ} − 1)/γ written with exp_m1 to stay accurate for small γ.
        self.mu + self.sigma * (-self.gamma * e.ln()).exp_m1() / self.gamma
    }

    /// Mean, defined for γ < 1.
    pub fn mean(&self) -> Option<f64> {
        if self.gamma >= 1.0 {
            return None;
        }
        if self.is_gumbel() {
            return Some(self.mu + self.sigma * crate::numerics::EULER_GAMMA);
        }
        Some(self.mu + self.sigma * (crate::numerics::gamma(1.0 - self.gamma) - 1.0) / self.gamma)
    }

    /// Variance, defined for γ < 1/2.
    pub fn variance(&self) -> Option<f64> {
        if self.gamma >= 0.5 {
            return None;
        }
        if self.is_gumbel() {
            return Some(self.sigma * self.sigma * std::f64::consts::PI.powi(2) / 6.0);
        }
        let g1 = crate::numerics::gamma(1.0 - self.gamma);
        let g2 = crate::numerics::gamma(1.0 - 2.0 * self.gamma);
        Some(self.sigma * self.sigma * (g2 - g1 * g1) / (self.gamma * self.gamma))
    }
}

/// Frequency-based reparameterisation: `lambda` is the expected number of
/// exceedances of the reference level `u`, `sigma_u` the scale of the excesses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgevParams {
    pub lambda: f64,
    pub sigma_u: f64,
    pub gamma: f64,
    pub u: f64,
}

impl PgevParams {
    pub fn new(lambda: f64, sigma_u: f64, gamma: f64, u: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!("PGEV lambda must be > 0, got {lambda}")));
        }
        if !(sigma_u > 0.0) || !sigma_u.is_finite() {
            return Err(Error::domain(format!("PGEV sigma_u must be > 0, got {sigma_u}")));
        }
        if !gamma.is_finite() || !u.is_finite() {
            return Err(Error::domain("PGEV shape and level must be finite"));
        }
        Ok(PgevParams {
            lambda,
            sigma_u,
            gamma,
            u,
        })
    }

    /// Equivalent GEV parameters.
    pub fn to_gev(&self) -> GevParams {
        let ln_lambda = self.lambda.ln();
        if self.gamma.abs() < GAMMA_TOL {
            return GevParams {
                mu: self.u + self.sigma_u * ln_lambda,
                sigma: self.sigma_u,
                gamma: 0.0,
            };
        }
        let growth = (self.gamma * ln_lambda).exp_m1();
        GevParams {
            mu: self.u + growth * self.sigma_u / self.gamma,
            sigma: self.sigma_u * (self.gamma * ln_lambda).exp(),
            gamma: self.gamma,
        }
    }

    /// `exp{−λ (1 + γ(x−u)/σ_u)^{−1/γ}}` evaluated directly.
    pub fn cdf(&self, x: f64) -> f64 {
        let s = (x - self.u) / self.sigma_u;
        if self.gamma.abs() < GAMMA_TOL {
            return (-self.lambda * (-s).exp()).exp();
        }
        let t = 1.0 + self.gamma * s;
        if t <= 0.0 {
            return if self.gamma > 0.0 { 0.0 } else { 1.0 };
        }
        (-self.lambda * t.powf(-1.0 / self.gamma)).exp()
    }
}

pub fn pgev_to_gev(p: &PgevParams) -> GevParams {
    p.to_gev()
}
