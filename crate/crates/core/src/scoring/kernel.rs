//! Kernel scores for laws with known partial moments.
//!
//! With `M1(a) = ∫_a^∞ x dF` and `M2(a) = ∫_a^∞ x F dF`, the quantile-weighted
//! kernel quantities of any continuous law reduce to
//!
//! ```text
//! E|W(X) − W(X')| = 4 M2(q) − 2 M1(q) − 2 q F(q)(1 − F(q))
//! E|W(X) − W(y)|  = 2 M1(m) − M1(q) − q F(q) + m (2F(m) − 1),   m = max(q, y)
//! wCRPS           = 2 M2(q) − 2 M1(m) − m (2F(m) − 1) + q F(q)²
//! ```
//!
//! and `q = −∞` gives the unweighted CRPS kernel.

use crate::distributions::GevParams;
use crate::error::{Error, Result};
use crate::numerics::{expint_ei, lower_inc_gamma, EULER_GAMMA};

use super::WeightSpec;

/// A univariate law whose kernel scores can be evaluated without quadrature.
pub trait KernelLaw {
    fn cdf(&self, x: f64) -> f64;

    fn logpdf(&self, x: f64) -> f64;

    fn log_cdf(&self, x: f64) -> f64 {
        self.cdf(x).ln()
    }

    /// `∫_a^∞ x dF(x)`.
    fn upper_mean(&self, a: f64) -> f64;

    /// `∫_a^∞ x F(x) dF(x)`.
    fn upper_weighted_mean(&self, a: f64) -> f64;

    /// Errors when the first moment, and so every kernel score, is infinite.
    fn check_kernel(&self) -> Result<()> {
        Ok(())
    }

    fn wcrps_quantile(&self, q: f64, y: f64) -> f64 {
        generic_wcrps_quantile(self, q, y)
    }

    fn expected_distance_quantile(&self, q: f64) -> f64 {
        generic_expected_distance_quantile(self, q)
    }

    fn expected_obs_distance_quantile(&self, q: f64, y: f64) -> f64 {
        generic_expected_obs_distance_quantile(self, q, y)
    }
}

/// `a · b` with the convention `0 · ±∞ = 0`.
#[inline]
pub(crate) fn mul0(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * b
    }
}

pub fn generic_wcrps_quantile<L: KernelLaw + ?Sized>(law: &L, q: f64, y: f64) -> f64 {
    let m = q.max(y);
    let fq = law.cdf(q);
    let fm = law.cdf(m);
    2.0 * law.upper_weighted_mean(q) - 2.0 * law.upper_mean(m) - m * (2.0 * fm - 1.0)
        + mul0(fq * fq, q)
}

pub fn generic_expected_distance_quantile<L: KernelLaw + ?Sized>(law: &L, q: f64) -> f64 {
    let fq = law.cdf(q);
    4.0 * law.upper_weighted_mean(q) - 2.0 * law.upper_mean(q) - 2.0 * mul0(fq * (1.0 - fq), q)
}

pub fn generic_expected_obs_distance_quantile<L: KernelLaw + ?Sized>(law: &L, q: f64, y: f64) -> f64 {
    let m = q.max(y);
    let fq = law.cdf(q);
    let fm = law.cdf(m);
    2.0 * law.upper_mean(m) - law.upper_mean(q) - mul0(fq, q) + m * (2.0 * fm - 1.0)
}

fn check_obs(y: f64) -> Result<()> {
    if y.is_nan() {
        return Err(Error::domain("observation is NaN"));
    }
    Ok(())
}

/// Combine the quantile-weight pieces of a weight: `a·f(−∞) + b·f(u)`.
fn combine(weight: &WeightSpec, mut f: impl FnMut(f64) -> f64) -> f64 {
    match *weight {
        WeightSpec::Unweighted => f(f64::NEG_INFINITY),
        WeightSpec::Quantile(q) => f(q),
        WeightSpec::AffineIndicator { a, b, u } => {
            let mut total = 0.0;
            if a != 0.0 {
                total += a * f(f64::NEG_INFINITY);
            }
            if b != 0.0 {
                total += b * f(u);
            }
            total
        }
    }
}

/// Threshold-weighted CRPS `½E|W(X)−W(X')| − E|W(X)−W(y)|`.
pub fn wcrps<L: KernelLaw + ?Sized>(law: &L, weight: &WeightSpec, y: f64) -> Result<f64> {
    law.check_kernel()?;
    check_obs(y)?;
    Ok(combine(weight, |q| law.wcrps_quantile(q, y)))
}

/// `E|W(X) − W(X')|` for independent `X, X'` from the law.
pub fn expected_distance<L: KernelLaw + ?Sized>(law: &L, weight: &WeightSpec) -> Result<f64> {
    law.check_kernel()?;
    let e = combine(weight, |q| law.expected_distance_quantile(q));
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::DegenerateWeight(format!(
            "expected kernel distance is {e} for weight {weight:?}"
        )));
    }
    Ok(e)
}

/// `E|W(X) − W(y)|`.
pub fn expected_obs_distance<L: KernelLaw + ?Sized>(law: &L, weight: &WeightSpec, y: f64) -> Result<f64> {
    law.check_kernel()?;
    check_obs(y)?;
    Ok(combine(weight, |q| law.expected_obs_distance_quantile(q, y)))
}

/// Scaled weighted CRPS through `wCRPS/E − ½ ln E − ½`.
pub fn swcrps<L: KernelLaw + ?Sized>(law: &L, weight: &WeightSpec, y: f64) -> Result<f64> {
    let e = expected_distance(law, weight)?;
    let w = wcrps(law, weight, y)?;
    Ok(w / e - 0.5 * e.ln() - 0.5)
}

/// Scaled weighted CRPS from its definition `−E|W(X)−W(y)| / E − ½ ln E`.
pub fn swcrps_direct<L: KernelLaw + ?Sized>(law: &L, weight: &WeightSpec, y: f64) -> Result<f64> {
    let e = expected_distance(law, weight)?;
    let d = expected_obs_distance(law, weight, y)?;
    Ok(-d / e - 0.5 * e.ln())
}

/// `Ei(−e^{ln_s})`, accurate when `s` under- or overflows.
pub(crate) fn ei_neg_exp(ln_s: f64) -> f64 {
    if ln_s == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if ln_s > 709.0 {
        return 0.0;
    }
    if ln_s < -30.0 {
        // Ei(−s) = C + ln s − s + O(s²)
        return EULER_GAMMA + ln_s - ln_s.exp();
    }
    expint_ei(-ln_s.exp()).unwrap_or(f64::NAN)
}

/// Below this `|γ|` the GEV kernel quantities use [`small_shape_j`] instead of
/// `σ/γ`-scaled incomplete gamma functions, which cancel badly near `γ = 0`.
const SMALL_GAMMA: f64 = 5e-2;

/// `J(γ, z) = ∫_0^z ((t^{−γ} − 1)/γ) e^{−t} dt = (Γₗ(1−γ, z) − Γₗ(1, z))/γ`, with
/// `Γₗ` the lower incomplete gamma function.
///
/// Summed from the series of the lower incomplete gamma function, with each
/// term's ratio to its `γ = 0` counterpart formed through `expm1`/`ln_1p`, so
/// nothing cancels as `γ → 0`. The tail beyond `z = 40` is below `1e−16` and
/// dropped.
pub(crate) fn small_shape_j(g: f64, z: f64) -> f64 {
    if !(z > 0.0) {
        return 0.0;
    }
    let z = z.min(40.0);
    let ln_z = z.ln();
    let mut pmf = (-z).exp();
    let mut harmonic = 0.0;
    let mut sum = 0.0;
    for n in 1..=400 {
        let j = f64::from(n);
        pmf *= z / j;
        harmonic += if g == 0.0 { 1.0 / j } else { -(-g / j).ln_1p() / g };
        let a = harmonic - ln_z;
        let ratio = if g == 0.0 { a } else { (g * a).exp_m1() / g };
        sum += pmf * ratio;
        if j > z && pmf * (1.0 + ratio.abs()) < 1e-18 {
            break;
        }
    }
    sum
}

#[inline]
fn gl(a: f64, tau: f64) -> f64 {
    lower_inc_gamma(a, tau).unwrap_or(f64::NAN)
}

impl GevParams {
    /// `ln s(x) = −(x−μ)/σ` for the Gumbel branch, where `−ln F(x) = s(x)`.
    #[inline]
    fn gumbel_ln_s(&self, x: f64) -> f64 {
        -(x - self.mu) / self.sigma
    }

    /// The same law shifted to `μ = 0`; kernel distances are shift invariant.
    fn centred(&self) -> GevParams {
        GevParams { mu: 0.0, ..*self }
    }
}

impl KernelLaw for GevParams {
    fn cdf(&self, x: f64) -> f64 {
        GevParams::cdf(self, x)
    }

    fn logpdf(&self, x: f64) -> f64 {
        GevParams::logpdf(self, x)
    }

    fn log_cdf(&self, x: f64) -> f64 {
        -self.neg_log_cdf(x)
    }

    fn check_kernel(&self) -> Result<()> {
        if self.gamma >= 1.0 {
            return Err(Error::NonExistence(format!(
                "kernel scores need a finite mean; GEV shape {} >= 1",
                self.gamma
            )));
        }
        Ok(())
    }

    fn upper_mean(&self, a: f64) -> f64 {
        let (mu, sigma, g) = (self.mu, self.sigma, self.gamma);
        if self.is_gumbel() {
            let ln_s = self.gumbel_ln_s(a);
            let p = (-ln_s.exp()).exp();
            return mu * (1.0 - p) - mul0(p, a - mu) - sigma * ei_neg_exp(ln_s) + sigma * EULER_GAMMA;
        }
        let z = self.neg_log_cdf(a);
        if g.abs() < SMALL_GAMMA {
            return mu * -(-z).exp_m1() + sigma * small_shape_j(g, z);
        }
        let k = sigma / g;
        (mu - k) * -(-z).exp_m1() + k * gl(1.0 - g, z)
    }

    fn upper_weighted_mean(&self, a: f64) -> f64 {
        let (mu, sigma, g) = (self.mu, self.sigma, self.gamma);
        if self.is_gumbel() {
            let ln_s = self.gumbel_ln_s(a);
            let p = (-ln_s.exp()).exp();
            return 0.5 * mu * (1.0 - p * p) - 0.5 * mul0(p * p, a - mu)
                - 0.5 * sigma * ei_neg_exp(ln_s + std::f64::consts::LN_2)
                + 0.5 * sigma * (EULER_GAMMA + std::f64::consts::LN_2);
        }
        let z = self.neg_log_cdf(a);
        let tail = -(-2.0 * z).exp_m1();
        if g.abs() < SMALL_GAMMA {
            let ln2 = std::f64::consts::LN_2;
            let c = if g == 0.0 { ln2 } else { (g * ln2).exp_m1() / g };
            return 0.5 * mu * tail + 0.5 * sigma * (2f64.powf(g) * small_shape_j(g, 2.0 * z) + c * tail);
        }
        let k = sigma / g;
        0.5 * (mu - k) * tail + k * 2f64.powf(g - 1.0) * gl(1.0 - g, 2.0 * z)
    }

    fn wcrps_quantile(&self, q: f64, y: f64) -> f64 {
        let (mu, sigma, g) = (self.mu, self.sigma, self.gamma);
        let m = q.max(y);
        if self.is_gumbel() {
            let ln_sq = self.gumbel_ln_s(q);
            let ln_sm = self.gumbel_ln_s(m);
            return (m - mu) - sigma * (EULER_GAMMA - std::f64::consts::LN_2)
                - sigma * (ei_neg_exp(ln_sq + std::f64::consts::LN_2) - 2.0 * ei_neg_exp(ln_sm));
        }
        if g.abs() < SMALL_GAMMA {
            return generic_wcrps_quantile(&self.centred(), q - mu, y - mu);
        }
        let k = sigma / g;
        let zq = self.neg_log_cdf(q);
        let zm = self.neg_log_cdf(m);
        let fq = (-zq).exp();
        let fm = (-zm).exp();
        // k is large near γ = 0, so the m = q case uses the cancellation-free (1 − F)².
        let edge = if m == q {
            let sq = -(-zq).exp_m1();
            mul0(sq * sq, q - mu + k)
        } else {
            mul0(fq * fq, q - mu + k) - (m - mu + k) * (2.0 * fm - 1.0)
        };
        edge + k * (2f64.powf(g) * gl(1.0 - g, 2.0 * zq) - 2.0 * gl(1.0 - g, zm))
    }

    fn expected_distance_quantile(&self, q: f64) -> f64 {
        let (mu, sigma, g) = (self.mu, self.sigma, self.gamma);
        if self.is_gumbel() {
            let ln_sq = self.gumbel_ln_s(q);
            return 2.0 * sigma * std::f64::consts::LN_2
                - 2.0 * sigma * (ei_neg_exp(ln_sq + std::f64::consts::LN_2) - ei_neg_exp(ln_sq));
        }
        if g.abs() < SMALL_GAMMA {
            return generic_expected_distance_quantile(&self.centred(), q - mu);
        }
        let k = sigma / g;
        let zq = self.neg_log_cdf(q);
        let fq = (-zq).exp();
        -2.0 * mul0(fq * -(-zq).exp_m1(), q - mu + k)
            + 2.0 * k * (2f64.powf(g) * gl(1.0 - g, 2.0 * zq) - gl(1.0 - g, zq))
    }

    fn expected_obs_distance_quantile(&self, q: f64, y: f64) -> f64 {
        generic_expected_obs_distance_quantile(&self.centred(), q - self.mu, y - self.mu)
    }
}

/// A GEV law conditioned on exceeding `u`: `G(x) = (F(x) − F(u)) / (1 − F(u))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedGev {
    pub base: GevParams,
    pub u: f64,
    fu: f64,
    su: f64,
}

impl TruncatedGev {
    pub fn new(base: GevParams, u: f64) -> Result<Self> {
        if u.is_nan() {
            return Err(Error::domain("truncation level is NaN"));
        }
        let su = base.sf(u);
        if su < 1e-12 {
            return Err(Error::ThresholdTooHigh(u));
        }
        Ok(TruncatedGev {
            base,
            u,
            fu: base.cdf(u),
            su,
        })
    }

    /// `1 − F(u)` of the base law.
    pub fn exceedance_prob(&self) -> f64 {
        self.su
    }

    /// Exact conditional draw from one open uniform.
    pub fn draw(&self, v: f64) -> f64 {
        let x = self.base.quantile_unchecked(self.fu + self.su * v);
        x.max(self.u)
    }
}

impl KernelLaw for TruncatedGev {
    fn cdf(&self, x: f64) -> f64 {
        if x <= self.u {
            0.0
        } else {
            ((self.su - self.base.sf(x)) / self.su).clamp(0.0, 1.0)
        }
    }

    fn logpdf(&self, x: f64) -> f64 {
        if x <= self.u {
            f64::NEG_INFINITY
        } else {
            self.base.logpdf(x) - self.su.ln()
        }
    }

    fn check_kernel(&self) -> Result<()> {
        self.base.check_kernel()
    }

    fn upper_mean(&self, a: f64) -> f64 {
        self.base.upper_mean(a.max(self.u)) / self.su
    }

    fn upper_weighted_mean(&self, a: f64) -> f64 {
        let a = a.max(self.u);
        (self.base.upper_weighted_mean(a) - self.fu * self.base.upper_mean(a)) / (self.su * self.su)
    }
}
