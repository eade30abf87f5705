//! Closed-form CRPS and kernel expectations for the exponential/Pareto benchmark.

use crate::distributions::{BenchmarkForecast, BenchmarkKind};
use crate::error::{Error, Result};
use crate::numerics::upper_inc_gamma_scaled;

use super::ScoreValue;

fn check_obs(y: f64) -> Result<()> {
    if !(y >= 0.0) || y.is_infinite() {
        return Err(Error::domain(format!("benchmark observation must be finite and >= 0, got {y}")));
    }
    Ok(())
}

/// `E|X − y|` for `X ~ Exp(rate)`.
fn exp_abs_dev(rate: f64, y: f64) -> f64 {
    y - 1.0 / rate + 2.0 * (-rate * y).exp() / rate
}

/// `E|X − y|` for `X ~ GP(1, ξ)`.
fn gp_abs_dev(xi: f64, y: f64) -> f64 {
    let tail = ((xi - 1.0) / xi * (xi * y).ln_1p()).exp();
    y + (2.0 * tail - 1.0) / (1.0 - xi)
}

fn clim_expected_dist(xi: f64) -> f64 {
    2.0 / ((2.0 - xi) * (1.0 - xi))
}

/// `E min(X, G)` for independent `X ~ Exp(delta)` and `G ~ GP(1, ξ)`:
/// `e^{δ/ξ} ξ^{−1/ξ} δ^{1/ξ − 1} Γ_u(1 − 1/ξ, δ/ξ)`, evaluated in log space.
pub fn exp_gp_min_mean(delta: f64, xi: f64) -> Result<f64> {
    let tau = delta / xi;
    let scaled = upper_inc_gamma_scaled(1.0 - 1.0 / xi, tau)?;
    Ok((-xi.ln() / xi + (1.0 / xi - 1.0) * delta.ln() + scaled.ln()).exp())
}

/// CRPS of the forecast `Exp(rate δ/ν)`; `ν = 1` is the ideal forecast.
pub fn crps_extremist(delta: f64, nu: f64, y: f64) -> Result<ScoreValue> {
    BenchmarkForecast::extremist(delta, nu)?;
    check_obs(y)?;
    Ok(ScoreValue(
        -y - 2.0 * nu / delta * (-delta * y / nu).exp() + 1.5 * nu / delta,
    ))
}

/// CRPS of the mixture `τ Exp(δ) + (1 − τ) GP(1, ξ)`.
pub fn crps_tau_informed(delta: f64, xi: f64, tau: f64, y: f64) -> Result<ScoreValue> {
    let f = BenchmarkForecast::tau_informed(delta, xi, tau)?;
    check_obs(y)?;
    let obs = tau * exp_abs_dev(delta, y) + (1.0 - tau) * gp_abs_dev(xi, y);
    Ok(ScoreValue(0.5 * mixture_expected_dist(&f)? - obs))
}

fn mixture_expected_dist(f: &BenchmarkForecast) -> Result<f64> {
    let (t, delta, xi) = (f.tau, f.delta, f.xi);
    let mut e = (1.0 - t) * (1.0 - t) * clim_expected_dist(xi);
    if t > 0.0 {
        e += t * t / delta;
    }
    if t > 0.0 && t < 1.0 {
        let k = exp_gp_min_mean(delta, xi)?;
        e += 2.0 * t * (1.0 - t) * (1.0 / delta + 1.0 / (1.0 - xi) - 2.0 * k);
    }
    Ok(e)
}

/// `E|X − X'|` under a benchmark forecast.
pub fn benchmark_expected_dist(f: &BenchmarkForecast) -> Result<f64> {
    f.validate()?;
    match f.kind {
        BenchmarkKind::Ideal => Ok(1.0 / f.delta),
        BenchmarkKind::Extremist => Ok(f.nu / f.delta),
        BenchmarkKind::Climatological => Ok(clim_expected_dist(f.xi)),
        BenchmarkKind::TauInformed => mixture_expected_dist(f),
    }
}

pub fn crps_benchmark(f: &BenchmarkForecast, y: f64) -> Result<ScoreValue> {
    f.validate()?;
    match f.kind {
        BenchmarkKind::Ideal => crps_extremist(f.delta, 1.0, y),
        BenchmarkKind::Extremist => crps_extremist(f.delta, f.nu, y),
        BenchmarkKind::Climatological => {
            check_obs(y)?;
            Ok(ScoreValue(0.5 * clim_expected_dist(f.xi) - gp_abs_dev(f.xi, y)))
        }
        BenchmarkKind::TauInformed => crps_tau_informed(f.delta, f.xi, f.tau, y),
    }
}

/// Scaled CRPS `CRPS/E − ½ ln E − ½` of a benchmark forecast.
pub fn scrps_benchmark(f: &BenchmarkForecast, y: f64) -> Result<ScoreValue> {
    let e = benchmark_expected_dist(f)?;
    let crps = crps_benchmark(f, y)?.value();
    Ok(ScoreValue(crps / e - 0.5 * e.ln() - 0.5))
}
