//! Scale-dependence studies on GEV laws: score differences across a scale
//! grid, and combined scores of two stations with scale errors.

use rayon::prelude::*;

use crate::distributions::GevParams;
use crate::error::Result;
use crate::kernel_mc::{chunked_moments, draw_uniforms, RunningMoments};
use crate::seeding::derive_seed;

use super::{ExperimentConfig, ExperimentKind, ExperimentResult, ScoreCell};

fn gev(mu: f64, sigma: f64, gamma: f64) -> Result<GevParams> {
    GevParams::new(mu, sigma, gamma)
}

/// Moments of `S(Q, Y) − S(P, Y)` for `Y ~ Q`, the threshold being the truth's quantile.
fn difference_moments(cell: &ScoreCell, truth: &GevParams, forecast: &GevParams, uniforms: &[f64]) -> Result<RunningMoments> {
    let rule = cell.rule_for_law(truth)?;
    let pt = rule.prepare(truth)?;
    let pf = rule.prepare(forecast)?;
    Ok(chunked_moments(uniforms.len(), |i| {
        let y = truth.quantile_unchecked(uniforms[i]);
        pt.score(y) - pf.score(y)
    }))
}

/// Expected score of `forecast` under `truth`.
fn score_moments(cell: &ScoreCell, truth: &GevParams, forecast: &GevParams, uniforms: &[f64]) -> Result<RunningMoments> {
    let rule = cell.rule_for_law(truth)?;
    let pf = rule.prepare(forecast)?;
    Ok(chunked_moments(uniforms.len(), |i| pf.score(truth.quantile_unchecked(uniforms[i]))))
}

/// Mean and sd of `S(Q_σ, Q_σ) − S(P, Q_σ)` with `Q_σ = GEV(0, σ, γ)` and
/// `P = GEV(0, cσ, γ)` for every scale and score cell.
///
/// All cells share one stream of uniforms, so differences between cells are
/// not blurred by independent sampling noise.
pub fn run_scale_threshold(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut result = ExperimentResult::new(ExperimentKind::ScaleThreshold, cfg.master_seed);
    let uniforms = draw_uniforms(cfg.n_draws, derive_seed(cfg.master_seed, 0));
    for cell in cfg.score_cells() {
        for &sigma in &cfg.sigma_grid {
            let truth = gev(0.0, sigma, cfg.gamma)?;
            let forecast = gev(0.0, cfg.forecast_factor * sigma, cfg.gamma)?;
            let m = difference_moments(&cell, &truth, &forecast, &uniforms)?;
            let label = format!("sigma={sigma}");
            let p = cell.p_label();
            result.stat(cell.kind.name(), &p, label.clone(), "mean", m.mean);
            result.stat(cell.kind.name(), &p, label.clone(), "sd", m.sd());
            result.stat(cell.kind.name(), &p, label, "se", m.std_err());
        }
    }
    Ok(result)
}

/// Expected combined score `½(S₁ + S₂)` over a grid of scale factors
/// `(k₁, k₂)`, the forecast at station `i` being `GEV(0, kᵢσᵢ, γ)`.
///
/// The combined score is assembled from per-station expectations, which are
/// also reported; both stations use the same uniforms.
pub fn run_paired_scale(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut result = ExperimentResult::new(ExperimentKind::PairedScale, cfg.master_seed);
    let uniforms = draw_uniforms(cfg.n_draws, derive_seed(cfg.master_seed, 0));
    let sigmas = [cfg.sigma1, cfg.sigma2];
    let grids = [&cfg.k1_grid, &cfg.k2_grid];
    for cell in cfg.score_cells() {
        let p = cell.p_label();
        let name = cell.kind.name();
        let mut station: Vec<Vec<(f64, f64)>> = Vec::with_capacity(2);
        for (i, (&sigma, grid)) in sigmas.iter().zip(grids).enumerate() {
            let truth = gev(0.0, sigma, cfg.gamma)?;
            let est: Vec<(f64, f64)> = grid
                .par_iter()
                .map(|&k| {
                    let m = score_moments(&cell, &truth, &gev(0.0, k * sigma, cfg.gamma)?, &uniforms)?;
                    Ok((m.mean, m.std_err()))
                })
                .collect::<Result<_>>()?;
            for (&k, &(mean, se)) in grid.iter().zip(&est) {
                let label = format!("station={}|k={k}", i + 1);
                result.stat(name, &p, label.clone(), "mean", mean);
                result.stat(name, &p, label, "se", se);
            }
            station.push(est);
        }
        for (a, &k1) in cfg.k1_grid.iter().enumerate() {
            for (b, &k2) in cfg.k2_grid.iter().enumerate() {
                let (m1, s1) = station[0][a];
                let (m2, s2) = station[1][b];
                let label = format!("k1={k1}|k2={k2}");
                result.stat(name, &p, label.clone(), "mean", 0.5 * (m1 + m2));
                result.stat(name, &p, label, "se", 0.5 * s1.hypot(s2));
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ScoreKind;
    use crate::scoring::{crps_gev, scrps_gev};

    #[test]
    fn identical_forecast_gives_zero() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::ScaleThreshold, 1);
        cfg.n_draws = 2000;
        cfg.forecast_factor = 1.0;
        let res = run_scale_threshold(&cfg).unwrap();
        assert!(res.summary_rows("mean").all(|r| r.value == 0.0));
    }

    #[test]
    fn unweighted_rows_are_crps_and_scrps() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::ScaleThreshold, 4);
        cfg.n_draws = 3000;
        cfg.sigma_grid = vec![2.0];
        let res = run_scale_threshold(&cfg).unwrap();
        let uniforms = draw_uniforms(cfg.n_draws, derive_seed(4, 0));
        let (q, p) = (gev(0.0, 2.0, 0.12).unwrap(), gev(0.0, 4.0, 0.12).unwrap());
        let mut crps = RunningMoments::default();
        let mut scrps = RunningMoments::default();
        for &u in &uniforms {
            let y = q.quantile_unchecked(u);
            crps.push(crps_gev(&q, y).unwrap().value() - crps_gev(&p, y).unwrap().value());
            scrps.push(scrps_gev(&q, y).unwrap().value() - scrps_gev(&p, y).unwrap().value());
        }
        let w = res.summary_value("wCRPS", "-inf", "sigma=2", "mean").unwrap();
        let s = res.summary_value("swCRPS", "-inf", "sigma=2", "mean").unwrap();
        assert!((w - crps.mean).abs() < 1e-12 && (s - scrps.mean).abs() < 1e-12);
    }

    #[test]
    fn combined_score_is_station_average() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::PairedScale, 2);
        cfg.n_draws = 2000;
        cfg.k1_grid = vec![0.8, 1.0, 1.3];
        cfg.k2_grid = vec![1.0, 1.7];
        let res = run_paired_scale(&cfg).unwrap();
        let uniforms = draw_uniforms(cfg.n_draws, derive_seed(2, 0));
        let cell = ScoreCell {
            kind: ScoreKind::Swcrps,
            p: Some(0.9),
        };
        let one = |sigma: f64, k: f64| {
            let truth = gev(0.0, sigma, 0.12).unwrap();
            score_moments(&cell, &truth, &gev(0.0, k * sigma, 0.12).unwrap(), &uniforms).unwrap().mean
        };
        let combined = res.summary_value("swCRPS", "0.9", "k1=1.3|k2=1.7", "mean").unwrap();
        assert!((combined - 0.5 * (one(1.5, 1.3) + one(3.0, 1.7))).abs() < 1e-12);
    }
}
