//! Multi-station model comparison and the covariate-permutation diagnostic.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::distributions::PgevParams;
use crate::error::{Error, Result};
use crate::inference::{fit_mle, fitted_laws, FitResult, ModelFamily, ModelSpec, OptimizerConfig};
use crate::io::{filter_min_years, join_covariate, load_covariate_csv, load_station_csv, StationSeries};
use crate::numerics::empirical_quantile;
use crate::seeding::{derive_seed, open_uniform, rng_from_seed};
use crate::stattests::{paired_ttest, sign_rejection_bounds, sign_test};

use super::{mean_sd, ExperimentConfig, ExperimentKind, ExperimentResult, ScoreCell};

/// Pairwise comparisons: code, first model, second model. Differences are first minus second.
pub const COMPARISONS: [(&str, ModelFamily, ModelFamily); 4] = [
    ("A", ModelFamily::Gev, ModelFamily::Gumbel),
    ("B", ModelFamily::PgevLambdaTrend, ModelFamily::Gumbel),
    ("C", ModelFamily::PgevLambdaTrend, ModelFamily::Gev),
    ("D", ModelFamily::PgevLambdaTrend, ModelFamily::GevMuTrend),
];

/// Synthetic station network: each station records the last `n` years of
/// `first_year..=last_year` (`n` uniform in `min_len..=max_len`) from a PGEV
/// law whose frequency follows a shared trend in a linear covariate ramp
/// from −1 to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldConfig {
    pub n_stations: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// `λ₁` in `ln λ = λ₀ + λ₁ t`; zero gives a stationary world.
    pub lambda_trend: f64,
    pub gamma: f64,
    pub first_year: i64,
    pub last_year: i64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_stations: 50,
            min_len: 60,
            max_len: 100,
            lambda_trend: 1.5,
            gamma: 0.2,
            first_year: 1915,
            last_year: 2014,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let span = self.last_year - self.first_year + 1;
        if self.n_stations == 0 {
            return Err(Error::config("n_stations", "must be > 0"));
        }
        if self.min_len < 2 || self.min_len > self.max_len || self.max_len as i64 > span {
            return Err(Error::config(
                "world_min_len",
                format!("need 2 <= min_len <= max_len <= {span}"),
            ));
        }
        if !self.lambda_trend.is_finite() {
            return Err(Error::config("lambda_trend", "must be finite"));
        }
        if !(self.gamma.is_finite() && self.gamma.abs() < 0.5) {
            return Err(Error::config("world_gamma", "must satisfy |gamma| < 0.5"));
        }
        Ok(())
    }

    /// Covariate value of `year`.
    pub fn covariate(&self, year: i64) -> f64 {
        let span = (self.last_year - self.first_year).max(1) as f64;
        2.0 * (year - self.first_year) as f64 / span - 1.0
    }
}

/// Simulate a station network. Station `s` uses a seed derived from `seed` and `s`.
pub fn synthetic_world(world: &WorldConfig, seed: u64) -> Result<Vec<StationSeries>> {
    world.validate()?;
    // ln λ₀ puts u at the 75% quantile when the covariate is zero.
    let lambda0 = (-(0.75f64).ln()).ln();
    (0..world.n_stations)
        .map(|s| {
            let mut rng = rng_from_seed(derive_seed(seed, s as u64));
            let span = world.max_len - world.min_len + 1;
            let len = world.min_len + ((open_uniform(&mut rng) * span as f64) as usize).min(span - 1);
            let u = 30.0 + 30.0 * open_uniform(&mut rng);
            let sigma_u = (0.2 + 0.1 * open_uniform(&mut rng)) * u;
            let years: Vec<i64> = (world.last_year - len as i64 + 1..=world.last_year).collect();
            let covariate: Vec<f64> = years.iter().map(|&y| world.covariate(y)).collect();
            let values = covariate
                .iter()
                .map(|&t| {
                    let p = PgevParams::new((lambda0 + world.lambda_trend * t).exp(), sigma_u, world.gamma, u)?;
                    Ok(p.to_gev().quantile(open_uniform(&mut rng))?)
                })
                .collect::<Result<Vec<f64>>>()?;
            StationSeries::new(format!("S{:03}", s + 1), years, values, Some(covariate))
        })
        .collect()
}

/// Station data with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub series: Vec<StationSeries>,
    pub inputs: Vec<PathBuf>,
    pub dropped_rows: usize,
}

/// Read the configured data files, or simulate a synthetic world when none is given.
pub fn load_or_generate(cfg: &ExperimentConfig) -> Result<LoadedData> {
    match &cfg.data {
        Some(path) => {
            let load = load_station_csv(path)?;
            let mut series = load.series;
            let mut inputs = vec![path.clone()];
            if let Some(cov) = &cfg.covariate {
                join_covariate(&mut series, &load_covariate_csv(cov)?)?;
                inputs.push(cov.clone());
            }
            Ok(LoadedData {
                series,
                inputs,
                dropped_rows: load.dropped_rows,
            })
        }
        None => Ok(LoadedData {
            series: synthetic_world(&cfg.world, derive_seed(cfg.master_seed, 0x5EED))?,
            inputs: Vec::new(),
            dropped_rows: 0,
        }),
    }
}

/// Drop short and constant series, recording each as a warning and a summary row.
fn usable(data: &[StationSeries], cfg: &ExperimentConfig, result: &mut ExperimentResult) -> Result<Vec<StationSeries>> {
    let (kept, short) = filter_min_years(data.to_vec(), cfg.min_years);
    for id in &short {
        let n = data.iter().find(|s| &s.station_id == id).map_or(0, |s| s.len());
        result
            .warnings
            .push(format!("station `{id}` skipped: {n} years, need at least {}", cfg.min_years));
        result.stat("data", "-inf", id.clone(), "skipped", n as f64);
    }
    let mut out = Vec::with_capacity(kept.len());
    for s in kept {
        if s.values.iter().all(|&v| v == s.values[0]) {
            result.warnings.push(format!("station `{}` skipped: constant series", s.station_id));
            result.stat("data", "-inf", s.station_id.clone(), "skipped", s.len() as f64);
        } else {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientData {
            station: "*".into(),
            reason: format!("no station has at least {} usable years", cfg.min_years),
        });
    }
    Ok(out)
}

fn optimizer(cfg: &ExperimentConfig) -> OptimizerConfig {
    OptimizerConfig {
        min_obs: cfg.min_years,
        ..OptimizerConfig::default()
    }
}

/// Mean in-sample score per station for every cell: `[cell][station]`.
/// Thresholds are empirical quantiles of each station's record. A station
/// whose score cannot be evaluated gets NaN and a warning.
fn station_means(
    family: ModelFamily,
    fit: &FitResult,
    data: &[StationSeries],
    cells: &[ScoreCell],
    warnings: &mut Vec<String>,
) -> Result<Vec<Vec<f64>>> {
    let laws = fitted_laws(&ModelSpec::new(family), fit, data)?;
    let per_station: Vec<Vec<std::result::Result<f64, String>>> = data
        .par_iter()
        .zip(laws.par_iter())
        .map(|(s, laws)| {
            let mut sorted = s.values.clone();
            sorted.sort_by(f64::total_cmp);
            cells
                .iter()
                .map(|cell| {
                    let q = cell.p.map(|p| empirical_quantile(&sorted, p));
                    let rule = cell.kind.rule(q);
                    let mut total = 0.0;
                    for (law, &y) in laws.iter().zip(&s.values) {
                        total += rule.evaluate(law, y).map_err(|e| {
                            format!("{} {}@{} at `{}`: {e}", family, cell.kind, cell.p_label(), s.station_id)
                        })?;
                    }
                    Ok(total / s.len() as f64)
                })
                .collect()
        })
        .collect();
    let mut out = vec![Vec::with_capacity(data.len()); cells.len()];
    for station in per_station {
        for (c, v) in station.into_iter().enumerate() {
            out[c].push(v.unwrap_or_else(|msg| {
                warnings.push(msg);
                f64::NAN
            }));
        }
    }
    Ok(out)
}

fn emit_fit(result: &mut ExperimentResult, fit: &FitResult) {
    let family = fit.family.name();
    result.stat("fit", "-inf", family, "neg_loglik", fit.neg_loglik);
    result.stat("fit", "-inf", family, "converged", f64::from(u8::from(fit.converged)));
    if let Some(g) = fit.params.get("gamma") {
        result.stat("fit", "-inf", family, "gamma", g);
    }
    for (name, v) in fit.params.iter() {
        result.record("param", "-inf", format!("{family}|{name}"), None, v);
    }
    if let Some(se) = &fit.std_errs {
        for (name, v) in se.iter() {
            result.record("se", "-inf", format!("{family}|{name}"), None, v);
        }
    }
}

fn finite_mean(xs: &[f64]) -> f64 {
    let f: Vec<f64> = xs.iter().copied().filter(|v| v.is_finite()).collect();
    if f.is_empty() {
        f64::NAN
    } else {
        f.iter().sum::<f64>() / f.len() as f64
    }
}

/// Fit the four model families (shared regional shape each), score them in
/// sample, and compare them station by station.
pub fn run_station_eval(data: &[StationSeries], cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new(ExperimentKind::StationEval, cfg.master_seed);
    let data = usable(data, cfg, &mut result)?;
    let has_cov = data.iter().all(|s| s.covariate.is_some());
    let cells = cfg.score_cells();

    let mut means: Vec<(ModelFamily, Vec<Vec<f64>>)> = Vec::new();
    for (f_idx, &family) in ModelFamily::ALL.iter().enumerate() {
        if family.has_trend() && !has_cov {
            result
                .warnings
                .push(format!("model {family} skipped: stations lack a covariate"));
            continue;
        }
        let fit = fit_mle(
            &ModelSpec::new(family),
            &data,
            true,
            &optimizer(cfg),
            derive_seed(cfg.master_seed, f_idx as u64),
        )?;
        if !fit.converged {
            result.warnings.push(format!("model {family}: optimiser did not converge"));
        }
        emit_fit(&mut result, &fit);
        let m = station_means(family, &fit, &data, &cells, &mut result.warnings)?;
        for (c, cell) in cells.iter().enumerate() {
            let p = cell.p_label();
            for (s, st) in data.iter().enumerate() {
                result.record(cell.kind.name(), &p, format!("{family}|{}", st.station_id), None, m[c][s]);
            }
            result.stat(cell.kind.name(), &p, family.name(), "overall_mean", finite_mean(&m[c]));
        }
        means.push((family, m));
    }

    for (code, first, second) in COMPARISONS {
        let (Some(a), Some(b)) = (
            means.iter().find(|m| m.0 == first),
            means.iter().find(|m| m.0 == second),
        ) else {
            continue;
        };
        let label = format!("{code}: {first} vs {second}");
        for (c, cell) in cells.iter().enumerate() {
            let p = cell.p_label();
            let name = cell.kind.name();
            let mut diffs = Vec::with_capacity(data.len());
            for (s, st) in data.iter().enumerate() {
                let d = a.1[c][s] - b.1[c][s];
                if d.is_finite() {
                    result.record(name, &p, format!("{code}|{}", st.station_id), None, d);
                    diffs.push(d);
                }
            }
            if diffs.is_empty() {
                continue;
            }
            result.stat(name, &p, label.clone(), "n", diffs.len() as f64);
            result.stat(name, &p, label.clone(), "mean_diff", mean_sd(&diffs).0);
            match sign_test(&diffs) {
                Ok(t) => {
                    let (lo, hi) = sign_rejection_bounds(t.test.n_effective, cfg.alpha)?;
                    result.stat(name, &p, label.clone(), "prop_negative", t.prop_negative);
                    result.stat(name, &p, label.clone(), "sign_p", t.test.p_value);
                    result.stat(name, &p, label.clone(), "sign_lower", lo);
                    result.stat(name, &p, label.clone(), "sign_upper", hi);
                }
                Err(Error::AllZero) => result.warnings.push(format!("{label} {name}@{p}: all differences zero")),
                Err(e) => return Err(e),
            }
            match paired_ttest(&diffs) {
                Ok(t) => result.stat(name, &p, label.clone(), "ttest_p", t.p_value),
                Err(Error::DegenerateVariance | Error::SampleTooSmall { .. }) => {
                    result.warnings.push(format!("{label} {name}@{p}: t-test undefined"))
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(result)
}

/// Pairs of sorted station means under the original and the permuted covariate.
/// Ties count half towards each side.
fn fraction_above(original: &[f64], permuted: &[f64]) -> (f64, usize) {
    let mut a: Vec<f64> = original.iter().copied().filter(|v| v.is_finite()).collect();
    let mut b: Vec<f64> = permuted.iter().copied().filter(|v| v.is_finite()).collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = a.len().min(b.len());
    if n == 0 {
        return (f64::NAN, 0);
    }
    let score: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| match x.total_cmp(y) {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Less => 0.0,
        })
        .sum();
    (score / n as f64, n)
}

/// Fit a trend model on the original data and on data whose covariate has been
/// permuted within each station, and compare the sorted station-wise mean scores.
pub fn run_permutation_trend(data: &[StationSeries], cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new(ExperimentKind::PermTrend, cfg.master_seed);
    if !cfg.model.has_trend() {
        return Err(Error::config("model", format!("{} has no trend", cfg.model)));
    }
    let data = usable(data, cfg, &mut result)?;
    if let Some(s) = data.iter().find(|s| s.covariate.is_none()) {
        return Err(Error::ShapeMismatch(format!("station `{}` has no covariate", s.station_id)));
    }
    let cells = cfg.score_cells();
    let spec = ModelSpec::new(cfg.model);
    let fit_and_score = |series: &[StationSeries], seed: u64, warnings: &mut Vec<String>| -> Result<Vec<Vec<f64>>> {
        let fit = fit_mle(&spec, series, true, &optimizer(cfg), seed)?;
        if !fit.converged {
            warnings.push(format!("model {}: optimiser did not converge", cfg.model));
        }
        station_means(cfg.model, &fit, series, &cells, warnings)
    };

    let original = fit_and_score(&data, derive_seed(cfg.master_seed, 0), &mut result.warnings)?;
    let mut permuted = Vec::with_capacity(cfg.n_permutations);
    for b in 0..cfg.n_permutations {
        let perm_seed = derive_seed(cfg.master_seed, 1 + b as u64);
        let shuffled: Vec<StationSeries> = data
            .iter()
            .enumerate()
            .map(|(s, st)| {
                let mut st = st.clone();
                let mut rng = rng_from_seed(derive_seed(perm_seed, s as u64));
                if let Some(c) = st.covariate.as_mut() {
                    c.shuffle(&mut rng);
                }
                st
            })
            .collect();
        permuted.push(fit_and_score(&shuffled, perm_seed, &mut result.warnings)?);
    }

    for (c, cell) in cells.iter().enumerate() {
        let (name, p) = (cell.kind.name(), cell.p_label());
        let mut sorted = original[c].clone();
        sorted.sort_by(f64::total_cmp);
        for (i, v) in sorted.iter().enumerate() {
            result.record(name, &p, "original", Some(i), *v);
        }
        let (mut pooled, mut pooled_n) = (0.0, 0usize);
        for (b, perm) in permuted.iter().enumerate() {
            let mut ps = perm[c].clone();
            ps.sort_by(f64::total_cmp);
            let label = format!("permuted {}", b + 1);
            for (i, v) in ps.iter().enumerate() {
                result.record(name, &p, label.clone(), Some(i), *v);
            }
            let (frac, n) = fraction_above(&original[c], &perm[c]);
            result.stat(name, &p, label, "frac_above", frac);
            pooled += frac * n as f64;
            pooled_n += n;
        }
        let frac = pooled / pooled_n as f64;
        result.stat(name, &p, "all", "frac_above", frac);
        result.stat(name, &p, "all", "frac_below", 1.0 - frac);
        result.stat(name, &p, "original", "overall_mean", finite_mean(&original[c]));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ScoreKind;

    fn small_world(trend: f64, seed: u64) -> (ExperimentConfig, Vec<StationSeries>) {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::StationEval, seed);
        cfg.world = WorldConfig {
            n_stations: 8,
            lambda_trend: trend,
            ..WorldConfig::default()
        };
        let data = synthetic_world(&cfg.world, seed).unwrap();
        (cfg, data)
    }

    #[test]
    fn world_shape() {
        let (cfg, data) = small_world(1.5, 1);
        assert_eq!(data.len(), 8);
        for s in &data {
            assert!((60..=100).contains(&s.len()));
            assert_eq!(*s.years.last().unwrap(), 2014);
            let c = s.covariate.as_ref().unwrap();
            assert!((c.last().unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(synthetic_world(&cfg.world, 1).unwrap(), data);
    }

    #[test]
    fn station_eval_emits_comparisons() {
        let (cfg, data) = small_world(1.5, 2);
        let res = run_station_eval(&data, &cfg).unwrap();
        for (code, a, b) in COMPARISONS {
            let label = format!("{code}: {a} vs {b}");
            assert!(res.summary_value("LS", "-inf", &label, "prop_negative").is_some(), "{label}");
            assert!(res.summary_value("LS", "-inf", &label, "ttest_p").is_some());
        }
        for fam in ModelFamily::ALL {
            assert!(res.summary_value("swCRPS", "0.9", fam.name(), "overall_mean").unwrap().is_finite());
        }
    }

    #[test]
    fn short_and_constant_stations_are_skipped() {
        let (cfg, mut data) = small_world(0.0, 3);
        data[0].values.truncate(30);
        data[0].years.truncate(30);
        data[0].covariate.as_mut().unwrap().truncate(30);
        let n1 = data[1].len();
        data[1].values = vec![5.0; n1];
        let res = run_station_eval(&data, &cfg).unwrap();
        assert_eq!(res.summary_value("data", "-inf", "S001", "skipped"), Some(30.0));
        assert!(res.summary_value("data", "-inf", "S002", "skipped").is_some());
        let only = [data[1].clone()];
        assert!(matches!(run_station_eval(&only, &cfg), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn constant_covariate_permutation_is_a_tie() {
        let (mut cfg, mut data) = small_world(0.0, 4);
        cfg.experiment = ExperimentKind::PermTrend;
        cfg.scores = vec![ScoreKind::Ls];
        for s in &mut data {
            let n = s.len();
            s.covariate = Some(vec![0.3; n]);
        }
        let res = run_permutation_trend(&data, &cfg).unwrap();
        assert_eq!(res.summary_value("LS", "-inf", "all", "frac_above"), Some(0.5));
    }

    #[test]
    fn fraction_counts_ties_half() {
        assert_eq!(fraction_above(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, 3.0, 9.0]).0, 0.625);
    }

    #[test]
    fn gev_mu_law_matches_fit() {
        let (_, data) = small_world(0.0, 5);
        let spec = ModelSpec::new(ModelFamily::Gev);
        let fit = fit_mle(&spec, &data, true, &OptimizerConfig::default(), 1).unwrap();
        let laws = fitted_laws(&spec, &fit, &data).unwrap();
        let g = fit.params.get("gamma").unwrap();
        let first = &laws[0][0];
        assert_eq!(first.gamma, g);
        assert_eq!(first.mu, fit.params.get("mu[S001]").unwrap());
    }
}
