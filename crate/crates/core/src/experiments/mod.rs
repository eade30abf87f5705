//! Seeded simulation and evaluation drivers.
//!
//! Every driver returns an [`ExperimentResult`] of long-format records and
//! summary records. Work units (replicates, stations, grid cells) draw from
//! seeds derived from the master seed and are collected in index order, so the
//! output is identical for any number of worker threads.

mod benchmark;
mod lakes;
mod scale;
mod stations;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::distributions::{GevParams, LatentMode};
use crate::error::{Error, Result};
use crate::inference::ModelFamily;
use crate::scoring::{ScoreRule, WeightSpec};

pub use benchmark::run_benchmark;
pub use lakes::{lake_stations, run_lakes_sim, Lake, LakesPreset};
pub use scale::{run_paired_scale, run_scale_threshold};
pub use stations::{
    load_or_generate, run_permutation_trend, run_station_eval, synthetic_world, LoadedData, WorldConfig, COMPARISONS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Benchmark,
    ScaleThreshold,
    PairedScale,
    LakesSim,
    StationEval,
    PermTrend,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Benchmark,
        ExperimentKind::ScaleThreshold,
        ExperimentKind::PairedScale,
        ExperimentKind::LakesSim,
        ExperimentKind::StationEval,
        ExperimentKind::PermTrend,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Benchmark => "benchmark",
            ExperimentKind::ScaleThreshold => "scale_threshold",
            ExperimentKind::PairedScale => "paired_scale",
            ExperimentKind::LakesSim => "lakes_sim",
            ExperimentKind::StationEval => "station_eval",
            ExperimentKind::PermTrend => "perm_trend",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name().replace('_', "") == norm)
            .ok_or_else(|| Error::config("experiment", format!("unknown experiment `{s}`")))
    }
}

/// Score families selectable in a score set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    Ls,
    LsQ,
    Crps,
    Scrps,
    Wcrps,
    Swcrps,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 6] = [
        ScoreKind::Ls,
        ScoreKind::LsQ,
        ScoreKind::Crps,
        ScoreKind::Scrps,
        ScoreKind::Wcrps,
        ScoreKind::Swcrps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Ls => "LS",
            ScoreKind::LsQ => "LS_q",
            ScoreKind::Crps => "CRPS",
            ScoreKind::Scrps => "SCRPS",
            ScoreKind::Wcrps => "wCRPS",
            ScoreKind::Swcrps => "swCRPS",
        }
    }

    /// Whether the score takes a threshold.
    pub fn thresholded(self) -> bool {
        matches!(self, ScoreKind::LsQ | ScoreKind::Wcrps | ScoreKind::Swcrps)
    }

    /// The rule at threshold `q`; `None` gives the unweighted member of the family.
    pub fn rule(self, q: Option<f64>) -> ScoreRule {
        match (self, q) {
            (ScoreKind::Ls, _) | (ScoreKind::LsQ, None) => ScoreRule::Ls,
            (ScoreKind::LsQ, Some(q)) => ScoreRule::CensoredLs(q),
            (ScoreKind::Crps, _) | (ScoreKind::Wcrps, None) => ScoreRule::Crps,
            (ScoreKind::Scrps, _) | (ScoreKind::Swcrps, None) => ScoreRule::Scrps,
            (ScoreKind::Wcrps, Some(q)) => ScoreRule::Wcrps(WeightSpec::Quantile(q)),
            (ScoreKind::Swcrps, Some(q)) => ScoreRule::Swcrps(WeightSpec::Quantile(q)),
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::config("scores", format!("unknown score `{t}`")))
    }
}

/// A score paired with a threshold probability; `p = None` is the
/// unweighted marker, written `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreCell {
    pub kind: ScoreKind,
    pub p: Option<f64>,
}

impl ScoreCell {
    pub fn p_label(&self) -> String {
        format_p(self.p)
    }

    /// Rule with the threshold resolved as the `p`-quantile of `law`.
    /// `p = 0` resolves to the lower endpoint, or to the unweighted rule when
    /// the support is unbounded below.
    pub fn rule_for_law(&self, law: &GevParams) -> Result<ScoreRule> {
        let q = match self.p {
            None => None,
            Some(p) if p == 0.0 => law.lower_endpoint(),
            Some(p) => Some(law.quantile(p)?),
        };
        Ok(self.kind.rule(q))
    }
}

pub fn format_p(p: Option<f64>) -> String {
    match p {
        None => "-inf".into(),
        Some(p) => format!("{p}"),
    }
}

/// Cross the score set with the thresholds. Scores without a threshold appear once.
pub fn score_cells(scores: &[ScoreKind], thresholds: &[Option<f64>]) -> Vec<ScoreCell> {
    let mut cells = Vec::new();
    for &kind in scores {
        if kind.thresholded() {
            cells.extend(thresholds.iter().map(|&p| ScoreCell { kind, p }));
        } else {
            cells.push(ScoreCell { kind, p: None });
        }
    }
    cells
}

/// Fully resolved experiment settings. Fields an experiment does not use are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub master_seed: u64,
    pub n_replicates: usize,
    pub series_length: usize,
    pub n_draws: usize,
    pub scores: Vec<ScoreKind>,
    pub thresholds: Vec<Option<f64>>,
    pub alpha: f64,

    pub xi_grid: Vec<f64>,
    pub table_nu: Vec<f64>,
    pub tau_list: Vec<f64>,
    pub power_nu: Vec<f64>,
    /// Shape of the latent law in the power study; the best-matching grid value when unset.
    pub power_xi: Option<f64>,
    pub latent_mode: LatentMode,

    pub sigma_grid: Vec<f64>,
    pub gamma: f64,
    pub forecast_factor: f64,

    pub sigma1: f64,
    pub sigma2: f64,
    pub k1_grid: Vec<f64>,
    pub k2_grid: Vec<f64>,

    pub lakes_preset: LakesPreset,
    pub k: f64,

    pub min_years: usize,
    pub world: WorldConfig,
    pub model: ModelFamily,
    pub n_permutations: usize,
    pub data: Option<PathBuf>,
    pub covariate: Option<PathBuf>,
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| ((lo + i as f64 * step) * 1e6).round() / 1e6).collect()
}

impl ExperimentConfig {
    /// Documented defaults for `experiment`.
    pub fn defaults(experiment: ExperimentKind, master_seed: u64) -> Self {
        use ExperimentKind::*;
        let (scores, thresholds, n_draws) = match experiment {
            Benchmark => (vec![ScoreKind::Crps, ScoreKind::Scrps], vec![None], 1_000_000),
            ScaleThreshold => (
                vec![ScoreKind::Wcrps, ScoreKind::Swcrps],
                vec![None, Some(0.5), Some(0.9), Some(0.99)],
                50_000,
            ),
            PairedScale => (vec![ScoreKind::Wcrps, ScoreKind::Swcrps], vec![Some(0.9)], 100_000),
            LakesSim => (
                vec![ScoreKind::Wcrps, ScoreKind::Swcrps],
                vec![None, Some(0.5), Some(0.9), Some(0.99)],
                0,
            ),
            StationEval => (ScoreKind::ALL.to_vec(), vec![Some(0.9), Some(0.99)], 0),
            PermTrend => (vec![ScoreKind::Ls], vec![None], 0),
        };
        ExperimentConfig {
            experiment,
            master_seed,
            n_replicates: if experiment == StationEval || experiment == PermTrend { 1 } else { 1000 },
            series_length: 100,
            n_draws,
            scores,
            thresholds,
            alpha: 0.05,
            xi_grid: grid(0.10, 0.90, 0.05),
            table_nu: vec![1.1, 1.4, 1.8],
            tau_list: vec![0.75, 0.5, 0.25],
            power_nu: grid(1.1, 2.0, 0.1),
            power_xi: None,
            latent_mode: LatentMode::PerObservation,
            sigma_grid: vec![1.0, 2.0, 4.0, 8.0],
            gamma: 0.12,
            forecast_factor: 2.0,
            sigma1: 1.5,
            sigma2: 3.0,
            k1_grid: grid(0.5, 2.0, 0.1),
            k2_grid: grid(0.5, 2.0, 0.1),
            lakes_preset: LakesPreset::Table,
            k: 1.5,
            min_years: 60,
            world: WorldConfig::default(),
            model: ModelFamily::PgevLambdaTrend,
            n_permutations: 1,
            data: None,
            covariate: None,
        }
    }

    pub fn score_cells(&self) -> Vec<ScoreCell> {
        score_cells(&self.scores, &self.thresholds)
    }

    /// Range checks shared by the parser and the drivers.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(key, msg));
        for p in self.thresholds.iter().flatten() {
            if !(0.0..1.0).contains(p) {
                return bad("thresholds", format!("threshold probability {p} outside [0, 1)"));
            }
        }
        if self.scores.is_empty() {
            return bad("scores", "score set is empty".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("{} outside (0, 1)", self.alpha));
        }
        match self.experiment {
            ExperimentKind::Benchmark => {
                if self.xi_grid.is_empty() || self.xi_grid.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
                    return bad("xi_grid", "values must lie in (0, 1)".into());
                }
                if let Some(x) = self.power_xi {
                    if !(x > 0.0 && x < 1.0) {
                        return bad("power_xi", format!("{x} outside (0, 1)"));
                    }
                }
                if self.table_nu.iter().chain(&self.power_nu).any(|v| !(*v >= 1.0)) {
                    return bad("table_nu", "extremist factors must be >= 1".into());
                }
                if self.tau_list.iter().any(|t| !(0.0..=1.0).contains(t)) {
                    return bad("tau_list", "tau must lie in [0, 1]".into());
                }
                if self.scores.iter().any(|s| !matches!(s, ScoreKind::Crps | ScoreKind::Scrps)) {
                    return bad("scores", "benchmark supports CRPS and SCRPS".into());
                }
                self.positive("n_draws", self.n_draws)?;
                self.positive("n_replicates", self.n_replicates)?;
                self.positive("series_length", self.series_length)?;
            }
            ExperimentKind::ScaleThreshold => {
                if self.sigma_grid.is_empty() || self.sigma_grid.iter().any(|s| !(*s > 0.0)) {
                    return bad("sigma_grid", "scales must be > 0".into());
                }
                if !(self.forecast_factor > 0.0) {
                    return bad("forecast_factor", "must be > 0".into());
                }
                self.shape_ok()?;
                self.positive("n_draws", self.n_draws)?;
            }
            ExperimentKind::PairedScale => {
                if !(self.sigma1 > 0.0 && self.sigma2 > 0.0) {
                    return bad("sigma1", "scales must be > 0".into());
                }
                if self.k1_grid.iter().chain(&self.k2_grid).any(|k| !(*k > 0.0)) || self.k1_grid.is_empty() || self.k2_grid.is_empty() {
                    return bad("k1_grid", "perturbation factors must be > 0".into());
                }
                self.shape_ok()?;
                self.positive("n_draws", self.n_draws)?;
            }
            ExperimentKind::LakesSim => {
                if !(self.k > 0.0) {
                    return bad("k", format!("{} must be > 0", self.k));
                }
                self.positive("n_replicates", self.n_replicates)?;
                self.positive("series_length", self.series_length)?;
            }
            ExperimentKind::StationEval | ExperimentKind::PermTrend => {
                self.world.validate()?;
                if self.experiment == ExperimentKind::PermTrend {
                    if !self.model.has_trend() {
                        return bad("model", format!("{} has no trend", self.model));
                    }
                    self.positive("n_permutations", self.n_permutations)?;
                }
                if self.covariate.is_some() && self.data.is_none() {
                    return bad("covariate", "a covariate file needs a data file".into());
                }
                if self.min_years < 2 {
                    return bad("min_years", "must be at least 2".into());
                }
            }
        }
        Ok(())
    }

    fn positive(&self, key: &str, v: usize) -> Result<()> {
        if v == 0 {
            return Err(Error::config(key, "must be > 0"));
        }
        Ok(())
    }

    fn shape_ok(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma < 0.5) {
            return Err(Error::config("gamma", format!("{} must be finite and < 0.5", self.gamma)));
        }
        Ok(())
    }
}

/// One long-format row.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub score: String,
    pub threshold_p: String,
    pub label: String,
    pub replicate: Option<usize>,
    pub value: f64,
}

/// One summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub score: String,
    pub threshold_p: String,
    pub label: String,
    pub stat: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub master_seed: u64,
    pub records: Vec<Record>,
    pub summary: Vec<SummaryRecord>,
    /// Files read by the run.
    pub inputs: Vec<PathBuf>,
    /// Rows dropped during ingestion.
    pub dropped_rows: usize,
    /// Non-fatal issues, e.g. skipped stations.
    pub warnings: Vec<String>,
}

impl ExperimentResult {
    pub fn new(kind: ExperimentKind, master_seed: u64) -> Self {
        ExperimentResult {
            kind,
            master_seed,
            records: Vec::new(),
            summary: Vec::new(),
            inputs: Vec::new(),
            dropped_rows: 0,
            warnings: Vec::new(),
        }
    }

    pub fn record(&mut self, score: &str, p: &str, label: impl Into<String>, replicate: Option<usize>, value: f64) {
        self.records.push(Record {
            score: score.into(),
            threshold_p: p.into(),
            label: label.into(),
            replicate,
            value,
        });
    }

    pub fn stat(&mut self, score: &str, p: &str, label: impl Into<String>, stat: &str, value: f64) {
        self.summary.push(SummaryRecord {
            score: score.into(),
            threshold_p: p.into(),
            label: label.into(),
            stat: stat.into(),
            value,
        });
    }

    /// Look up one summary value.
    pub fn summary_value(&self, score: &str, p: &str, label: &str, stat: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.score == score && r.threshold_p == p && r.label == label && r.stat == stat)
            .map(|r| r.value)
    }

    /// All summary rows matching the given stat, in emission order.
    pub fn summary_rows<'a>(&'a self, stat: &'a str) -> impl Iterator<Item = &'a SummaryRecord> + 'a {
        self.summary.iter().filter(move |r| r.stat == stat)
    }
}

/// Run the experiment named in `cfg`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::Benchmark => run_benchmark(cfg),
        ExperimentKind::ScaleThreshold => run_scale_threshold(cfg),
        ExperimentKind::PairedScale => run_paired_scale(cfg),
        ExperimentKind::LakesSim => run_lakes_sim(cfg),
        ExperimentKind::StationEval | ExperimentKind::PermTrend => {
            let loaded = load_or_generate(cfg)?;
            let mut result = if cfg.experiment == ExperimentKind::StationEval {
                run_station_eval(&loaded.series, cfg)?
            } else {
                run_permutation_trend(&loaded.series, cfg)?
            };
            result.inputs = loaded.inputs;
            result.dropped_rows = loaded.dropped_rows;
            Ok(result)
        }
    }
}

/// Wilson score interval for `successes` out of `n` at 95%.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let denom = 1.0 + z * z / n_f;
    let centre = (p + z * z / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z * z / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_cross_only_thresholded_scores() {
        let cells = score_cells(&[ScoreKind::Ls, ScoreKind::Wcrps], &[None, Some(0.9)]);
        assert_eq!(cells.len(), 3);
        assert_eq!(cells[0].p_label(), "-inf");
        assert_eq!(cells[2].p_label(), "0.9");
    }

    #[test]
    fn unweighted_marker_gives_plain_rules() {
        assert_eq!(ScoreKind::Wcrps.rule(None), ScoreRule::Crps);
        assert_eq!(ScoreKind::Swcrps.rule(None), ScoreRule::Scrps);
        assert_eq!(ScoreKind::LsQ.rule(None), ScoreRule::Ls);
        let law = GevParams::new(0.0, 1.0, 0.12).unwrap();
        let cell = ScoreCell {
            kind: ScoreKind::Wcrps,
            p: Some(0.0),
        };
        assert_eq!(
            cell.rule_for_law(&law).unwrap(),
            ScoreRule::Wcrps(WeightSpec::Quantile(-1.0 / 0.12))
        );
    }

    #[test]
    fn default_grids() {
        let cfg = ExperimentConfig::defaults(ExperimentKind::Benchmark, 1);
        assert_eq!(cfg.xi_grid.len(), 17);
        assert_eq!(cfg.xi_grid[16], 0.9);
        assert_eq!(cfg.power_nu.first(), Some(&1.1));
        assert_eq!(cfg.power_nu.last(), Some(&2.0));
        for kind in ExperimentKind::ALL {
            ExperimentConfig::defaults(kind, 0).validate().unwrap();
            assert_eq!(kind.name().parse::<ExperimentKind>().unwrap(), kind);
        }
    }

    #[test]
    fn wilson_brackets_proportion() {
        let (lo, hi) = wilson_interval(600, 1000);
        assert!(lo < 0.6 && hi > 0.6);
        assert!((hi - lo) < 0.07);
    }
}
