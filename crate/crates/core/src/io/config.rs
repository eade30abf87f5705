//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Lists are comma separated.
//! Thresholds are probabilities, with `-inf` marking the unweighted score.
//! Unknown and repeated keys are rejected, and `master_seed` is required.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::distributions::LatentMode;
use crate::error::{Error, Result};
use crate::experiments::{format_p, ExperimentConfig, ExperimentKind, LakesPreset};
use crate::inference::ModelFamily;

/// Every accepted key, in echo order. `threshold_p` is an alias of `thresholds`.
pub const CONFIG_KEYS: [&str; 33] = [
    "experiment",
    "master_seed",
    "n_replicates",
    "series_length",
    "n_draws",
    "scores",
    "thresholds",
    "alpha",
    "xi_grid",
    "table_nu",
    "tau_list",
    "power_nu",
    "power_xi",
    "latent_mode",
    "sigma_grid",
    "gamma",
    "forecast_factor",
    "sigma1",
    "sigma2",
    "k1_grid",
    "k2_grid",
    "lakes_preset",
    "k",
    "min_years",
    "n_stations",
    "world_min_len",
    "world_max_len",
    "lambda_trend",
    "world_gamma",
    "model",
    "n_permutations",
    "data",
    "covariate",
];

/// Values supplied outside the file, e.g. by command-line flags. They win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub experiment: Option<ExperimentKind>,
    pub master_seed: Option<u64>,
}

/// Read and validate a configuration file. Relative `data` and `covariate`
/// paths are resolved against the file's directory.
pub fn parse_config(path: &Path, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_config_str(&text, &path.display().to_string(), base, overrides)
}

/// Parse configuration text; `origin` names the source in error messages.
pub fn parse_config_str(text: &str, origin: &str, base: &Path, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    let mut entries: BTreeMap<&'static str, String> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config {
                key: format!("{origin}:{}", idx + 1),
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = match key.trim() {
            "threshold_p" => "thresholds",
            k => k,
        };
        let Some(&known) = CONFIG_KEYS.iter().find(|&&k| k == key) else {
            return Err(Error::config(key, "unknown key"));
        };
        if entries.insert(known, value.trim().to_string()).is_some() {
            return Err(Error::config(key, "given more than once"));
        }
    }

    let experiment = match (overrides.experiment, entries.remove("experiment")) {
        (Some(kind), Some(v)) if kind != v.parse::<ExperimentKind>()? => {
            return Err(Error::config("experiment", format!("`{v}` conflicts with the requested {kind}")))
        }
        (Some(kind), _) => kind,
        (None, Some(v)) => v.parse()?,
        (None, None) => return Err(Error::config("experiment", "missing")),
    };
    let file_seed = entries.remove("master_seed").map(|v| scalar::<u64>("master_seed", &v)).transpose()?;
    let master_seed = overrides
        .master_seed
        .or(file_seed)
        .ok_or_else(|| Error::config("master_seed", "missing; every run needs an explicit seed"))?;

    let mut cfg = ExperimentConfig::defaults(experiment, master_seed);
    for (key, v) in entries {
        let v = v.as_str();
        match key {
            "n_replicates" => cfg.n_replicates = scalar(key, v)?,
            "series_length" => cfg.series_length = scalar(key, v)?,
            "n_draws" => cfg.n_draws = scalar(key, v)?,
            "scores" => cfg.scores = list(key, v)?,
            "thresholds" => cfg.thresholds = thresholds(v)?,
            "alpha" => cfg.alpha = scalar(key, v)?,
            "xi_grid" => cfg.xi_grid = list(key, v)?,
            "table_nu" => cfg.table_nu = list(key, v)?,
            "tau_list" => cfg.tau_list = list(key, v)?,
            "power_nu" => cfg.power_nu = list(key, v)?,
            "power_xi" => {
                cfg.power_xi = if v.eq_ignore_ascii_case("auto") { None } else { Some(scalar(key, v)?) }
            }
            "latent_mode" => cfg.latent_mode = latent_mode(v)?,
            "sigma_grid" => cfg.sigma_grid = list(key, v)?,
            "gamma" => cfg.gamma = scalar(key, v)?,
            "forecast_factor" => cfg.forecast_factor = scalar(key, v)?,
            "sigma1" => cfg.sigma1 = scalar(key, v)?,
            "sigma2" => cfg.sigma2 = scalar(key, v)?,
            "k1_grid" => cfg.k1_grid = list(key, v)?,
            "k2_grid" => cfg.k2_grid = list(key, v)?,
            "lakes_preset" => cfg.lakes_preset = v.parse::<LakesPreset>()?,
            "k" => cfg.k = scalar(key, v)?,
            "min_years" => cfg.min_years = scalar(key, v)?,
            "n_stations" => cfg.world.n_stations = scalar(key, v)?,
            "world_min_len" => cfg.world.min_len = scalar(key, v)?,
            "world_max_len" => cfg.world.max_len = scalar(key, v)?,
            "lambda_trend" => cfg.world.lambda_trend = scalar(key, v)?,
            "world_gamma" => cfg.world.gamma = scalar(key, v)?,
            "model" => cfg.model = v.parse::<ModelFamily>()?,
            "n_permutations" => cfg.n_permutations = scalar(key, v)?,
            "data" => cfg.data = Some(base.join(v)),
            "covariate" => cfg.covariate = Some(base.join(v)),
            other => unreachable!("key `{other}` is listed but not handled"),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{}` as {}", v.trim(), type_name::<T>())))
}

fn type_name<T>() -> &'static str {
    let full = std::any::type_name::<T>();
    match full {
        "f64" => "a number",
        "u64" | "usize" => "a non-negative integer",
        _ => full.rsplit("::").next().unwrap_or(full),
    }
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::config(key, format!("cannot parse list item `{s}`"))))
        .collect()
}

fn thresholds(v: &str) -> Result<Vec<Option<f64>>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "-inf" | "-Inf" | "-INF" => Ok(None),
            _ => scalar::<f64>("thresholds", s).map(Some),
        })
        .collect()
}

fn latent_mode(v: &str) -> Result<LatentMode> {
    match v.to_ascii_lowercase().replace('-', "_").as_str() {
        "per_observation" => Ok(LatentMode::PerObservation),
        "per_series" => Ok(LatentMode::PerSeries),
        _ => Err(Error::config("latent_mode", format!("`{v}` is not per_observation or per_series"))),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Resolved value of every key, in `CONFIG_KEYS` order.
pub fn config_echo(cfg: &ExperimentConfig) -> Vec<(&'static str, String)> {
    let latent = match cfg.latent_mode {
        LatentMode::PerObservation => "per_observation",
        LatentMode::PerSeries => "per_series",
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
    let values = [
        cfg.experiment.name().to_string(),
        cfg.master_seed.to_string(),
        cfg.n_replicates.to_string(),
        cfg.series_length.to_string(),
        cfg.n_draws.to_string(),
        join(&cfg.scores.iter().map(|s| s.name()).collect::<Vec<_>>()),
        cfg.thresholds.iter().map(|p| format_p(*p)).collect::<Vec<_>>().join(","),
        cfg.alpha.to_string(),
        join(&cfg.xi_grid),
        join(&cfg.table_nu),
        join(&cfg.tau_list),
        join(&cfg.power_nu),
        cfg.power_xi.map_or("auto".into(), |x| x.to_string()),
        latent.to_string(),
        join(&cfg.sigma_grid),
        cfg.gamma.to_string(),
        cfg.forecast_factor.to_string(),
        cfg.sigma1.to_string(),
        cfg.sigma2.to_string(),
        join(&cfg.k1_grid),
        join(&cfg.k2_grid),
        cfg.lakes_preset.name().to_string(),
        cfg.k.to_string(),
        cfg.min_years.to_string(),
        cfg.world.n_stations.to_string(),
        cfg.world.min_len.to_string(),
        cfg.world.max_len.to_string(),
        cfg.world.lambda_trend.to_string(),
        cfg.world.gamma.to_string(),
        cfg.model.name().to_string(),
        cfg.n_permutations.to_string(),
        path(&cfg.data),
        path(&cfg.covariate),
    ];
    CONFIG_KEYS.into_iter().zip(values).collect()
}

/// Render a configuration as text that parses back to the same value.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    config_echo(cfg)
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ScoreKind;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        parse_config_str(text, "test.cfg", Path::new(""), &ConfigOverrides::default())
    }

    #[test]
    fn empty_scale_config_gets_defaults() {
        let cfg = parse("experiment = scale_threshold\nmaster_seed = 7\n").unwrap();
        assert_eq!(cfg.sigma_grid, vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(cfg.thresholds, vec![None, Some(0.5), Some(0.9), Some(0.99)]);
        assert_eq!(cfg.n_draws, 50_000);
        assert_eq!(cfg.master_seed, 7);
    }

    #[test]
    fn seed_is_required() {
        let err = parse("experiment = scale_threshold\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "master_seed"));
        let cfg = parse_config_str(
            "experiment = scale_threshold",
            "x",
            Path::new(""),
            &ConfigOverrides {
                experiment: None,
                master_seed: Some(3),
            },
        )
        .unwrap();
        assert_eq!(cfg.master_seed, 3);
    }

    #[test]
    fn threshold_out_of_range() {
        let err = parse("experiment = scale_threshold\nmaster_seed = 1\nthreshold_p = 1.2").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "thresholds"));
    }

    #[test]
    fn unknown_repeated_and_malformed() {
        let base = "experiment = lakes_sim\nmaster_seed = 1\n";
        assert!(matches!(parse(&format!("{base}colour = red")), Err(Error::Config { key, .. }) if key == "colour"));
        assert!(matches!(parse(&format!("{base}k = 1\nk = 2")), Err(Error::Config { key, .. }) if key == "k"));
        assert!(matches!(parse(&format!("{base}k = big")), Err(Error::Config { key, .. }) if key == "k"));
        assert!(matches!(parse(&format!("{base}\njust words")), Err(Error::Config { key, .. }) if key.ends_with(":4")));
    }

    #[test]
    fn comments_lists_and_markers() {
        let cfg = parse(
            "# lakes\nexperiment = lakes-sim  # trailing\nmaster_seed = 9\nscores = wCRPS, swcrps\nthresholds = -inf, 0.9\nlakes_preset = text\n",
        )
        .unwrap();
        assert_eq!(cfg.scores, vec![ScoreKind::Wcrps, ScoreKind::Swcrps]);
        assert_eq!(cfg.thresholds, vec![None, Some(0.9)]);
        assert_eq!(cfg.lakes_preset, LakesPreset::Text);
    }

    #[test]
    fn echo_round_trips() {
        for kind in ExperimentKind::ALL {
            let mut cfg = ExperimentConfig::defaults(kind, 42);
            cfg.power_xi = Some(0.35);
            let back = parse(&render_config(&cfg)).unwrap();
            assert_eq!(back, cfg, "{kind}");
        }
    }

    #[test]
    fn experiment_override_conflict() {
        let o = ConfigOverrides {
            experiment: Some(ExperimentKind::Benchmark),
            master_seed: None,
        };
        let err = parse_config_str("experiment = lakes_sim\nmaster_seed = 1", "x", Path::new(""), &o).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let cfg = parse_config_str("master_seed = 1", "x", Path::new(""), &o).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Benchmark);
    }
}
