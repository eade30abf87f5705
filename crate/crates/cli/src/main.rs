use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use extremescore::experiments::{self, ExperimentConfig, ExperimentKind, ScoreKind};
use extremescore::inference::{fit_mle, ModelFamily, ModelSpec, OptimizerConfig};
use extremescore::io::{
    emit_results, filter_min_years, join_covariate, load_covariate_csv, load_station_csv, parse_config,
    parse_config_str, ConfigOverrides,
};
use extremescore::kernel_mc::{mc_kernel_score, mc_scaled_kernel_score};
use extremescore::numerics::empirical_quantile;
use extremescore::{Error, Forecast, GevParams, PgevParams, Result};

/// Proper scoring rules for extreme-value forecasts.
///
/// Scores are positively oriented (higher is better) unless --negate-display is given.
#[derive(Debug, Parser)]
#[command(name = "extremescore", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Experiment configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `master_seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for result files.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Also write an SVG figure.
    #[arg(long, global = true)]
    plots: bool,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "EXTREMESCORE_THREADS")]
    threads: Option<usize>,
    /// Print scores negatively oriented (lower is better). Files are unaffected.
    #[arg(long, global = true)]
    negate_display: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one score for a forecast at one or more observations.
    Score(ScoreArgs),
    /// Fit a model family to station data by maximum likelihood.
    Fit(FitArgs),
    /// Exponential/Pareto benchmark: score ratios and Wilcoxon power.
    Bench,
    /// Score differences across a scale grid.
    SimScale,
    /// Combined score of two stations over a grid of scale errors.
    SimPaired,
    /// Five-station simulation with a proportional scale error.
    SimLakes,
    /// Fit and compare the four model families on station data.
    Eval,
    /// Compare fits on original and permuted covariates.
    PermTrend,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// GEV forecast `mu,sigma,gamma`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["pgev", "ensemble"])]
    gev: Option<Vec<f64>>,
    /// PGEV forecast `lambda,sigma_u,gamma,u`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "ensemble")]
    pgev: Option<Vec<f64>>,
    /// Ensemble members, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ensemble: Option<Vec<f64>>,
    /// LS, LS_q, CRPS, SCRPS, wCRPS or swCRPS.
    #[arg(long)]
    rule: String,
    /// Absolute threshold for LS_q, wCRPS and swCRPS.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "p")]
    threshold: Option<f64>,
    /// Threshold as a probability level of the forecast.
    #[arg(long)]
    p: Option<f64>,
    /// Observations, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    y: Vec<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Station CSV with header `station_id,year,value[,covariate]`.
    #[arg(long)]
    data: PathBuf,
    /// Covariate CSV with header `year,covariate`.
    #[arg(long)]
    covariate: Option<PathBuf>,
    /// Gumbel, GEV, GEV_mu or PGEV_lambda.
    #[arg(long, default_value = "GEV")]
    model: String,
    /// One shape parameter shared by all stations.
    #[arg(long)]
    shared_shape: bool,
    /// Stations with fewer years are skipped.
    #[arg(long, default_value_t = 20)]
    min_years: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Error::Config {
                key: "threads".into(),
                message: "must be > 0".into(),
            });
        }
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let g = &cli.global;
    let kind = match &cli.command {
        Command::Score(args) => return score(args, g.negate_display),
        Command::Fit(args) => return fit(args, g),
        Command::Bench => ExperimentKind::Benchmark,
        Command::SimScale => ExperimentKind::ScaleThreshold,
        Command::SimPaired => ExperimentKind::PairedScale,
        Command::SimLakes => ExperimentKind::LakesSim,
        Command::Eval => ExperimentKind::StationEval,
        Command::PermTrend => ExperimentKind::PermTrend,
    };
    let cfg = load_config(g, kind)?;
    let result = experiments::run(&cfg)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let files = emit_results(&result, &cfg, &g.out, g.plots)?;
    println!("{}", files.records.display());
    println!("{}", files.summary.display());
    println!("{}", files.manifest.display());
    if let Some(p) = files.plot {
        println!("{}", p.display());
    }
    Ok(())
}

fn load_config(g: &Global, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let overrides = ConfigOverrides {
        experiment: Some(kind),
        master_seed: g.seed,
    };
    match &g.config {
        Some(path) => parse_config(path, &overrides),
        None => parse_config_str("", "<defaults>", Path::new(""), &overrides),
    }
}

fn score(args: &ScoreArgs, negate: bool) -> Result<()> {
    let kind: ScoreKind = args.rule.parse()?;
    let sign = if negate { -1.0 } else { 1.0 };
    let arity = |v: &Option<Vec<f64>>, key: &str, n: usize| match v {
        Some(x) if x.len() != n => Err(Error::Config {
            key: key.into(),
            message: format!("expected {n} comma-separated values, got {}", x.len()),
        }),
        _ => Ok(()),
    };
    arity(&args.gev, "gev", 3)?;
    arity(&args.pgev, "pgev", 4)?;
    let forecast = match (&args.gev, &args.pgev, &args.ensemble) {
        (Some(g), _, _) => Forecast::Gev(GevParams::new(g[0], g[1], g[2])?),
        (_, Some(p), _) => Forecast::Pgev(PgevParams::new(p[0], p[1], p[2], p[3])?),
        (_, _, Some(e)) => Forecast::ensemble(e.clone())?,
        _ => {
            return Err(Error::Config {
                key: "forecast".into(),
                message: "give one of --gev, --pgev or --ensemble".into(),
            })
        }
    };
    let q = match (args.threshold, args.p) {
        (Some(q), _) => Some(q),
        (None, Some(p)) => Some(match &forecast {
            Forecast::Gev(g) => g.quantile(p)?,
            Forecast::Pgev(g) => g.to_gev().quantile(p)?,
            Forecast::Ensemble(m) => empirical_quantile(m, p),
            Forecast::Benchmark(_) => unreachable!("not constructible from the command line"),
        }),
        (None, None) => None,
    };
    if kind.thresholded() && q.is_none() {
        return Err(Error::Config {
            key: "threshold".into(),
            message: format!("{kind} needs --threshold or --p"),
        });
    }
    let rule = kind.rule(q);
    println!("y,score,std_err");
    for &y in &args.y {
        match (&forecast, rule.kernel_weight()) {
            (Forecast::Ensemble(members), Some(w)) => {
                let est = if rule.is_scaled() {
                    mc_scaled_kernel_score(members, &w, y)?
                } else {
                    mc_kernel_score(members, &w, y)?
                };
                println!("{y},{},{}", sign * est.value, est.std_err);
            }
            _ => println!("{y},{},", sign * rule.evaluate_forecast(&forecast, y)?),
        }
    }
    Ok(())
}

fn fit(args: &FitArgs, g: &Global) -> Result<()> {
    let family: ModelFamily = args.model.parse()?;
    let mut series = load_station_csv(&args.data)?.series;
    if let Some(cov) = &args.covariate {
        join_covariate(&mut series, &load_covariate_csv(cov)?)?;
    }
    let (series, skipped) = filter_min_years(series, args.min_years);
    for id in skipped {
        eprintln!("warning: station `{id}` has fewer than {} years and was skipped", args.min_years);
    }
    let cfg = OptimizerConfig {
        min_obs: args.min_years,
        ..OptimizerConfig::default()
    };
    let fit = fit_mle(&ModelSpec::new(family), &series, args.shared_shape, &cfg, g.seed.unwrap_or(0))?;
    if !fit.converged {
        eprintln!("warning: optimiser did not converge");
    }
    if fit.std_errs.is_none() {
        eprintln!("warning: standard errors unavailable (Hessian not positive definite)");
    }
    println!("parameter,estimate,std_err");
    for (i, (name, v)) in fit.params.iter().enumerate() {
        let se = fit.std_errs.as_ref().map_or(String::new(), |s| s.values[i].to_string());
        println!("{name},{v},{se}");
    }
    let nll = if g.negate_display { fit.neg_loglik } else { -fit.neg_loglik };
    println!("{},{nll},", if g.negate_display { "neg_loglik" } else { "loglik" });
    Ok(())
}
