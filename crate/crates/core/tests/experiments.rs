use extremescore::experiments::{
    run_lakes_sim, run_paired_scale, run_permutation_trend, run_scale_threshold, run_station_eval,
    synthetic_world, ExperimentConfig, ExperimentKind, ExperimentResult, ScoreKind,
};
use extremescore::inference::ModelFamily;
use extremescore::io::StationSeries;
use extremescore::seeding::derive_seed;
use extremescore::stattests::paired_ttest;

fn paired() -> (ExperimentConfig, ExperimentResult) {
    let cfg = ExperimentConfig::defaults(ExperimentKind::PairedScale, 31);
    let res = run_paired_scale(&cfg).unwrap();
    (cfg, res)
}

fn cell(res: &ExperimentResult, score: &str, k1: f64, k2: f64, stat: &str) -> f64 {
    res.summary_value(score, "0.9", &format!("k1={k1}|k2={k2}"), stat).unwrap()
}

#[test]
fn paired_scale_grid_shape() {
    let (cfg, res) = paired();
    let grid = &cfg.k1_grid;
    assert_eq!(grid, &cfg.k2_grid);
    for score in ["wCRPS", "swCRPS"] {
        // Properness: no cell beats (1, 1) by more than its Monte Carlo error.
        let best = cell(&res, score, 1.0, 1.0, "mean");
        for &a in grid {
            for &b in grid {
                let se = cell(&res, score, a, b, "se").hypot(cell(&res, score, 1.0, 1.0, "se"));
                assert!(cell(&res, score, a, b, "mean") <= best + 3.0 * se, "{score} ({a}, {b})");
            }
        }
    }
    let mut worst: f64 = 0.0;
    for &a in grid {
        for &b in grid {
            let se = cell(&res, "swCRPS", a, b, "se").hypot(cell(&res, "swCRPS", b, a, "se"));
            worst = worst.max((cell(&res, "swCRPS", a, b, "mean") - cell(&res, "swCRPS", b, a, "mean")).abs() / se);
        }
    }
    assert!(worst <= 3.0, "swCRPS asymmetry {worst:.2} SE");

    let at = |k1: f64, k2: f64| cell(&res, "wCRPS", k1, k2, "mean");
    let d1 = (at(1.6, 1.5) - at(1.4, 1.5)).abs();
    let d2 = (at(1.5, 1.6) - at(1.5, 1.4)).abs();
    assert!(d2 > d1, "wCRPS slopes: k1 {d1}, k2 {d2}");
}

#[test]
fn paired_scale_matches_per_station_average() {
    let (cfg, res) = paired();
    for &a in &cfg.k1_grid {
        for &b in &cfg.k2_grid {
            let s1 = res.summary_value("swCRPS", "0.9", &format!("station=1|k={a}"), "mean").unwrap();
            let s2 = res.summary_value("swCRPS", "0.9", &format!("station=2|k={b}"), "mean").unwrap();
            assert!((cell(&res, "swCRPS", a, b, "mean") - 0.5 * (s1 + s2)).abs() <= 1e-12);
        }
    }
}

#[test]
fn weighted_crps_grows_linearly_with_scale() {
    let cfg = ExperimentConfig::defaults(ExperimentKind::ScaleThreshold, 5);
    let res = run_scale_threshold(&cfg).unwrap();
    let ratio = res.summary_value("wCRPS", "0.9", "sigma=8", "mean").unwrap()
        / res.summary_value("wCRPS", "0.9", "sigma=1", "mean").unwrap();
    assert!((6.0..=10.0).contains(&ratio), "{ratio}");
}

#[test]
fn unperturbed_lakes_have_no_differences() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::LakesSim, 8);
    cfg.k = 1.0;
    cfg.n_replicates = 50;
    let res = run_lakes_sim(&cfg).unwrap();
    assert!(!res.records.is_empty());
    assert!(res.records.iter().all(|r| r.value == 0.0));
}

#[test]
fn constant_covariate_permutation_sits_on_the_diagonal() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::PermTrend, 12);
    cfg.world.n_stations = 8;
    cfg.world.lambda_trend = 0.0;
    let mut data = synthetic_world(&cfg.world, 12).unwrap();
    for s in &mut data {
        s.covariate = Some(vec![0.25; s.len()]);
    }
    let res = run_permutation_trend(&data, &cfg).unwrap();
    let frac = res.summary_value("LS", "-inf", "all", "frac_above").unwrap();
    assert_eq!(frac, 0.5);
}

fn no_trend_world(w: u64) -> (ExperimentConfig, Vec<StationSeries>, ExperimentResult) {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::StationEval, 700 + w);
    cfg.world.lambda_trend = 0.0;
    cfg.world.n_stations = 30;
    cfg.scores = vec![ScoreKind::Ls];
    let data = synthetic_world(&cfg.world, derive_seed(700 + w, 0x5EED)).unwrap();
    let res = run_station_eval(&data, &cfg).unwrap();
    (cfg, data, res)
}

const NO_TREND_WORLDS: u64 = 10;

#[test]
fn no_trend_worlds_prefer_gev_over_gumbel() {
    let wins = (0..NO_TREND_WORLDS)
        .filter(|&w| {
            let (_, _, res) = no_trend_world(w);
            let mean = |f: ModelFamily| res.summary_value("LS", "-inf", f.name(), "overall_mean").unwrap();
            mean(ModelFamily::Gev) > mean(ModelFamily::Gumbel)
        })
        .count();
    assert!(wins as f64 >= 0.8 * NO_TREND_WORLDS as f64, "GEV beat Gumbel in {wins}/{NO_TREND_WORLDS}");
}

/// Without a trend, neither trend model should be significantly better than
/// GEV (paired t-test on station mean LS) in at least 80% of worlds.
#[test]
fn no_trend_worlds_show_no_significant_trend_gain() {
    let mut quiet = 0;
    for w in 0..NO_TREND_WORLDS {
        let (cfg, data, res) = no_trend_world(w);
        let station_means = |f: ModelFamily| -> Vec<f64> {
            data.iter()
                .map(|s| {
                    let label = format!("{}|{}", f.name(), s.station_id);
                    res.records.iter().find(|r| r.score == "LS" && r.label == label).unwrap().value
                })
                .collect()
        };
        let gev = station_means(ModelFamily::Gev);
        let significantly_better = |f: ModelFamily| {
            let d: Vec<f64> = station_means(f).iter().zip(&gev).map(|(a, b)| a - b).collect();
            let t = paired_ttest(&d).unwrap();
            t.statistic > 0.0 && t.p_value < cfg.alpha
        };
        quiet += usize::from(
            !significantly_better(ModelFamily::GevMuTrend) && !significantly_better(ModelFamily::PgevLambdaTrend),
        );
    }
    assert!(
        quiet as f64 >= 0.8 * NO_TREND_WORLDS as f64,
        "trend models not significantly better in only {quiet}/{NO_TREND_WORLDS} worlds"
    );
}
