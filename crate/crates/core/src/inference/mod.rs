//! Maximum-likelihood fitting of GEV-type models to annual maxima.
//!
//! Four model families are supported, fitted to one station or to several
//! stations at once. With a shared shape the stations get their own location
//! and scale parameters and a single regional `gamma`, estimated by profiling:
//! for each candidate shape every station is fitted independently, and the
//! summed profile is minimised over the shape.

mod simplex;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::distributions::{GevParams, PgevParams};
use crate::error::{Error, Result};
use crate::io::StationSeries;
use crate::numerics::{empirical_quantile, EULER_GAMMA};
use crate::seeding::{derive_seed, rng_from_seed, SimRng};

pub use simplex::{nelder_mead, SimplexOutcome, SimplexTolerance};

/// Probability level of the PGEV reference threshold `u`.
pub const PGEV_LEVEL_PROB: f64 = 0.75;

/// Shapes are kept inside this bound while optimising.
pub const SHAPE_BOUND: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelFamily {
    /// GEV with `gamma = 0`.
    Gumbel,
    Gev,
    /// GEV with `mu(t) = mu0 + mu1 t`.
    GevMuTrend,
    /// PGEV with `ln lambda(t) = lambda0 + lambda1 t`.
    PgevLambdaTrend,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::Gumbel,
        ModelFamily::Gev,
        ModelFamily::GevMuTrend,
        ModelFamily::PgevLambdaTrend,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Gumbel => "Gumbel",
            ModelFamily::Gev => "GEV",
            ModelFamily::GevMuTrend => "GEV_mu",
            ModelFamily::PgevLambdaTrend => "PGEV_lambda",
        }
    }

    pub fn has_shape(self) -> bool {
        self != ModelFamily::Gumbel
    }

    pub fn has_trend(self) -> bool {
        matches!(self, ModelFamily::GevMuTrend | ModelFamily::PgevLambdaTrend)
    }

    /// Per-station parameter names, excluding the shape.
    pub fn local_names(self) -> &'static [&'static str] {
        match self {
            ModelFamily::Gumbel | ModelFamily::Gev => &["mu", "sigma"],
            ModelFamily::GevMuTrend => &["mu0", "mu1", "sigma"],
            ModelFamily::PgevLambdaTrend => &["lambda0", "lambda1", "sigma_u"],
        }
    }

    /// Name of the trend coefficient, if any.
    pub fn trend_name(self) -> Option<&'static str> {
        match self {
            ModelFamily::GevMuTrend => Some("mu1"),
            ModelFamily::PgevLambdaTrend => Some("lambda1"),
            _ => None,
        }
    }

    fn scale_index(self) -> usize {
        if self.has_trend() {
            2
        } else {
            1
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        ModelFamily::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::config("model", format!("unknown model `{t}` (Gumbel, GEV, GEV_mu, PGEV_lambda)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub covariate_required: bool,
}

impl ModelSpec {
    pub fn new(family: ModelFamily) -> Self {
        ModelSpec {
            family,
            covariate_required: family.has_trend(),
        }
    }
}

/// Parameter values paired with their names.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedParams {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl NamedParams {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} names for {} values",
                names.len(),
                values.len()
            )));
        }
        Ok(NamedParams { names, values })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub family: ModelFamily,
    pub shared_shape: bool,
    pub params: NamedParams,
    /// Present only when the numerical Hessian is positive definite.
    pub std_errs: Option<NamedParams>,
    pub neg_loglik: f64,
    pub converged: bool,
    pub n_restarts_used: usize,
    /// PGEV reference level per station; empty for the other families.
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Jittered restarts after the first simplex run.
    pub n_restarts: usize,
    /// Restart jitter, as a fraction of each coordinate's natural scale.
    pub jitter: f64,
    pub tolerance: SimplexTolerance,
    /// Fewer observations than this in any series is an error.
    pub min_obs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            n_restarts: 5,
            jitter: 0.1,
            tolerance: SimplexTolerance::default(),
            min_obs: 20,
        }
    }
}

/// Where each station's parameters sit in the full parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    family: ModelFamily,
    n_stations: usize,
    shared: bool,
}

impl Layout {
    fn new(family: ModelFamily, n_stations: usize, shared_shape: bool) -> Self {
        Layout {
            family,
            n_stations,
            shared: shared_shape || n_stations == 1,
        }
    }

    fn n_local(&self) -> usize {
        self.family.local_names().len()
    }

    /// Block width of one station in the unshared layout.
    fn block(&self) -> usize {
        self.n_local() + usize::from(self.family.has_shape() && !self.shared)
    }

    fn len(&self) -> usize {
        let shared_shape = usize::from(self.family.has_shape() && self.shared);
        self.n_stations * self.block() + shared_shape
    }

    /// Indices of station `s`'s local parameters followed by its shape, if any.
    fn indices(&self, s: usize) -> Vec<usize> {
        let start = s * self.block();
        let mut idx: Vec<usize> = (start..start + self.n_local()).collect();
        if self.family.has_shape() {
            idx.push(if self.shared { self.len() - 1 } else { start + self.n_local() });
        }
        idx
    }

    fn names(&self, ids: &[&str]) -> Vec<String> {
        let mut names = vec![String::new(); self.len()];
        let single = self.n_stations == 1;
        for (s, id) in ids.iter().enumerate() {
            let idx = self.indices(s);
            let locals = self.family.local_names().iter().copied();
            let shape = self.family.has_shape().then_some("gamma");
            for (i, name) in idx.iter().zip(locals.chain(shape)) {
                names[*i] = if single || (name == "gamma" && self.shared) {
                    name.to_string()
                } else {
                    format!("{name}[{id}]")
                };
            }
        }
        names
    }
}

/// One station's data as seen by the likelihood.
#[derive(Debug, Clone, Copy)]
struct StationView<'a> {
    values: &'a [f64],
    covariate: &'a [f64],
    level: f64,
}

/// The PGEV reference level of a series: its empirical 75% quantile.
pub fn pgev_level(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    empirical_quantile(&sorted, PGEV_LEVEL_PROB)
}

fn views<'a>(spec: &ModelSpec, data: &'a [StationSeries]) -> Result<Vec<StationView<'a>>> {
    if data.is_empty() {
        return Err(Error::ShapeMismatch("no station series supplied".into()));
    }
    data.iter()
        .map(|s| {
            let covariate: &[f64] = match (&s.covariate, spec.covariate_required) {
                (Some(c), _) => c,
                (None, false) => &[],
                (None, true) => {
                    return Err(Error::ShapeMismatch(format!(
                        "model {} needs a covariate but station `{}` has none",
                        spec.family, s.station_id
                    )))
                }
            };
            let level = if spec.family == ModelFamily::PgevLambdaTrend {
                pgev_level(&s.values)
            } else {
                f64::NAN
            };
            Ok(StationView {
                values: &s.values,
                covariate,
                level,
            })
        })
        .collect()
}

/// GEV law of observation `j` given natural local parameters and the shape.
#[inline]
fn law_at(family: ModelFamily, theta: &[f64], gamma: f64, view: &StationView, j: usize) -> GevParams {
    match family {
        ModelFamily::Gumbel => GevParams {
            mu: theta[0],
            sigma: theta[1],
            gamma: 0.0,
        },
        ModelFamily::Gev => GevParams {
            mu: theta[0],
            sigma: theta[1],
            gamma,
        },
        ModelFamily::GevMuTrend => GevParams {
            mu: theta[0] + theta[1] * view.covariate[j],
            sigma: theta[2],
            gamma,
        },
        ModelFamily::PgevLambdaTrend => PgevParams {
            lambda: (theta[0] + theta[1] * view.covariate[j]).exp(),
            sigma_u: theta[2],
            gamma,
            u: view.level,
        }
        .to_gev(),
    }
}

/// Negative log-likelihood of one station; `+∞` outside the support or domain.
fn station_nll(family: ModelFamily, theta: &[f64], gamma: f64, view: &StationView) -> f64 {
    let scale = theta[family.scale_index()];
    if !(scale > 0.0) || !scale.is_finite() || theta.iter().any(|v| !v.is_finite()) || !gamma.is_finite() {
        return f64::INFINITY;
    }
    let mut total = 0.0;
    for (j, &y) in view.values.iter().enumerate() {
        let law = law_at(family, theta, gamma, view, j);
        if !(law.sigma > 0.0) || !law.sigma.is_finite() || !law.mu.is_finite() {
            return f64::INFINITY;
        }
        let lp = law.logpdf(y);
        if !lp.is_finite() {
            return f64::INFINITY;
        }
        total -= lp;
    }
    total
}

fn split(layout: &Layout, params: &[f64], s: usize) -> (Vec<f64>, f64) {
    let idx = layout.indices(s);
    let theta: Vec<f64> = idx[..layout.n_local()].iter().map(|&i| params[i]).collect();
    let gamma = if layout.family.has_shape() { params[idx[layout.n_local()]] } else { 0.0 };
    (theta, gamma)
}

fn total_nll(layout: &Layout, params: &[f64], views: &[StationView]) -> f64 {
    (0..views.len())
        .map(|s| {
            let (theta, gamma) = split(layout, params, s);
            station_nll(layout.family, &theta, gamma, &views[s])
        })
        .sum()
}

/// Expected parameter names for `spec` on `data`.
pub fn param_names(spec: &ModelSpec, data: &[StationSeries], shared_shape: bool) -> Vec<String> {
    let ids: Vec<&str> = data.iter().map(|s| s.station_id.as_str()).collect();
    Layout::new(spec.family, data.len(), shared_shape).names(&ids)
}

/// Summed negative log-likelihood over all stations; `+∞` when an observation
/// falls outside the implied support.
pub fn model_negloglik(
    spec: &ModelSpec,
    params: &NamedParams,
    data: &[StationSeries],
    shared_shape: bool,
) -> Result<f64> {
    let views = views(spec, data)?;
    let expected = param_names(spec, data, shared_shape);
    if params.names != expected {
        return Err(Error::ShapeMismatch(format!(
            "parameters {:?} do not match the model layout {:?}",
            params.names, expected
        )));
    }
    let layout = Layout::new(spec.family, data.len(), shared_shape);
    Ok(total_nll(&layout, &params.values, &views))
}

// ---- optimisation ----

/// Natural local parameters to optimiser coordinates (log scale).
fn to_z(family: ModelFamily, theta: &[f64]) -> Vec<f64> {
    let mut z = theta.to_vec();
    z[family.scale_index()] = theta[family.scale_index()].ln();
    z
}

fn from_z(family: ModelFamily, z: &[f64]) -> Vec<f64> {
    let mut theta = z.to_vec();
    theta[family.scale_index()] = z[family.scale_index()].exp();
    theta
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Gumbel moment estimates `(mu, sigma)`.
fn moment_start(values: &[f64]) -> (f64, f64) {
    let (mean, sd) = mean_sd(values);
    let sigma = 6f64.sqrt() * sd / std::f64::consts::PI;
    (mean - EULER_GAMMA * sigma, sigma)
}

fn covariate_range(view: &StationView) -> f64 {
    let (lo, hi) = view
        .covariate
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    if hi > lo {
        hi - lo
    } else {
        1.0
    }
}

/// Moment-based natural local parameters for shape `gamma`.
fn local_start(family: ModelFamily, view: &StationView, gamma: f64) -> Vec<f64> {
    let (mu, sigma) = moment_start(view.values);
    match family {
        ModelFamily::Gumbel | ModelFamily::Gev => vec![mu, sigma],
        ModelFamily::GevMuTrend => vec![mu, 0.0, sigma],
        ModelFamily::PgevLambdaTrend => {
            let g = GevParams { mu, sigma, gamma };
            let z = g.neg_log_cdf(view.level);
            let sigma_u = sigma + gamma * (view.level - mu);
            if z > 0.0 && z.is_finite() && sigma_u > 0.0 {
                vec![z.ln(), 0.0, sigma_u]
            } else {
                vec![0.0, 0.0, sigma]
            }
        }
    }
}

/// Inflate the scale until every observation is inside the support.
fn make_feasible(family: ModelFamily, mut theta: Vec<f64>, gamma: f64, view: &StationView) -> Option<Vec<f64>> {
    for _ in 0..60 {
        if station_nll(family, &theta, gamma, view).is_finite() {
            return Some(theta);
        }
        theta[family.scale_index()] *= 1.5;
    }
    None
}

/// Initial simplex steps in optimiser coordinates (locals only).
fn local_steps(family: ModelFamily, view: &StationView) -> Vec<f64> {
    let (_, sigma) = moment_start(view.values);
    match family {
        ModelFamily::Gumbel | ModelFamily::Gev => vec![0.2 * sigma, 0.2],
        ModelFamily::GevMuTrend => vec![0.2 * sigma, 0.2 * sigma / covariate_range(view), 0.2],
        ModelFamily::PgevLambdaTrend => vec![0.2, 0.2 / covariate_range(view), 0.2],
    }
}

const SHAPE_STEP: f64 = 0.1;

fn shape_ok(gamma: f64) -> bool {
    gamma.abs() < SHAPE_BOUND
}

fn check_data(spec: &ModelSpec, data: &[StationSeries], cfg: &OptimizerConfig) -> Result<()> {
    for s in data {
        if s.len() < cfg.min_obs {
            return Err(Error::InsufficientData {
                station: s.station_id.clone(),
                reason: format!("{} observations, need at least {}", s.len(), cfg.min_obs),
            });
        }
        let (_, sd) = mean_sd(&s.values);
        if !(sd > 0.0) {
            return Err(Error::InsufficientData {
                station: s.station_id.clone(),
                reason: "constant series".into(),
            });
        }
        if spec.covariate_required && s.covariate.is_none() {
            return Err(Error::ShapeMismatch(format!(
                "model {} needs a covariate but station `{}` has none",
                spec.family, s.station_id
            )));
        }
    }
    Ok(())
}

struct StationFit {
    theta: Vec<f64>,
    gamma: f64,
    nll: f64,
    converged: bool,
    restarts: usize,
}

/// Full fit of one station, shape included, with jittered restarts.
fn fit_station(family: ModelFamily, view: &StationView, cfg: &OptimizerConfig, rng: &mut SimRng) -> Result<StationFit> {
    let n_local = family.local_names().len();
    let mut start = None;
    for gamma in [0.1, 0.0] {
        let gamma = if family.has_shape() { gamma } else { 0.0 };
        if let Some(theta) = make_feasible(family, local_start(family, view, gamma), gamma, view) {
            start = Some((theta, gamma));
            break;
        }
    }
    let (theta0, gamma0) = start.ok_or_else(|| Error::DegenerateSample("no feasible starting point".into()))?;

    let mut z0 = to_z(family, &theta0);
    let mut steps = local_steps(family, view);
    if family.has_shape() {
        z0.push(gamma0);
        steps.push(SHAPE_STEP);
    }
    let objective = |z: &[f64]| {
        let gamma = if family.has_shape() { z[n_local] } else { 0.0 };
        if !shape_ok(gamma) {
            return f64::INFINITY;
        }
        station_nll(family, &from_z(family, &z[..n_local]), gamma, view)
    };

    let mut best = nelder_mead(objective, &z0, &steps, &cfg.tolerance);
    let mut restarts = 0;
    for _ in 0..cfg.n_restarts {
        let mut jittered = None;
        for _ in 0..20 {
            let cand: Vec<f64> = best
                .x
                .iter()
                .zip(&steps)
                .map(|(x, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    x + cfg.jitter * (s / 0.2) * z
                })
                .collect();
            if objective(&cand).is_finite() {
                jittered = Some(cand);
                break;
            }
        }
        let start = jittered.unwrap_or_else(|| best.x.clone());
        let run = nelder_mead(objective, &start, &steps, &cfg.tolerance);
        restarts += 1;
        if run.f < best.f || (run.f == best.f && run.converged && !best.converged) {
            best = run;
        }
    }
    let gamma = if family.has_shape() { best.x[n_local] } else { 0.0 };
    Ok(StationFit {
        theta: from_z(family, &best.x[..n_local]),
        gamma,
        nll: best.f,
        converged: best.converged,
        restarts,
    })
}

/// Locals-only fit of one station at a fixed shape, warm-started from `warm`.
fn fit_station_fixed_shape(
    family: ModelFamily,
    view: &StationView,
    gamma: f64,
    warm: &[f64],
    cfg: &OptimizerConfig,
) -> (Vec<f64>, f64, bool) {
    let start = make_feasible(family, warm.to_vec(), gamma, view)
        .or_else(|| make_feasible(family, local_start(family, view, gamma), gamma, view));
    let Some(theta0) = start else {
        return (warm.to_vec(), f64::INFINITY, false);
    };
    let steps = local_steps(family, view);
    let objective = |z: &[f64]| station_nll(family, &from_z(family, z), gamma, view);
    let first = nelder_mead(objective, &to_z(family, &theta0), &steps, &cfg.tolerance);
    // A second run from the optimum guards against a collapsed simplex.
    let second = nelder_mead(objective, &first.x, &steps, &cfg.tolerance);
    let best = if second.f <= first.f { second } else { first };
    (from_z(family, &best.x), best.f, best.converged)
}

struct ProfilePoint {
    gamma: f64,
    nll: f64,
    thetas: Vec<Vec<f64>>,
    converged: bool,
}

fn profile_at(
    family: ModelFamily,
    views: &[StationView],
    gamma: f64,
    warm: &[Vec<f64>],
    cfg: &OptimizerConfig,
) -> ProfilePoint {
    let fits: Vec<(Vec<f64>, f64, bool)> = views
        .par_iter()
        .zip(warm.par_iter())
        .map(|(v, w)| fit_station_fixed_shape(family, v, gamma, w, cfg))
        .collect();
    ProfilePoint {
        gamma,
        nll: fits.iter().map(|f| f.1).sum(),
        converged: fits.iter().all(|f| f.2),
        thetas: fits.into_iter().map(|f| f.0).collect(),
    }
}

/// Shared-shape fit by profiling the shape: a coarse grid, then golden-section
/// refinement around the best grid point.
fn fit_profile(family: ModelFamily, views: &[StationView], cfg: &OptimizerConfig) -> ProfilePoint {
    const GRID_STEP: f64 = 0.1;
    const GRID_HALF: i32 = 8;
    const GAMMA_XTOL: f64 = 1e-5;

    let mut warm: Vec<Vec<f64>> = views.iter().map(|v| local_start(family, v, 0.0)).collect();
    let mut grid: Vec<ProfilePoint> = Vec::new();
    // Sweep outwards from zero so warm starts move gradually.
    let mut order: Vec<i32> = (0..=GRID_HALF).collect();
    order.extend((1..=GRID_HALF).map(|k| -k));
    for k in order {
        if k == -1 {
            warm = grid[0].thetas.clone();
        }
        let p = profile_at(family, views, f64::from(k) * GRID_STEP, &warm, cfg);
        warm = p.thetas.clone();
        grid.push(p);
    }

    let best_idx = (0..grid.len())
        .min_by(|&a, &b| grid[a].nll.total_cmp(&grid[b].nll).then(a.cmp(&b)))
        .unwrap_or(0);
    let mut best = grid.swap_remove(best_idx);
    let lo = (best.gamma - GRID_STEP).max(-SHAPE_BOUND + 1e-3);
    let hi = (best.gamma + GRID_STEP).min(SHAPE_BOUND - 1e-3);

    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let warm = best.thetas.clone();
    let mut c = profile_at(family, views, b - phi * (b - a), &warm, cfg);
    let mut d = profile_at(family, views, a + phi * (b - a), &warm, cfg);
    while b - a > GAMMA_XTOL {
        if c.nll <= d.nll {
            b = d.gamma;
            let w = c.thetas.clone();
            d = c;
            c = profile_at(family, views, b - phi * (b - a), &w, cfg);
        } else {
            a = c.gamma;
            let w = d.thetas.clone();
            c = d;
            d = profile_at(family, views, a + phi * (b - a), &w, cfg);
        }
        for cand in [&c, &d] {
            if cand.nll < best.nll {
                best = ProfilePoint {
                    gamma: cand.gamma,
                    nll: cand.nll,
                    thetas: cand.thetas.clone(),
                    converged: cand.converged,
                };
            }
        }
    }
    best
}

/// Maximum-likelihood fit by downhill simplex.
///
/// Non-convergence is reported in [`FitResult::converged`], not as an error.
/// Standard errors are attached when the Hessian at the optimum is positive definite.
pub fn fit_mle(
    spec: &ModelSpec,
    data: &[StationSeries],
    shared_shape: bool,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<FitResult> {
    check_data(spec, data, cfg)?;
    let views = views(spec, data)?;
    let family = spec.family;
    let layout = Layout::new(family, data.len(), shared_shape);
    let mut values = vec![0.0; layout.len()];
    let (converged, n_restarts_used);

    if layout.shared && family.has_shape() && data.len() > 1 {
        let best = fit_profile(family, &views, cfg);
        for (s, theta) in best.thetas.iter().enumerate() {
            let idx = layout.indices(s);
            for (i, v) in idx.iter().zip(theta) {
                values[*i] = *v;
            }
        }
        *values.last_mut().expect("shared shape slot") = best.gamma;
        converged = best.converged && best.nll.is_finite();
        n_restarts_used = 0;
    } else {
        let fits: Vec<StationFit> = views
            .par_iter()
            .enumerate()
            .map(|(s, v)| fit_station(family, v, cfg, &mut rng_from_seed(derive_seed(seed, s as u64))))
            .collect::<Result<_>>()?;
        for (s, f) in fits.iter().enumerate() {
            let idx = layout.indices(s);
            for (i, v) in idx.iter().zip(f.theta.iter().chain(std::iter::once(&f.gamma))) {
                values[*i] = *v;
            }
        }
        converged = fits.iter().all(|f| f.converged && f.nll.is_finite());
        n_restarts_used = fits.iter().map(|f| f.restarts).max().unwrap_or(0);
    }

    let ids: Vec<&str> = data.iter().map(|s| s.station_id.as_str()).collect();
    let levels = if family == ModelFamily::PgevLambdaTrend {
        views.iter().map(|v| v.level).collect()
    } else {
        Vec::new()
    };
    let mut fit = FitResult {
        family,
        shared_shape: layout.shared,
        params: NamedParams {
            names: layout.names(&ids),
            values: values.clone(),
        },
        std_errs: None,
        neg_loglik: total_nll(&layout, &values, &views),
        converged,
        n_restarts_used,
        levels,
    };
    fit.std_errs = standard_errors(spec, &fit, data).ok();
    Ok(fit)
}

// ---- standard errors ----

/// Central-difference gradient and Hessian. A tiny pilot step estimates each
/// diagonal curvature; the final step is then 1% of the implied standard
/// error, which keeps it inside the support even when an endpoint sits just
/// beyond the data.
fn numerical_derivatives(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let pilot: Vec<f64> = x.iter().map(|v| 1e-6 * v.abs().max(1.0)).collect();
    let (_, h0) = differences(&f, x, &pilot)?;
    let steps: Vec<f64> = h0
        .iter()
        .zip(&pilot)
        .enumerate()
        .map(|(i, (row, &p))| if row[i] > 0.0 { 1e-2 / row[i].sqrt() } else { p })
        .collect();
    differences(&f, x, &steps)
}

fn differences(f: &impl Fn(&[f64]) -> f64, x: &[f64], h: &[f64]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = x.len();
    let at = |shifts: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, s) in shifts {
            p[i] += s;
        }
        f(&p)
    };
    let f0 = f(x);
    let mut grad = vec![0.0; k];
    let mut hess = vec![vec![0.0; k]; k];
    for i in 0..k {
        let fp = at(&[(i, h[i])]);
        let fm = at(&[(i, -h[i])]);
        grad[i] = (fp - fm) / (2.0 * h[i]);
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = at(&[(i, h[i]), (j, h[j])]);
            let fpm = at(&[(i, h[i]), (j, -h[j])]);
            let fmp = at(&[(i, -h[i]), (j, h[j])]);
            let fmm = at(&[(i, -h[i]), (j, -h[j])]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    let finite = f0.is_finite() && grad.iter().chain(hess.iter().flatten()).all(|v| v.is_finite());
    finite.then_some((grad, hess))
}

/// Largest Newton decrement `gᵀH⁻¹g` accepted as "at the optimum".
const OPTIMUM_DECREMENT: f64 = 1e-2;

/// Square roots of the diagonal of the inverse numerical Hessian of the
/// negative log-likelihood at the fitted parameters.
///
/// The Hessian is assembled station by station: stations only interact
/// through a shared shape.
pub fn standard_errors(spec: &ModelSpec, fit: &FitResult, data: &[StationSeries]) -> Result<NamedParams> {
    if !fit.converged {
        return Err(Error::Precondition("standard errors need a converged fit".into()));
    }
    let views = views(spec, data)?;
    let layout = Layout::new(spec.family, data.len(), fit.shared_shape);
    if fit.params.names != layout.names(&data.iter().map(|s| s.station_id.as_str()).collect::<Vec<_>>()) {
        return Err(Error::ShapeMismatch("fit does not match the supplied data".into()));
    }
    let dim = layout.len();
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    let mut grad = DVector::<f64>::zeros(dim);
    let n_local = layout.n_local();
    for (s, view) in views.iter().enumerate() {
        let idx = layout.indices(s);
        let local: Vec<f64> = idx.iter().map(|&i| fit.params.values[i]).collect();
        let f = |p: &[f64]| {
            let gamma = if spec.family.has_shape() { p[n_local] } else { 0.0 };
            station_nll(spec.family, &p[..n_local], gamma, view)
        };
        let (g, h) = numerical_derivatives(f, &local).ok_or(Error::SingularHessian)?;
        for (a, &ia) in idx.iter().enumerate() {
            grad[ia] += g[a];
            for (b, &ib) in idx.iter().enumerate() {
                hess[(ia, ib)] += h[a][b];
            }
        }
    }
    let chol = hess.cholesky().ok_or(Error::SingularHessian)?;
    let decrement = grad.dot(&chol.solve(&grad));
    if !(decrement <= OPTIMUM_DECREMENT) {
        return Err(Error::Precondition(format!(
            "parameters are not at an optimum (Newton decrement {decrement:.3e})"
        )));
    }
    let inv = chol.inverse();
    let ses: Vec<f64> = (0..dim).map(|i| inv[(i, i)].sqrt()).collect();
    if ses.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularHessian);
    }
    NamedParams::new(fit.params.names.clone(), ses)
}

/// Wald test of a single coefficient: `z = estimate / SE` with a two-sided normal p-value.
pub fn trend_significance(fit: &FitResult, param: &str) -> Result<(f64, f64)> {
    let est = fit
        .params
        .get(param)
        .ok_or_else(|| Error::domain(format!("fit has no parameter `{param}`")))?;
    let se = fit
        .std_errs
        .as_ref()
        .and_then(|s| s.get(param))
        .ok_or_else(|| Error::MissingStdErr(param.to_string()))?;
    let z = est / se;
    let normal = Normal::standard();
    let p = (2.0 * normal.sf(z.abs())).min(1.0);
    Ok((z, p))
}

/// The fitted GEV law of every observation, station by station.
pub fn fitted_laws(spec: &ModelSpec, fit: &FitResult, data: &[StationSeries]) -> Result<Vec<Vec<GevParams>>> {
    let views = views(spec, data)?;
    let layout = Layout::new(spec.family, data.len(), fit.shared_shape);
    if fit.params.len() != layout.len() {
        return Err(Error::ShapeMismatch("fit does not match the supplied data".into()));
    }
    Ok(views
        .iter()
        .enumerate()
        .map(|(s, v)| {
            let (theta, gamma) = split(&layout, &fit.params.values, s);
            (0..v.values.len()).map(|j| law_at(spec.family, &theta, gamma, v, j)).collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::open_uniform;

    fn simulate(id: &str, p: GevParams, n: usize, seed: u64) -> StationSeries {
        let mut rng = rng_from_seed(seed);
        let values = (0..n).map(|_| p.quantile_unchecked(open_uniform(&mut rng))).collect();
        StationSeries::new(id, (0..n as i64).collect(), values, None).unwrap()
    }

    fn named(names: &[&str], values: &[f64]) -> NamedParams {
        NamedParams::new(names.iter().map(|s| s.to_string()).collect(), values.to_vec()).unwrap()
    }

    const ST_CLAIR: GevParams = GevParams {
        mu: 175.108,
        sigma: 0.349,
        gamma: -0.285,
    };

    #[test]
    fn gumbel_nests_in_gev() {
        let data = [simulate("A", GevParams::gumbel(1.0, 2.0).unwrap(), 50, 3)];
        let g = model_negloglik(&ModelSpec::new(ModelFamily::Gumbel), &named(&["mu", "sigma"], &[1.1, 1.9]), &data, false)
            .unwrap();
        let e = model_negloglik(
            &ModelSpec::new(ModelFamily::Gev),
            &named(&["mu", "sigma", "gamma"], &[1.1, 1.9, 0.0]),
            &data,
            false,
        )
        .unwrap();
        assert_eq!(g, e);
    }

    #[test]
    fn flat_pgev_matches_gev() {
        let mut s = simulate("A", ST_CLAIR, 80, 5);
        s.covariate = Some((0..80).map(|i| i as f64 / 80.0).collect());
        let data = [s];
        let u = pgev_level(&data[0].values);
        let gev = GevParams::new(175.1, 0.36, -0.25).unwrap();
        let lambda = gev.neg_log_cdf(u);
        let sigma_u = gev.sigma + gev.gamma * (u - gev.mu);
        let p = PgevParams::new(lambda, sigma_u, gev.gamma, u).unwrap();
        let back = p.to_gev();
        let a = model_negloglik(
            &ModelSpec::new(ModelFamily::PgevLambdaTrend),
            &named(&["lambda0", "lambda1", "sigma_u", "gamma"], &[lambda.ln(), 0.0, sigma_u, gev.gamma]),
            &data,
            false,
        )
        .unwrap();
        let b = model_negloglik(
            &ModelSpec::new(ModelFamily::Gev),
            &named(&["mu", "sigma", "gamma"], &[back.mu, back.sigma, back.gamma]),
            &data,
            false,
        )
        .unwrap();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        assert!((back.mu - gev.mu).abs() < 1e-10 && (back.sigma - gev.sigma).abs() < 1e-12);
    }

    #[test]
    fn support_violation_is_infinite() {
        let data = [simulate("A", ST_CLAIR, 50, 1)];
        let v = model_negloglik(
            &ModelSpec::new(ModelFamily::Gev),
            &named(&["mu", "sigma", "gamma"], &[170.0, 0.3, -0.5]),
            &data,
            false,
        )
        .unwrap();
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn missing_covariate_is_shape_error() {
        let data = [simulate("A", ST_CLAIR, 50, 1)];
        let r = model_negloglik(
            &ModelSpec::new(ModelFamily::GevMuTrend),
            &named(&["mu0", "mu1", "sigma", "gamma"], &[175.0, 0.0, 0.3, -0.2]),
            &data,
            false,
        );
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn truth_beats_perturbations() {
        let data = [simulate("A", ST_CLAIR, 10_000, 11)];
        let spec = ModelSpec::new(ModelFamily::Gev);
        let names = ["mu", "sigma", "gamma"];
        let at_truth = model_negloglik(&spec, &named(&names, &[175.108, 0.349, -0.285]), &data, false).unwrap();
        let mut rng = rng_from_seed(2);
        for _ in 0..20 {
            let mut d = [0.0; 3];
            for v in &mut d {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = 0.05 * z;
            }
            let p = [175.108 + 0.349 * d[0], 0.349 * (1.0 + d[1]), -0.285 + d[2]];
            let v = model_negloglik(&spec, &named(&names, &p), &data, false).unwrap();
            assert!(v > at_truth);
        }
    }

    #[test]
    fn gev_fit_recovers_and_reports_ses() {
        let data = [simulate("A", ST_CLAIR, 103, 21)];
        let fit = fit_mle(&ModelSpec::new(ModelFamily::Gev), &data, false, &OptimizerConfig::default(), 9).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.n_restarts_used, 5);
        let se = fit.std_errs.as_ref().unwrap();
        for (name, truth, table) in [("mu", 175.108, 0.038), ("sigma", 0.349, 0.027), ("gamma", -0.285, 0.065)] {
            let est = fit.params.get(name).unwrap();
            let s = se.get(name).unwrap();
            assert!((est - truth).abs() < 4.0 * s, "{name}: {est} vs {truth}");
            assert!(s > table / 2.0 && s < table * 2.0, "{name} se {s}");
        }
        let again = fit_mle(&ModelSpec::new(ModelFamily::Gev), &data, false, &OptimizerConfig::default(), 9).unwrap();
        assert_eq!(fit, again);
    }

    #[test]
    fn gumbel_fit_has_no_shape() {
        let data = [simulate("A", GevParams::gumbel(10.0, 2.0).unwrap(), 400, 8)];
        let fit = fit_mle(&ModelSpec::new(ModelFamily::Gumbel), &data, false, &OptimizerConfig::default(), 1).unwrap();
        assert_eq!(fit.params.names, vec!["mu", "sigma"]);
        let se = fit.std_errs.unwrap();
        assert!((fit.params.get("mu").unwrap() - 10.0).abs() < 3.0 * se.get("mu").unwrap());
        assert!((fit.params.get("sigma").unwrap() - 2.0).abs() < 3.0 * se.get("sigma").unwrap());
    }

    #[test]
    fn location_trend_is_recovered() {
        let n = 200;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 * 4.0 - 2.0).collect();
        let mut rng = rng_from_seed(4);
        let values: Vec<f64> = t
            .iter()
            .map(|&ti| GevParams::new(10.0 + 0.5 * ti, 1.0, 0.1).unwrap().quantile_unchecked(open_uniform(&mut rng)))
            .collect();
        let data = [StationSeries::new("A", (0..n as i64).collect(), values, Some(t)).unwrap()];
        let fit = fit_mle(&ModelSpec::new(ModelFamily::GevMuTrend), &data, false, &OptimizerConfig::default(), 2).unwrap();
        let est = fit.params.get("mu1").unwrap();
        let se = fit.std_errs.as_ref().unwrap().get("mu1").unwrap();
        assert!((est - 0.5).abs() < 3.0 * se, "{est} ± {se}");
        let (z, p) = trend_significance(&fit, "mu1").unwrap();
        assert!(z > 0.0 && p < 0.05);
    }

    #[test]
    fn se_rate_is_root_n() {
        let spec = ModelSpec::new(ModelFamily::Gev);
        let cfg = OptimizerConfig {
            n_restarts: 1,
            ..Default::default()
        };
        let se_at = |n: usize| {
            let fit = fit_mle(&spec, &[simulate("A", ST_CLAIR, n, 100 + n as u64)], false, &cfg, 1).unwrap();
            fit.std_errs.unwrap().values
        };
        let (small, mid, large) = (se_at(1_000), se_at(10_000), se_at(100_000));
        for i in 0..3 {
            for (a, b) in [(small[i], mid[i]), (mid[i], large[i])] {
                let ratio = a / b;
                assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.2, "param {i}: ratio {ratio}");
            }
        }
    }

    #[test]
    fn off_optimum_is_rejected() {
        let data = [simulate("A", ST_CLAIR, 103, 21)];
        let spec = ModelSpec::new(ModelFamily::Gev);
        let mut fit = fit_mle(&spec, &data, false, &OptimizerConfig::default(), 9).unwrap();
        fit.params.values[0] += 0.05;
        assert!(matches!(standard_errors(&spec, &fit, &data), Err(Error::Precondition(_))));
        fit.converged = false;
        assert!(matches!(standard_errors(&spec, &fit, &data), Err(Error::Precondition(_))));
    }

    #[test]
    fn shared_shape_profile_fit() {
        let data: Vec<StationSeries> = (0..6)
            .map(|s| {
                let p = GevParams::new(10.0 + s as f64, 1.0 + 0.2 * s as f64, 0.15).unwrap();
                simulate(&format!("S{s}"), p, 80, 50 + s)
            })
            .collect();
        let spec = ModelSpec::new(ModelFamily::Gev);
        let fit = fit_mle(&spec, &data, true, &OptimizerConfig::default(), 3).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.params.len(), 13);
        assert_eq!(fit.params.names[0], "mu[S0]");
        assert_eq!(fit.params.names[12], "gamma");
        let g = fit.params.get("gamma").unwrap();
        let se = fit.std_errs.as_ref().unwrap().get("gamma").unwrap();
        assert!((g - 0.15).abs() < 3.0 * se, "{g} ± {se}");
        // The profile optimum is also a joint optimum: no single station refit improves it.
        for s in 0..6 {
            let single = fit_mle(&spec, &data[s..=s], false, &OptimizerConfig::default(), 1).unwrap();
            let shared_part = {
                let p = named(
                    &["mu", "sigma", "gamma"],
                    &[fit.params.values[2 * s], fit.params.values[2 * s + 1], g],
                );
                model_negloglik(&spec, &p, &data[s..=s], false).unwrap()
            };
            assert!(single.neg_loglik <= shared_part + 1e-9);
        }
    }

    #[test]
    fn stationary_pgev_reaches_gev_likelihood() {
        let mut s = simulate("A", ST_CLAIR, 120, 77);
        s.covariate = Some(vec![0.0; 120]);
        let data = [s];
        let cfg = OptimizerConfig::default();
        let gev = fit_mle(&ModelSpec::new(ModelFamily::Gev), &data, false, &cfg, 1).unwrap();
        let pgev = fit_mle(&ModelSpec::new(ModelFamily::PgevLambdaTrend), &data, false, &cfg, 1).unwrap();
        assert!((gev.neg_loglik - pgev.neg_loglik).abs() < 1e-6, "{} vs {}", gev.neg_loglik, pgev.neg_loglik);
    }

    #[test]
    fn significance_edge_cases() {
        let mut fit = FitResult {
            family: ModelFamily::PgevLambdaTrend,
            shared_shape: true,
            params: named(&["lambda1"], &[0.0]),
            std_errs: Some(named(&["lambda1"], &[0.3])),
            neg_loglik: 0.0,
            converged: true,
            n_restarts_used: 0,
            levels: vec![],
        };
        assert_eq!(trend_significance(&fit, "lambda1").unwrap(), (0.0, 1.0));
        fit.params.values[0] = 1.959_963_985 * 0.3;
        let (_, p) = trend_significance(&fit, "lambda1").unwrap();
        assert!((p - 0.05).abs() < 1e-8);
        fit.std_errs = None;
        assert!(matches!(trend_significance(&fit, "lambda1"), Err(Error::MissingStdErr(_))));
    }

    #[test]
    fn short_or_constant_series_rejected() {
        let spec = ModelSpec::new(ModelFamily::Gev);
        let short = [simulate("A", ST_CLAIR, 10, 1)];
        assert!(matches!(
            fit_mle(&spec, &short, false, &OptimizerConfig::default(), 1),
            Err(Error::InsufficientData { .. })
        ));
        let flat = [StationSeries::new("B", (0..30).collect(), vec![2.0; 30], None).unwrap()];
        assert!(matches!(
            fit_mle(&spec, &flat, false, &OptimizerConfig::default(), 1),
            Err(Error::InsufficientData { .. })
        ));
    }
}
