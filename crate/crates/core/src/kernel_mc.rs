//! Monte Carlo estimators for kernel scores and numerical probes of the
//! (tail-)scale function.

use rayon::prelude::*;

use crate::distributions::GevParams;
use crate::error::{Error, Result};
use crate::scoring::{KernelLaw, ScoreRule, TruncatedGev, WeightSpec};
use crate::seeding::{open_uniform, rng_from_seed};

/// Work is split into chunks of this many draws; chunk results are merged in
/// index order so the outcome does not depend on the number of threads.
pub const CHUNK: usize = 4096;

/// Default perturbation grid for [`scale_function_probe`].
pub const DEFAULT_T_GRID: [f64; 6] = [-0.06, -0.04, -0.02, 0.02, 0.04, 0.06];

/// A Monte Carlo estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// Pairwise term of the kernel estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// Unbiased: averages over the `m(m−1)` distinct ordered pairs.
    #[default]
    Fair,
    /// Plug-in: averages over all `m²` pairs including the diagonal.
    PlugIn,
}

/// Streaming mean and variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunningMoments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    /// Sample variance with `n − 1` in the denominator.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate {
            value: self.mean,
            std_err: self.std_err(),
        }
    }
}

impl FromIterator<f64> for RunningMoments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = RunningMoments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Moments of `f(i)` over `0..n`, evaluated in parallel chunks and merged in order.
pub fn chunked_moments<F>(n: usize, f: F) -> RunningMoments
where
    F: Fn(usize) -> f64 + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    let parts: Vec<RunningMoments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).collect())
        .collect();
    let mut total = RunningMoments::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Moments of `k` quantities per index over `0..n`. `f(i, out)` writes the
/// `k` values for index `i`; chunks are merged in order as in [`chunked_moments`].
pub fn chunked_moments_vec<F>(n: usize, k: usize, f: F) -> Vec<RunningMoments>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<RunningMoments>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![RunningMoments::default(); k];
            let mut buf = vec![0.0; k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i, &mut buf);
                for (m, &v) in acc.iter_mut().zip(&buf) {
                    m.push(v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![RunningMoments::default(); k];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}

/// `n` open uniforms from `seed`.
pub fn draw_uniforms(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| open_uniform(&mut rng)).collect()
}

struct KernelParts {
    /// Per-member mean distance to the other members.
    b: Vec<f64>,
    /// Per-member distance to the observation.
    a: Vec<f64>,
    pair_mean: f64,
    obs_mean: f64,
}

fn kernel_parts(sample: &[f64], weight: &WeightSpec, y: f64, estimator: Estimator) -> Result<KernelParts> {
    let m = sample.len();
    if m < 2 {
        return Err(Error::SampleTooSmall { needed: 2, got: m });
    }
    if sample.iter().any(|x| x.is_nan()) || y.is_nan() {
        return Err(Error::domain("sample members and observation must not be NaN"));
    }
    let mut v: Vec<f64> = sample.iter().map(|&x| weight.chain(x)).collect();
    if !v.windows(2).all(|w| w[0] <= w[1]) {
        v.sort_by(f64::total_cmp);
    }
    let wy = weight.chain(y);
    let total: f64 = v.iter().sum();
    let mut prefix = 0.0;
    let mut pair_sum = 0.0;
    let mut b = Vec::with_capacity(m);
    let mf = m as f64;
    for (j, &vj) in v.iter().enumerate() {
        let jf = j as f64;
        // Σ_k |v_j − v_k| = (j v_j − prefix) + (suffix − (m−1−j) v_j)
        let suffix = total - prefix - vj;
        let dist = (jf * vj - prefix) + (suffix - (mf - 1.0 - jf) * vj);
        b.push(dist / (mf - 1.0));
        pair_sum += vj * (2.0 * jf - mf + 1.0);
        prefix += vj;
    }
    let pair_mean = match estimator {
        Estimator::Fair => 2.0 * pair_sum / (mf * (mf - 1.0)),
        Estimator::PlugIn => 2.0 * pair_sum / (mf * mf),
    };
    let a: Vec<f64> = v.iter().map(|&x| (x - wy).abs()).collect();
    let obs_mean = a.iter().sum::<f64>() / mf;
    Ok(KernelParts {
        b,
        a,
        pair_mean,
        obs_mean,
    })
}

fn influence_se(phi: impl Iterator<Item = f64>) -> f64 {
    let m: RunningMoments = phi.collect();
    m.std_err()
}

/// Fair estimate of the kernel score `½E|W(X)−W(X')| − E|W(X)−W(y)|` from
/// a sample, in `O(m log m)`.
pub fn mc_kernel_score(sample: &[f64], weight: &WeightSpec, y: f64) -> Result<McEstimate> {
    mc_kernel_score_with(sample, weight, y, Estimator::Fair)
}

pub fn mc_kernel_score_with(
    sample: &[f64],
    weight: &WeightSpec,
    y: f64,
    estimator: Estimator,
) -> Result<McEstimate> {
    let k = kernel_parts(sample, weight, y, estimator)?;
    let (bm, am) = (k.pair_mean, k.obs_mean);
    let fair_b = mean(&k.b);
    let se = influence_se(k.b.iter().zip(&k.a).map(|(&b, &a)| (b - fair_b) - (a - am)));
    Ok(McEstimate {
        value: 0.5 * bm - am,
        std_err: se,
    })
}

/// Estimate of the scaled kernel score `−E|W(X)−W(y)| / E|W(X)−W(X')| − ½ ln E|W(X)−W(X')|`
/// with a delta-method standard error.
pub fn mc_scaled_kernel_score(sample: &[f64], weight: &WeightSpec, y: f64) -> Result<McEstimate> {
    mc_scaled_kernel_score_with(sample, weight, y, Estimator::Fair)
}

pub fn mc_scaled_kernel_score_with(
    sample: &[f64],
    weight: &WeightSpec,
    y: f64,
    estimator: Estimator,
) -> Result<McEstimate> {
    let k = kernel_parts(sample, weight, y, estimator)?;
    let (bm, am) = (k.pair_mean, k.obs_mean);
    if !(bm > 0.0) {
        return Err(Error::DegenerateSample(
            "all chained sample values are equal; the pairwise kernel mean is zero".into(),
        ));
    }
    let fair_b = mean(&k.b);
    let d_a = -1.0 / bm;
    let d_b = am / (bm * bm) - 0.5 / bm;
    let se = influence_se(
        k.b.iter()
            .zip(&k.a)
            .map(|(&b, &a)| d_a * (a - am) + d_b * 2.0 * (b - fair_b)),
    );
    Ok(McEstimate {
        value: -am / bm - 0.5 * bm.ln(),
        std_err: se,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `E_Q[S(P, Y)]` estimated from draws `ys` of the truth.
pub fn expected_score<L: KernelLaw + Sync + ?Sized>(rule: &ScoreRule, forecast: &L, ys: &[f64]) -> Result<McEstimate> {
    let prepared = rule.prepare(forecast)?;
    Ok(chunked_moments(ys.len(), |i| prepared.score(ys[i])).estimate())
}

/// Paired estimate of `E_Q[S(A, Y) − S(B, Y)]` on common draws.
pub fn expected_score_difference<L: KernelLaw + Sync + ?Sized>(
    rule: &ScoreRule,
    a: &L,
    b: &L,
    ys: &[f64],
) -> Result<McEstimate> {
    let pa = rule.prepare(a)?;
    let pb = rule.prepare(b)?;
    Ok(chunked_moments(ys.len(), |i| pa.score(ys[i]) - pb.score(ys[i])).estimate())
}

/// Expected score of the conditional forecast `P^u` under the conditional truth
/// `Q^u`, i.e. `E_Q[S(P^u, Y) | Y > u]`. Draws are exact: `F(u) + (1 − F(u))·V`
/// is pushed through the truth's quantile function.
pub fn conditional_expected_score(
    rule: &ScoreRule,
    forecast: &GevParams,
    truth: &GevParams,
    u: f64,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n < 100 {
        return Err(Error::SampleTooSmall { needed: 100, got: n });
    }
    let p_u = TruncatedGev::new(*forecast, u)?;
    let q_u = TruncatedGev::new(*truth, u)?;
    let ys: Vec<f64> = draw_uniforms(n, seed).into_iter().map(|v| q_u.draw(v)).collect();
    expected_score(rule, &p_u, &ys)
}

/// Direction and size of a location/scale perturbation
/// `θ + tσr = (μ + tσr₁, σ + tσr₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub direction: [f64; 2],
    pub magnitude: f64,
    pub base: GevParams,
}

impl PerturbationSpec {
    pub fn new(direction: [f64; 2], magnitude: f64, base: GevParams) -> Result<Self> {
        let norm = direction[0].hypot(direction[1]);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("perturbation direction must be a unit vector, norm {norm}")));
        }
        Ok(PerturbationSpec {
            direction,
            magnitude,
            base,
        })
    }

    pub fn perturbed(&self) -> Result<GevParams> {
        let b = self.base;
        let ts = self.magnitude * b.sigma;
        GevParams::new(b.mu + ts * self.direction[0], b.sigma + ts * self.direction[1], b.gamma)
    }
}

/// Estimated `σ² rᵀ s r` (or its tail version) from a probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFunctionEstimate {
    pub value: f64,
    pub std_err: f64,
    /// Least-squares coefficient of a purely linear fit; properness puts it at 0.
    pub linear_coef: f64,
    pub u: Option<f64>,
}

fn validate_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid.iter().all(|&t| t == 0.0) {
        return Err(Error::domain("perturbation grid needs nonzero entries"));
    }
    if t_grid.iter().any(|t| !(t.abs() <= 0.1)) {
        return Err(Error::domain("perturbation grid entries must satisfy |t| <= 0.1"));
    }
    let mut pos: Vec<f64> = t_grid.iter().copied().filter(|&t| t > 0.0).collect();
    let mut neg: Vec<f64> = t_grid.iter().filter(|&&t| t < 0.0).map(|t| -t).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    if pos != neg {
        return Err(Error::domain("perturbation grid must be symmetric around 0"));
    }
    Ok(())
}

/// Fit `D(t) = S_u(Q,Q) − S_u(Q_t,Q) ≈ c·t²` over `t_grid`, with `Q_t` the
/// base law perturbed along `r`. All grid points share the same truth draws.
/// With `u` set, both forecast and truth are conditioned on exceeding `u`.
///
/// Each draw contributes its own least-squares coefficient, so the standard
/// error is the sample standard error of those coefficients.
pub fn scale_function_probe(
    rule: &ScoreRule,
    base: &GevParams,
    r: [f64; 2],
    u: Option<f64>,
    t_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<ScaleFunctionEstimate> {
    validate_grid(t_grid)?;
    if n < 10_000 {
        return Err(Error::SampleTooSmall { needed: 10_000, got: n });
    }
    let perturbed: Vec<GevParams> = t_grid
        .iter()
        .map(|&t| PerturbationSpec::new(r, t, *base)?.perturbed())
        .collect::<Result<_>>()?;
    let uniforms = draw_uniforms(n, seed);
    let sum_t2: f64 = t_grid.iter().map(|t| t * t).sum();
    let sum_t4: f64 = t_grid.iter().map(|t| t.powi(4)).sum();

    let (quad, lin) = match u {
        None => {
            let ys: Vec<f64> = uniforms.iter().map(|&v| base.quantile_unchecked(v)).collect();
            probe_moments(rule, base, &perturbed, &ys, t_grid, sum_t2, sum_t4)?
        }
        Some(level) => {
            let truth = TruncatedGev::new(*base, level)?;
            let laws: Vec<TruncatedGev> =
                perturbed.iter().map(|p| TruncatedGev::new(*p, level)).collect::<Result<_>>()?;
            let ys: Vec<f64> = uniforms.iter().map(|&v| truth.draw(v)).collect();
            probe_moments(rule, &truth, &laws, &ys, t_grid, sum_t2, sum_t4)?
        }
    };
    Ok(ScaleFunctionEstimate {
        value: quad.mean,
        std_err: quad.std_err(),
        linear_coef: lin.mean,
        u,
    })
}

fn probe_moments<L: KernelLaw + Sync>(
    rule: &ScoreRule,
    truth: &L,
    forecasts: &[L],
    ys: &[f64],
    t_grid: &[f64],
    sum_t2: f64,
    sum_t4: f64,
) -> Result<(RunningMoments, RunningMoments)> {
    let reference = rule.prepare(truth)?;
    let prepared: Vec<_> = forecasts.iter().map(|f| rule.prepare(f)).collect::<Result<_>>()?;
    let n_chunks = ys.len().div_ceil(CHUNK);
    let parts: Vec<(RunningMoments, RunningMoments)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut quad = RunningMoments::default();
            let mut lin = RunningMoments::default();
            for &y in &ys[c * CHUNK..((c + 1) * CHUNK).min(ys.len())] {
                let s0 = reference.score(y);
                let (mut q, mut l) = (0.0, 0.0);
                for (p, &t) in prepared.iter().zip(t_grid) {
                    let d = s0 - p.score(y);
                    q += d * t * t;
                    l += d * t;
                }
                quad.push(q / sum_t4);
                lin.push(l / sum_t2);
            }
            (quad, lin)
        })
        .collect();
    let mut quad = RunningMoments::default();
    let mut lin = RunningMoments::default();
    for (q, l) in &parts {
        quad.merge(q);
        lin.merge(l);
    }
    Ok((quad, lin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{swcrps_gev, wcrps_gev};
    use approx::assert_abs_diff_eq;

    fn naive(sample: &[f64], w: &WeightSpec, y: f64) -> f64 {
        let m = sample.len() as f64;
        let mut pairs = 0.0;
        for &a in sample {
            for &b in sample {
                pairs += (w.chain(a) - w.chain(b)).abs();
            }
        }
        let obs: f64 = sample.iter().map(|&x| (w.chain(x) - w.chain(y)).abs()).sum();
        0.5 * pairs / (m * (m - 1.0)) - obs / m
    }

    #[test]
    fn two_point_examples() {
        let v = mc_kernel_score(&[0.0, 1.0], &WeightSpec::Unweighted, 0.5).unwrap();
        assert_abs_diff_eq!(v.value, 0.0, epsilon = 1e-15);
        let v = mc_kernel_score(&[0.0, 1.0], &WeightSpec::Quantile(2.0), 0.5).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(mc_kernel_score(&[1.0], &WeightSpec::Unweighted, 0.5).is_err());
        assert!(matches!(
            mc_scaled_kernel_score(&[1.0, 1.0, 1.0], &WeightSpec::Unweighted, 1.0),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn sorted_path_matches_double_sum() {
        let p = GevParams::new(0.0, 1.0, 0.12).unwrap();
        let mut xs: Vec<f64> = draw_uniforms(300, 4).iter().map(|&u| p.quantile_unchecked(u)).collect();
        for w in [WeightSpec::Unweighted, WeightSpec::Quantile(1.0), WeightSpec::AffineIndicator { a: 0.3, b: 2.0, u: 0.5 }] {
            let want = naive(&xs, &w, 0.7);
            assert_abs_diff_eq!(mc_kernel_score(&xs, &w, 0.7).unwrap().value, want, epsilon = 1e-10);
        }
        xs.reverse();
        let w = WeightSpec::Quantile(1.0);
        assert_abs_diff_eq!(mc_kernel_score(&xs, &w, 0.7).unwrap().value, naive(&xs, &w, 0.7), epsilon = 1e-10);
    }

    #[test]
    fn plug_in_differs_by_pair_normalisation() {
        let xs = [0.0, 1.0, 3.0];
        let fair = mc_kernel_score_with(&xs, &WeightSpec::Unweighted, 1.0, Estimator::Fair).unwrap();
        let plug = mc_kernel_score_with(&xs, &WeightSpec::Unweighted, 1.0, Estimator::PlugIn).unwrap();
        // Pair mean: fair 2, plug-in 4/3; observation mean 1.
        assert_abs_diff_eq!(fair.value, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(plug.value, 2.0 / 3.0 - 1.0, epsilon = 1e-15);
    }

    #[test]
    fn large_sample_matches_closed_forms() {
        let p = GevParams::new(0.0, 1.0, 0.12).unwrap();
        let q = p.quantile(0.9).unwrap();
        let w = WeightSpec::Quantile(q);
        let xs: Vec<f64> = draw_uniforms(100_000, 21).iter().map(|&u| p.quantile_unchecked(u)).collect();
        let k = mc_kernel_score(&xs, &w, 2.0).unwrap();
        let exact = wcrps_gev(&p, &w, 2.0).unwrap().value();
        assert!((k.value - exact).abs() < 4.0 * k.std_err, "{k:?} vs {exact}");
        let s = mc_scaled_kernel_score(&xs, &w, 2.0).unwrap();
        let exact = swcrps_gev(&p, &w, 2.0).unwrap().value();
        assert!((s.value - exact).abs() < 4.0 * s.std_err, "{s:?} vs {exact}");
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 1000) as f64 / 37.0).collect();
        let single: RunningMoments = xs.iter().copied().collect();
        let chunked = chunked_moments(xs.len(), |i| xs[i]);
        assert_abs_diff_eq!(single.mean, chunked.mean, epsilon = 1e-12);
        assert_abs_diff_eq!(single.variance(), chunked.variance(), epsilon = 1e-9);
    }

    #[test]
    fn conditional_log_score_of_gumbel_is_negative_entropy() {
        let g = GevParams::new(0.0, 1.0, 0.0).unwrap();
        let est = conditional_expected_score(&ScoreRule::Ls, &g, &g, -1e6, 200_000, 3).unwrap();
        let entropy = -(1.0 + crate::numerics::EULER_GAMMA);
        assert!((est.value - entropy).abs() < 4.0 * est.std_err, "{est:?}");
    }

    #[test]
    fn conditional_scores_prefer_truth() {
        let q = GevParams::new(0.0, 1.0, 0.12).unwrap();
        let p = GevParams::new(0.0, 1.4, 0.12).unwrap();
        let u = q.quantile(0.9).unwrap();
        for rule in [ScoreRule::Ls, ScoreRule::Crps, ScoreRule::Swcrps(WeightSpec::Quantile(u))] {
            let a = conditional_expected_score(&rule, &q, &q, u, 50_000, 8).unwrap();
            let b = conditional_expected_score(&rule, &p, &q, u, 50_000, 8).unwrap();
            assert!(a.value > b.value, "{rule}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn censored_score_equals_conditional_log_score_above_threshold() {
        let g = GevParams::new(0.0, 1.0, 0.12).unwrap();
        let u = g.quantile(0.9).unwrap();
        let cond = conditional_expected_score(&ScoreRule::Ls, &g, &g, u, 10_000, 5).unwrap();
        let cens = conditional_expected_score(&ScoreRule::CensoredLs(u), &g, &g, u, 10_000, 5).unwrap();
        assert_abs_diff_eq!(cond.value, cens.value, epsilon = 1e-12);
    }

    #[test]
    fn probe_is_reproducible_and_checks_inputs() {
        let g = GevParams::new(0.0, 1.0, 0.12).unwrap();
        let a = scale_function_probe(&ScoreRule::Ls, &g, [0.0, 1.0], None, &DEFAULT_T_GRID, 10_000, 1).unwrap();
        let b = scale_function_probe(&ScoreRule::Ls, &g, [0.0, 1.0], None, &DEFAULT_T_GRID, 10_000, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.value > 0.0);
        assert!(a.linear_coef.abs() < 5.0 * a.std_err.max(1e-3) + 0.05);
        assert!(scale_function_probe(&ScoreRule::Ls, &g, [0.0, 1.0], None, &[0.02, 0.04], 10_000, 1).is_err());
        assert!(scale_function_probe(&ScoreRule::Ls, &g, [1.0, 1.0], None, &DEFAULT_T_GRID, 10_000, 1).is_err());
        assert!(scale_function_probe(&ScoreRule::Ls, &g, [0.0, 1.0], None, &DEFAULT_T_GRID, 10, 1).is_err());
    }

    #[test]
    fn zero_perturbation_gives_zero_difference() {
        let g = GevParams::new(0.0, 1.0, 0.12).unwrap();
        let p = PerturbationSpec::new([0.0, 1.0], 0.0, g).unwrap().perturbed().unwrap();
        let ys: Vec<f64> = draw_uniforms(1000, 2).iter().map(|&u| g.quantile_unchecked(u)).collect();
        let d = expected_score_difference(&ScoreRule::Crps, &g, &p, &ys).unwrap();
        assert_eq!(d.value, 0.0);
    }
}
