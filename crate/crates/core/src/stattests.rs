//! Paired comparison tests on score differences.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Wilcoxon tests with at most this many nonzero differences use the exact null.
pub const WILCOXON_EXACT_MAX: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Number of differences used (nonzero ones for the rank and sign tests).
    pub n_effective: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTestResult {
    pub test: TestResult,
    /// Share of negative differences among the nonzero ones.
    pub prop_negative: f64,
}

fn nonzero(diffs: &[f64]) -> Result<Vec<f64>> {
    if diffs.iter().any(|d| d.is_nan()) {
        return Err(Error::domain("differences must not be NaN"));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nz.is_empty() {
        return Err(Error::AllZero);
    }
    Ok(nz)
}

fn two_sided(lower: f64, upper: f64) -> f64 {
    (2.0 * lower.min(upper)).min(1.0)
}

/// Midranks of `|d|`, returned in the input order, plus the tie correction `Σ(t³ − t)`.
fn abs_midranks(d: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut ranks = vec![0.0; d.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && d[idx[j + 1]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// Two-sided Wilcoxon signed-rank test; the statistic is the positive rank sum `W+`.
/// Zero differences are dropped.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<TestResult> {
    let d = nonzero(diffs)?;
    let n = d.len();
    let (ranks, ties) = abs_midranks(&d);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let p_value = if n <= WILCOXON_EXACT_MAX {
        exact_wilcoxon_p(&ranks, w_plus)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
            let normal = Normal::standard();
            (2.0 * normal.sf(z)).min(1.0)
        }
    };
    Ok(TestResult {
        statistic: w_plus,
        p_value,
        n_effective: n,
    })
}

/// Exact null distribution of `W+` by subset-sum counting on doubled (integer) midranks.
fn exact_wilcoxon_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        reach += r;
        for s in (r..=reach).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(ranks.len() as i32);
    let w = (2.0 * w_plus).round() as usize;
    let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
    let upper: f64 = counts[w..].iter().sum::<f64>() / all;
    two_sided(lower, upper)
}

/// Two-sided one-sample t-test of zero mean on paired differences.
pub fn paired_ttest(diffs: &[f64]) -> Result<TestResult> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::SampleTooSmall { needed: 2, got: n });
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::domain("differences must be finite"));
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let t = mean / (var / nf).sqrt();
    let dist = StudentsT::new(0.0, 1.0, nf - 1.0).map_err(|e| Error::domain(e.to_string()))?;
    Ok(TestResult {
        statistic: t,
        p_value: (2.0 * dist.sf(t.abs())).min(1.0),
        n_effective: n,
    })
}

/// Two-sided exact binomial sign test; the statistic is the number of positive differences.
pub fn sign_test(diffs: &[f64]) -> Result<SignTestResult> {
    let d = nonzero(diffs)?;
    let n = d.len() as u64;
    let pos = d.iter().filter(|&&x| x > 0.0).count() as u64;
    let p_value = binomial_two_sided(pos, n);
    Ok(SignTestResult {
        test: TestResult {
            statistic: pos as f64,
            p_value,
            n_effective: n as usize,
        },
        prop_negative: (n - pos) as f64 / n as f64,
    })
}

fn binomial_two_sided(k: u64, n: u64) -> f64 {
    let b = Binomial::new(0.5, n).expect("valid binomial");
    let lower = b.cdf(k);
    let upper = if k == 0 { 1.0 } else { b.sf(k - 1) };
    two_sided(lower, upper)
}

/// Proportions of negative differences beyond which a two-sided sign test on
/// `n` nonzero differences rejects at level `alpha`: `(lower, upper)`.
pub fn sign_rejection_bounds(n: usize, alpha: f64) -> Result<(f64, f64)> {
    if n == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("rejection bounds need n >= 1 and alpha in (0,1)"));
    }
    let n64 = n as u64;
    let upper = (n64.div_ceil(2)..=n64)
        .find(|&k| binomial_two_sided(k, n64) <= alpha)
        .map_or(f64::INFINITY, |k| k as f64 / n as f64);
    let lower = if upper.is_finite() { 1.0 - upper } else { f64::NEG_INFINITY };
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wilcoxon_smallest_exact_p() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(r.statistic, 15.0);
        assert_abs_diff_eq!(r.p_value, 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn wilcoxon_symmetric_differences() {
        let r = wilcoxon_signed_rank(&[1.0, -1.0, 2.0, -2.0]).unwrap();
        assert_eq!(r.statistic, 5.0);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-15);
        assert!(matches!(wilcoxon_signed_rank(&[0.0, 0.0]), Err(Error::AllZero)));
    }

    #[test]
    fn wilcoxon_exact_matches_enumeration_with_ties() {
        let d = [0.5, -0.5, 1.0, 2.0, -3.0, 2.0, 0.0];
        let r = wilcoxon_signed_rank(&d).unwrap();
        let nz: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
        let (ranks, _) = abs_midranks(&nz);
        let (mut le, mut ge) = (0u32, 0u32);
        for mask in 0..(1u32 << nz.len()) {
            let s: f64 = (0..nz.len()).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            if s <= r.statistic + 1e-9 {
                le += 1;
            }
            if s >= r.statistic - 1e-9 {
                ge += 1;
            }
        }
        let total = (1u32 << nz.len()) as f64;
        let want = (2.0 * (le.min(ge) as f64) / total).min(1.0);
        assert_abs_diff_eq!(r.p_value, want, epsilon = 1e-15);
    }

    #[test]
    fn wilcoxon_normal_branch_is_near_exact() {
        // Just above the exact cut-off, the approximation should be close to
        // the exact answer computed with the same routine.
        let d: Vec<f64> = (1..=26).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 }).collect();
        let approx = wilcoxon_signed_rank(&d).unwrap();
        let (ranks, _) = abs_midranks(&d);
        let exact = exact_wilcoxon_p(&ranks, approx.statistic);
        assert_abs_diff_eq!(approx.p_value, exact, epsilon = 5e-3);
    }

    #[test]
    fn ttest_examples() {
        assert!(matches!(paired_ttest(&[0.0, 0.0, 0.0]), Err(Error::DegenerateVariance)));
        let r = paired_ttest(&[1.0, -1.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-15);
        // t = 2 with 3 degrees of freedom: two-sided p = 0.139326...
        let r = paired_ttest(&[1.0, 3.0, 1.0, 3.0]).unwrap();
        assert_abs_diff_eq!(r.statistic, 2.0 / (4.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn sign_test_examples() {
        let r = sign_test(&[1.0; 10]).unwrap();
        assert_abs_diff_eq!(r.test.p_value, 2.0 * 0.5f64.powi(10), epsilon = 1e-15);
        assert_eq!(r.prop_negative, 0.0);
        let mut d = vec![1.0; 5];
        d.extend([-1.0; 5]);
        assert_abs_diff_eq!(sign_test(&d).unwrap().test.p_value, 1.0, epsilon = 1e-15);
        let mut d = vec![-1.0; 370];
        d.extend(vec![1.0; 315]);
        let r = sign_test(&d).unwrap();
        assert_abs_diff_eq!(r.test.p_value, binomial_oracle(315, 685), epsilon = 1e-12);
        assert_abs_diff_eq!(r.test.p_value, 0.039_012_7, epsilon = 1e-7);
        assert_abs_diff_eq!(r.prop_negative, 370.0 / 685.0, epsilon = 1e-15);
    }

    /// Two-sided binomial(n, ½) p-value by direct summation in log space.
    fn binomial_oracle(k: u64, n: u64) -> f64 {
        let ln_pmf = |i: u64| {
            crate::numerics::ln_gamma(n as f64 + 1.0)
                - crate::numerics::ln_gamma(i as f64 + 1.0)
                - crate::numerics::ln_gamma((n - i) as f64 + 1.0)
                - n as f64 * std::f64::consts::LN_2
        };
        let lower: f64 = (0..=k).map(|i| ln_pmf(i).exp()).sum();
        let upper: f64 = (k..=n).map(|i| ln_pmf(i).exp()).sum();
        (2.0 * lower.min(upper)).min(1.0)
    }

    #[test]
    fn rejection_bounds_bracket_half() {
        let (lo, hi) = sign_rejection_bounds(685, 0.05).unwrap();
        assert!(lo < 0.5 && hi > 0.5);
        let k = (hi * 685.0).round() as u64;
        assert!(binomial_two_sided(k, 685) <= 0.05);
        assert!(binomial_two_sided(k - 1, 685) > 0.05);
    }

    #[test]
    fn tests_are_scale_invariant() {
        let d = [0.3, -0.1, 0.7, 0.2, -0.4, 0.9, 0.05];
        let scaled: Vec<f64> = d.iter().map(|x| 17.0 * x).collect();
        assert_eq!(wilcoxon_signed_rank(&d).unwrap().p_value, wilcoxon_signed_rank(&scaled).unwrap().p_value);
        assert_eq!(sign_test(&d).unwrap(), sign_test(&scaled).unwrap());
        assert_abs_diff_eq!(
            paired_ttest(&d).unwrap().statistic,
            paired_ttest(&scaled).unwrap().statistic,
            epsilon = 1e-12
        );
    }
}
