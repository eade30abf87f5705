//! Globally adaptive Gauss–Kronrod (7/15) quadrature and the integral-form
//! wCRPS oracle built on it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scoring::WeightSpec;

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) || self.max_subdivisions == 0 {
            return Err(Error::domain(format!("invalid quadrature spec {self:?}")));
        }
        Ok(())
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    (value, error)
}

/// Integrate `f` over `[a, b]`; either limit may be infinite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    integrate_dyn(&f, a, b, spec)
}

fn integrate_dyn(f: &dyn Fn(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate_dyn(f, b, a, spec).map(|v| -v);
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => integrate_finite(&f, a, b, spec),
        (true, false) => {
            // x = a + t / (1 − t)
            let g = |t: f64| {
                let s = 1.0 - t;
                f(a + t / s) / (s * s)
            };
            integrate_finite(&g, 0.0, 1.0, spec)
        }
        (false, true) => {
            let g = |t: f64| {
                let s = 1.0 - t;
                f(b - t / s) / (s * s)
            };
            integrate_finite(&g, 0.0, 1.0, spec)
        }
        (false, false) => {
            let half = QuadratureSpec {
                abs_tol: spec.abs_tol * 0.5,
                ..*spec
            };
            Ok(integrate_dyn(f, f64::NEG_INFINITY, 0.0, &half)?
                + integrate_dyn(f, 0.0, f64::INFINITY, &half)?)
        }
    }
}

fn integrate_finite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    let (value, error) = gk15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut subdivisions = 1;
    while total_err > spec.abs_tol.max(spec.rel_tol * total.abs()) {
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::OracleFailure {
                estimate: total,
                error: total_err,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = gk15(f, worst.a, mid);
        let (rv, re) = gk15(f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
        });
        subdivisions += 1;
        if !total.is_finite() {
            return Err(Error::OracleFailure {
                estimate: total,
                error: total_err,
                subdivisions,
            });
        }
    }
    // Re-sum to shed the drift of the incremental updates.
    Ok(heap.iter().map(|s| s.value).sum())
}

/// Threshold-weighted CRPS from its defining integral,
/// `−∫ w(x) (F(x) − 1{y ≤ x})² dx`, for any cdf.
///
/// This is the independent reference for every closed form in
/// [`crate::scoring`].
pub fn quad_wcrps_oracle<F: Fn(f64) -> f64>(
    cdf: F,
    weight: &WeightSpec,
    y: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    match *weight {
        WeightSpec::Unweighted => quantile_weighted(&cdf, f64::NEG_INFINITY, y, spec),
        WeightSpec::Quantile(q) => quantile_weighted(&cdf, q, y, spec),
        WeightSpec::AffineIndicator { a, b, u } => {
            let mut total = 0.0;
            if a != 0.0 {
                total += a * quantile_weighted(&cdf, f64::NEG_INFINITY, y, spec)?;
            }
            if b != 0.0 {
                total += b * quantile_weighted(&cdf, u, y, spec)?;
            }
            Ok(total)
        }
    }
}

fn quantile_weighted<F: Fn(f64) -> f64>(cdf: &F, q: f64, y: f64, spec: &QuadratureSpec) -> Result<f64> {
    let below = |x: f64| {
        let p = cdf(x);
        p * p
    };
    let above = |x: f64| {
        let p = 1.0 - cdf(x);
        p * p
    };
    let split = q.max(y);
    let mut total = 0.0;
    if split > q {
        total += integrate(below, q, split, spec)?;
    }
    total += integrate(above, split, f64::INFINITY, spec)?;
    Ok(-total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, &QuadratureSpec::default()).unwrap();
        assert_abs_diff_eq!(v, 8.0, epsilon = 1e-12);
    }

    #[test]
    fn half_line_gaussian() {
        let v = integrate(
            |x: f64| (-x * x).exp(),
            0.0,
            f64::INFINITY,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(v, 0.5 * std::f64::consts::PI.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn whole_line_and_reversed_limits() {
        let spec = QuadratureSpec::default();
        let v = integrate(|x: f64| 1.0 / (1.0 + x * x), f64::NEG_INFINITY, f64::INFINITY, &spec).unwrap();
        assert_abs_diff_eq!(v, std::f64::consts::PI, epsilon = 1e-8);
        let r = integrate(|x| x, 1.0, 0.0, &spec).unwrap();
        assert_abs_diff_eq!(r, -0.5, epsilon = 1e-14);
    }

    #[test]
    fn too_few_subdivisions_is_an_oracle_failure() {
        let spec = QuadratureSpec {
            max_subdivisions: 1,
            ..QuadratureSpec::default()
        };
        let r = integrate(|x: f64| x.abs().sqrt().recip().min(1e8), -1.0, 1.0, &spec);
        assert!(matches!(r, Err(Error::OracleFailure { .. })));
    }

    #[test]
    fn oracle_vanishes_when_threshold_beyond_support() {
        // Uniform(0,1) cdf with the weight starting at its right endpoint.
        let cdf = |x: f64| x.clamp(0.0, 1.0);
        let v = quad_wcrps_oracle(cdf, &WeightSpec::Quantile(1.0), 0.3, &QuadratureSpec::default()).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn oracle_matches_uniform_crps() {
        // CRPS of U(0,1) at y: −(y³ + (1−y)³)/3 for y in [0,1].
        let cdf = |x: f64| x.clamp(0.0, 1.0);
        let y: f64 = 0.3;
        let v = quad_wcrps_oracle(cdf, &WeightSpec::Unweighted, y, &QuadratureSpec::default()).unwrap();
        assert_abs_diff_eq!(v, -(y.powi(3) + (1.0 - y).powi(3)) / 3.0, epsilon = 1e-9);
    }
}
