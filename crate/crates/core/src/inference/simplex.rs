//! Downhill simplex minimisation.

/// Result of one simplex run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    /// True when the tolerances were met before the evaluation budget ran out.
    pub converged: bool,
}

/// Stopping rules for [`nelder_mead`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexTolerance {
    pub max_evals: usize,
    /// Spread of vertex values, relative to `1 + |f_best|`.
    pub ftol: f64,
    /// Vertex spread per coordinate, relative to that coordinate's initial step.
    pub xtol: f64,
}

impl Default for SimplexTolerance {
    fn default() -> Self {
        SimplexTolerance {
            max_evals: 5000,
            ftol: 1e-11,
            xtol: 1e-7,
        }
    }
}

/// Minimise `f` from `x0` with an axis-aligned initial simplex of size `steps`.
///
/// `+∞` (and NaN, treated as `+∞`) is allowed as a barrier; `f(x0)` must be finite
/// for the run to make progress.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], tol: &SimplexTolerance) -> SimplexOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let n = x0.len();
    assert_eq!(steps.len(), n);
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();

    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let (best, worst) = (vals[0], vals[n]);
        if best.is_finite() && worst.is_finite() && worst - best <= tol.ftol * (1.0 + best.abs()) {
            let tight = (1..=n).all(|i| (0..n).all(|j| (pts[i][j] - pts[0][j]).abs() <= tol.xtol * steps[j].abs()));
            if tight {
                converged = true;
                break;
            }
        }
        if evals >= tol.max_evals {
            break;
        }

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, x)| c + t * (x - c)).collect()
        };

        let xr = along(-REFLECT, &pts[n]);
        let fr = eval(&xr, &mut evals);
        if fr < vals[0] {
            let xe = along(-REFLECT * EXPAND, &pts[n]);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < vals[n] {
            let xc = along(-REFLECT * CONTRACT, &pts[n]);
            let fc = eval(&xc, &mut evals);
            (xc, fc, fc <= fr)
        } else {
            let xc = along(CONTRACT, &pts[n]);
            let fc = eval(&xc, &mut evals);
            (xc, fc, fc < vals[n])
        };
        if accept {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = pts[0].iter().zip(&pts[i]).map(|(b, x)| b + SHRINK * (x - b)).collect();
            vals[i] = eval(&shrunk, &mut evals);
            pts[i] = shrunk;
        }
    }

    SimplexOutcome {
        x: pts.swap_remove(0),
        f: vals[0],
        evals,
        converged,
    }
}
