//! Special functions and the quadrature oracle underpinning the closed-form scores.

mod quadrature;
mod special;

pub use quadrature::{integrate, quad_wcrps_oracle, QuadratureSpec};
pub use special::{
    expint_e1, expint_ei, gamma, ln_gamma, lower_inc_gamma, upper_inc_gamma,
    upper_inc_gamma_scaled, EULER_GAMMA,
};

/// Linear-interpolation sample quantile (Hyndman–Fan type 7) of sorted data.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
