use crate::distributions::GevParams;
use crate::error::Result;

use super::kernel::{expected_distance, swcrps, wcrps};
use super::{ScoreValue, WeightSpec};

/// CRPS of a GEV forecast; errors for `γ ≥ 1`.
pub fn crps_gev(p: &GevParams, y: f64) -> Result<ScoreValue> {
    wcrps(p, &WeightSpec::Unweighted, y).map(ScoreValue)
}

/// Threshold-weighted CRPS of a GEV forecast.
pub fn wcrps_gev(p: &GevParams, weight: &WeightSpec, y: f64) -> Result<ScoreValue> {
    wcrps(p, weight, y).map(ScoreValue)
}

/// `E|W(X) − W(X')|` under the GEV forecast. Errors when the weight
/// vanishes on the support.
pub fn ew_dist_gev(p: &GevParams, weight: &WeightSpec) -> Result<f64> {
    expected_distance(p, weight)
}

/// Scaled threshold-weighted CRPS of a GEV forecast.
pub fn swcrps_gev(p: &GevParams, weight: &WeightSpec, y: f64) -> Result<ScoreValue> {
    swcrps(p, weight, y).map(ScoreValue)
}

/// Scaled CRPS, the unweighted case of [`swcrps_gev`].
pub fn scrps_gev(p: &GevParams, y: f64) -> Result<ScoreValue> {
    swcrps_gev(p, &WeightSpec::Unweighted, y)
}
