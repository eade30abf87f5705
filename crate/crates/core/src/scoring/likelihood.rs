use crate::distributions::Forecast;
use crate::error::Result;

use super::ScoreValue;

/// `ln f(y)`; `−∞` outside the support.
pub fn log_score(f: &Forecast, y: f64) -> Result<ScoreValue> {
    f.logpdf(y).map(ScoreValue)
}

/// Censored likelihood score: `ln F(q)` when `y ≤ q`, `ln f(y)` when `y > q`.
pub fn censored_ls(f: &Forecast, q: f64, y: f64) -> Result<ScoreValue> {
    if y <= q {
        let log_cdf = match f {
            Forecast::Gev(p) => -p.neg_log_cdf(q),
            Forecast::Pgev(p) => -p.to_gev().neg_log_cdf(q),
            other => other.cdf(q).ln(),
        };
        // Without a density the censored branch is still defined; keep the
        // error for the uncensored branch only.
        return Ok(ScoreValue(log_cdf));
    }
    log_score(f, y)
}
