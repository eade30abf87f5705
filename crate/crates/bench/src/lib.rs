//! Fixtures shared by the benchmarks in `benches/`.

use extremescore::inference::{ModelFamily, ModelSpec};
use extremescore::io::StationSeries;
use extremescore::kernel_mc::draw_uniforms;
use extremescore::GevParams;

/// Laws spanning the three shape regimes.
pub fn laws() -> [(&'static str, GevParams); 3] {
    [
        ("weibull", GevParams::new(0.0, 1.0, -0.3).expect("valid")),
        ("gumbel", GevParams::new(0.0, 1.0, 0.0).expect("valid")),
        ("frechet", GevParams::new(0.0, 1.0, 0.3).expect("valid")),
    ]
}

/// `n` draws from `law`.
pub fn sample(law: &GevParams, n: usize, seed: u64) -> Vec<f64> {
    draw_uniforms(n, seed)
        .into_iter()
        .map(|u| law.quantile(u).expect("u in (0, 1)"))
        .collect()
}

/// One station of `n` years drawn from `law`, without a covariate.
pub fn station(law: &GevParams, n: usize, seed: u64) -> StationSeries {
    let years = (0..n as i64).map(|y| 1900 + y).collect();
    StationSeries::new("bench", years, sample(law, n, seed), None).expect("valid series")
}

pub fn gev_spec() -> ModelSpec {
    ModelSpec::new(ModelFamily::Gev)
}
