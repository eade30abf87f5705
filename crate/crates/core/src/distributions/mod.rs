//! GEV/PGEV laws, the exponential/Pareto benchmark laws and inverse-cdf sampling.

mod benchmark;
mod forecast;
mod gev;

pub use benchmark::{
    benchmark_generate, exp_cdf, exp_pdf, exp_quantile, unit_gp_cdf, unit_gp_pdf,
    unit_gp_quantile, BenchmarkForecast, BenchmarkKind, BenchmarkSeries, LatentMode,
};
pub use forecast::{forecast_sample, Forecast};
pub use gev::{pgev_to_gev, GevParams, PgevParams, GAMMA_TOL};
