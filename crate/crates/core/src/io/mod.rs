//! Station data ingestion, configuration files and result emission.

mod config;
mod emit;
mod station;
mod svg;

pub use config::{config_echo, parse_config, parse_config_str, render_config, ConfigOverrides, CONFIG_KEYS};
pub use emit::{emit_results, figure, file_digest, format_value, EmittedFiles, RECORDS_HEADER, SUMMARY_HEADER};
pub use station::{
    filter_min_years, join_covariate, load_covariate_csv, load_station_csv, write_station_csv, StationLoad,
    StationSeries,
};
pub use svg::{render as render_svg, Panel, Series};
