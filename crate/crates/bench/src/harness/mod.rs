//! Trial orchestration, the timing statistics, and CSV output.

mod records;
mod series;
mod stats;
mod trials;

pub use records::{
    read_breakdown_csv, read_raw_csv, read_summary_csv, series_from_raw, write_csv, BreakdownRow, CsvPaths, RawRow,
    SummaryRow, BREAKDOWN_HEADER, RAW_HEADER, SUMMARY_HEADER,
};
pub use series::{format_params, parse_params, TrialSeries, THROUGHPUT_PARAM};
pub use stats::{
    filter_within, harmonic_mean, quantile, summarize, throughput, tukey_fences, tukey_filter, RunStats, StatsError,
};
pub use trials::{run_measured_trials, run_trials, Clock, MonotonicClock, TrialConfig};
