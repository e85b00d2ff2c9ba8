//! CSV files written per benchmark run.
//!
//! * `<name>_raw.csv`: one row per kept-or-not trial sample.
//! * `<name>_summary.csv`: one row per series, statistics after filtering.
//! * `<name>_breakdown.csv`: per-operation totals, only for series that
//!   carry a breakdown.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use super::series::{parse_params, TrialSeries, THROUGHPUT_PARAM};
use super::stats::RunStats;
use crate::error::{BenchError, Result};

pub const RAW_HEADER: [&str; 4] = ["benchmark", "params", "trial_index", "value_ns"];
pub const SUMMARY_HEADER: [&str; 12] = [
    "benchmark", "params", "n_raw", "n_kept", "mean_ns", "std_ns", "median_ns", "q1_ns", "q3_ns", "min_ns", "max_ns",
    "hmean_Bps",
];
pub const BREAKDOWN_HEADER: [&str; 5] = ["benchmark", "params", "op", "total_ns", "fraction"];

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub benchmark: String,
    pub params: String,
    pub trial_index: usize,
    pub value_ns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub benchmark: String,
    pub params: String,
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownRow {
    pub benchmark: String,
    pub params: String,
    pub op: String,
    pub total_ns: u64,
    pub fraction: f64,
}

/// Paths of the files written by [`write_csv`].
#[derive(Debug, Clone)]
pub struct CsvPaths {
    pub raw: PathBuf,
    pub summary: PathBuf,
    pub breakdown: Option<PathBuf>,
}

impl CsvPaths {
    pub fn new(dir: &Path, name: &str) -> Self {
        CsvPaths {
            raw: dir.join(format!("{name}_raw.csv")),
            summary: dir.join(format!("{name}_summary.csv")),
            breakdown: Some(dir.join(format!("{name}_breakdown.csv"))),
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |source| BenchError::Csv { path: path.to_path_buf(), source }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes raw samples and per-series statistics (Tukey multiplier `k`) into
/// `dir`, creating it if needed. Returns the statistics in series order.
pub fn write_csv(dir: &Path, name: &str, series: &[TrialSeries], k: f64) -> Result<(CsvPaths, Vec<RunStats>)> {
    fs::create_dir_all(dir).map_err(|source| BenchError::Io { path: dir.to_path_buf(), source })?;
    let mut paths = CsvPaths::new(dir, name);

    let mut raw = writer(&paths.raw)?;
    raw.write_record(RAW_HEADER).map_err(csv_err(&paths.raw))?;
    for s in series {
        let params = s.params_string();
        for (i, v) in s.samples.iter().enumerate() {
            raw.write_record([s.benchmark.as_str(), &params, &i.to_string(), &v.to_string()])
                .map_err(csv_err(&paths.raw))?;
        }
    }
    raw.flush().map_err(|source| BenchError::Io { path: paths.raw.clone(), source })?;

    let mut all_stats = Vec::with_capacity(series.len());
    let mut summary = writer(&paths.summary)?;
    summary.write_record(SUMMARY_HEADER).map_err(csv_err(&paths.summary))?;
    for s in series {
        let st = s.stats(k)?;
        summary
            .write_record([
                s.benchmark.clone(),
                s.params_string(),
                st.n_raw.to_string(),
                st.n_kept.to_string(),
                st.mean.to_string(),
                st.std.to_string(),
                st.median.to_string(),
                st.q1.to_string(),
                st.q3.to_string(),
                st.min.to_string(),
                st.max.to_string(),
                opt(st.harmonic_mean_throughput),
            ])
            .map_err(csv_err(&paths.summary))?;
        all_stats.push(st);
    }
    summary.flush().map_err(|source| BenchError::Io { path: paths.summary.clone(), source })?;

    if series.iter().any(|s| s.breakdown.is_some()) {
        let path = paths.breakdown.clone().expect("breakdown path");
        let mut w = writer(&path)?;
        w.write_record(BREAKDOWN_HEADER).map_err(csv_err(&path))?;
        for s in series {
            let Some(ops) = &s.breakdown else { continue };
            let total = s.total_ns();
            for (op, ns) in ops {
                let fraction = if total > 0 { *ns as f64 / total as f64 } else { 0.0 };
                w.write_record([s.benchmark.clone(), s.params_string(), op.clone(), ns.to_string(), fraction.to_string()])
                    .map_err(csv_err(&path))?;
            }
        }
        w.flush().map_err(|source| BenchError::Io { path: path.clone(), source })?;
    } else {
        paths.breakdown = None;
    }
    Ok((paths, all_stats))
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let found = rdr.headers().map_err(csv_err(path))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(BenchError::Config(format!("{}: unexpected header {:?}", path.display(), found)));
    }
    rdr.records().map(|r| r.map_err(csv_err(path))).collect()
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    let text = rec.get(i).unwrap_or("");
    text.parse()
        .map_err(|_| BenchError::Config(format!("{}: cannot parse `{text}` in column {i}", path.display())))
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>> {
    read_rows(path, &RAW_HEADER)?
        .iter()
        .map(|r| {
            Ok(RawRow {
                benchmark: r[0].to_string(),
                params: r[1].to_string(),
                trial_index: field(path, r, 2)?,
                value_ns: field(path, r, 3)?,
            })
        })
        .collect()
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    read_rows(path, &SUMMARY_HEADER)?
        .iter()
        .map(|r| {
            let hmean = if r[11].is_empty() { None } else { Some(field(path, r, 11)?) };
            Ok(SummaryRow {
                benchmark: r[0].to_string(),
                params: r[1].to_string(),
                stats: RunStats {
                    n_raw: field(path, r, 2)?,
                    n_kept: field(path, r, 3)?,
                    mean: field(path, r, 4)?,
                    std: field(path, r, 5)?,
                    median: field(path, r, 6)?,
                    q1: field(path, r, 7)?,
                    q3: field(path, r, 8)?,
                    min: field(path, r, 9)?,
                    max: field(path, r, 10)?,
                    harmonic_mean_throughput: hmean,
                },
            })
        })
        .collect()
}

pub fn read_breakdown_csv(path: &Path) -> Result<Vec<BreakdownRow>> {
    read_rows(path, &BREAKDOWN_HEADER)?
        .iter()
        .map(|r| {
            Ok(BreakdownRow {
                benchmark: r[0].to_string(),
                params: r[1].to_string(),
                op: r[2].to_string(),
                total_ns: field(path, r, 3)?,
                fraction: field(path, r, 4)?,
            })
        })
        .collect()
}

/// Rebuilds series (samples and throughput size only) from raw rows,
/// grouped by `(benchmark, params)` in first-seen order.
pub fn series_from_raw(rows: &[RawRow]) -> Result<Vec<TrialSeries>> {
    let mut out: Vec<TrialSeries> = Vec::new();
    for row in rows {
        let pos = out.iter().position(|s| s.benchmark == row.benchmark && s.params_string() == row.params);
        let idx = match pos {
            Some(i) => i,
            None => {
                let params = parse_params(&row.params)
                    .ok_or_else(|| BenchError::Config(format!("malformed params `{}`", row.params)))?;
                let throughput_bytes = params
                    .iter()
                    .find(|(k, _)| k == THROUGHPUT_PARAM)
                    .map(|(_, v)| v.parse())
                    .transpose()
                    .map_err(|_| BenchError::Config(format!("malformed {THROUGHPUT_PARAM} in `{}`", row.params)))?;
                out.push(TrialSeries {
                    benchmark: row.benchmark.clone(),
                    params,
                    samples: Vec::new(),
                    breakdown: None,
                    throughput_bytes,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        if row.trial_index != s.samples.len() {
            return Err(BenchError::Config(format!(
                "{}: trial index {} out of sequence",
                row.benchmark, row.trial_index
            )));
        }
        s.samples.push(row.value_ns);
    }
    Ok(out)
}
