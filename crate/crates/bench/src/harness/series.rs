use std::fmt;

use super::stats::{summarize, tukey_filter, RunStats, StatsError};

/// Parameter key under which a series records the bytes each sample moves.
pub const THROUGHPUT_PARAM: &str = "tput_bytes";

/// Timings of one benchmark configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSeries {
    pub benchmark: String,
    pub params: Vec<(String, String)>,
    /// Nanoseconds per trial, warm-up already dropped, in execution order.
    pub samples: Vec<u64>,
    /// Total nanoseconds per operation over all measured trials.
    pub breakdown: Option<Vec<(String, u64)>>,
    pub throughput_bytes: Option<u64>,
}

impl TrialSeries {
    pub fn new(benchmark: impl Into<String>) -> Self {
        TrialSeries {
            benchmark: benchmark.into(),
            params: Vec::new(),
            samples: Vec::new(),
            breakdown: None,
            throughput_bytes: None,
        }
    }

    /// Appends a parameter. Keys and values may not contain `;` or `=`.
    pub fn param(mut self, key: &str, value: impl fmt::Display) -> Self {
        let value = value.to_string();
        for s in [key, value.as_str()] {
            assert!(!s.contains([';', '=', '\n']), "parameter text `{s}` contains a separator");
        }
        self.params.push((key.to_string(), value));
        self
    }

    pub fn throughput(mut self, bytes: u64) -> Self {
        self.throughput_bytes = Some(bytes);
        self.param(THROUGHPUT_PARAM, bytes)
    }

    pub fn samples(mut self, samples: Vec<u64>) -> Self {
        self.samples = samples;
        self
    }

    pub fn breakdown(mut self, ops: Vec<(String, u64)>) -> Self {
        self.breakdown = Some(ops);
        self
    }

    pub fn get_param(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn params_string(&self) -> String {
        format_params(&self.params)
    }

    pub fn kept(&self, k: f64) -> Vec<u64> {
        tukey_filter(&self.samples, k)
    }

    /// Tukey-filters the samples with multiplier `k` and summarizes the rest.
    pub fn stats(&self, k: f64) -> Result<RunStats, StatsError> {
        summarize(&self.kept(k), self.samples.len(), self.throughput_bytes)
    }

    pub fn total_ns(&self) -> u64 {
        self.samples.iter().sum()
    }
}

pub fn format_params(params: &[(String, String)]) -> String {
    params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

pub fn parse_params(s: &str) -> Option<Vec<(String, String)>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(';')
        .map(|kv| kv.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}
