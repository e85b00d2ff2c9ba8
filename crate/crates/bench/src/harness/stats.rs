use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no samples to summarize")]
    Empty,
    #[error("sample {index} is zero; throughput is undefined")]
    ZeroSample { index: usize },
}

/// Summary of one configuration's kept samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub n_raw: usize,
    pub n_kept: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    /// Harmonic mean of per-sample throughput in bytes/s.
    pub harmonic_mean_throughput: Option<f64>,
}

/// Quantile of sorted data by linear interpolation between closest ranks
/// (`h = (n - 1) p`), the convention R calls type 7.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_f64(samples: &[u64]) -> Vec<f64> {
    let mut v: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `[q1 - k IQR, q3 + k IQR]` of `samples`.
pub fn tukey_fences(samples: &[u64], k: f64) -> (f64, f64) {
    let sorted = sorted_f64(samples);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    (q1 - k * iqr, q3 + k * iqr)
}

/// Keeps samples inside fences computed once from `fences_from`.
pub fn filter_within(samples: &[u64], fences: (f64, f64)) -> Vec<u64> {
    samples
        .iter()
        .copied()
        .filter(|&s| {
            let x = s as f64;
            x >= fences.0 && x <= fences.1
        })
        .collect()
}

/// Drops samples outside the Tukey fences. Fences are computed once from the
/// input (no iterative re-fencing); order of the kept samples is preserved.
pub fn tukey_filter(samples: &[u64], k: f64) -> Vec<u64> {
    if samples.is_empty() {
        return Vec::new();
    }
    filter_within(samples, tukey_fences(samples, k))
}

pub fn harmonic_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let inv: f64 = values.iter().map(|v| 1.0 / v).sum();
    Some(values.len() as f64 / inv)
}

/// Throughput of one sample: `bytes` moved in `ns` nanoseconds, in bytes/s.
pub fn throughput(bytes: u64, ns: u64) -> f64 {
    bytes as f64 * 1e9 / ns as f64
}

/// Statistics over kept samples. `n_raw` is the pre-filter count. When
/// `throughput_bytes` is given, each sample is taken to move that many bytes.
pub fn summarize(kept: &[u64], n_raw: usize, throughput_bytes: Option<u64>) -> Result<RunStats, StatsError> {
    if kept.is_empty() {
        return Err(StatsError::Empty);
    }
    let sorted = sorted_f64(kept);
    let n = kept.len() as f64;
    let mean = kept.iter().map(|&s| s as f64).sum::<f64>() / n;
    let var = kept.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / n;

    let harmonic_mean_throughput = match throughput_bytes {
        None => None,
        Some(bytes) => {
            if let Some(index) = kept.iter().position(|&s| s == 0) {
                return Err(StatsError::ZeroSample { index });
            }
            let tputs: Vec<f64> = kept.iter().map(|&s| throughput(bytes, s)).collect();
            harmonic_mean(&tputs)
        }
    };

    Ok(RunStats {
        n_raw,
        n_kept: kept.len(),
        mean,
        std: var.sqrt(),
        median: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        harmonic_mean_throughput,
    })
}
