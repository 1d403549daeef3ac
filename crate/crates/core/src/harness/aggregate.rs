//! Percentile curves over trials.

use serde::{Deserialize, Serialize};

/// Linearly interpolated percentile of the sorted sample, `q` in `[0, 1]`.
/// NaN sorts above `+∞`. Returns NaN for an empty sample.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

fn percentile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || v[lo] == v[hi] {
        return v[lo];
    }
    let frac = pos - lo as f64;
    // Infinite neighbours would give NaN through ∞ − ∞.
    if v[hi].is_infinite() {
        return v[hi];
    }
    v[lo] + frac * (v[hi] - v[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub strategy: String,
    pub median: Vec<f64>,
    pub p90: Vec<f64>,
}

/// One panel: shared sample times and one series per strategy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub times: Vec<usize>,
    pub series: Vec<Series>,
}

impl AggregateCurve {
    pub fn new(times: Vec<usize>) -> Self {
        Self { times, series: Vec::new() }
    }

    /// A curve without rows; what an empty CSV parses to.
    pub fn is_empty(&self) -> bool {
        self.series.is_empty() || self.times.is_empty()
    }

    /// Adds the median and 90th percentile of `trials`, each sampled at
    /// [`Self::times`].
    pub fn push(&mut self, strategy: &str, trials: &[Vec<f64>]) {
        let mut median = Vec::with_capacity(self.times.len());
        let mut p90 = Vec::with_capacity(self.times.len());
        let mut column = Vec::with_capacity(trials.len());
        for i in 0..self.times.len() {
            column.clear();
            column.extend(trials.iter().map(|t| t[i]));
            column.sort_by(f64::total_cmp);
            if column.is_empty() {
                median.push(f64::NAN);
                p90.push(f64::NAN);
            } else {
                median.push(percentile_sorted(&column, 0.5));
                p90.push(percentile_sorted(&column, 0.9));
            }
        }
        self.series.push(Series { strategy: strategy.to_string(), median, p90 });
    }

    pub fn get(&self, strategy: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.strategy == strategy)
    }
}

/// About `count` log-spaced integer times in `1..=horizon`, always ending at
/// `horizon`.
pub fn log_times(horizon: usize, count: usize) -> Vec<usize> {
    if horizon == 0 {
        return Vec::new();
    }
    let mut times: Vec<usize> = (0..count.max(1))
        .map(|i| {
            let frac = if count <= 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
            (horizon as f64).powf(frac).round() as usize
        })
        .map(|t| t.clamp(1, horizon))
        .collect();
    times.push(horizon);
    times.sort_unstable();
    times.dedup();
    times
}
