//! Sample-wise filters over a single channel. Missing samples are NaN.

use crate::error::{Error, Result};

/// Trailing mean over `window` samples; the first samples average what is
/// available.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..series.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(window);
            let slice = &series[start..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// `out[i] = series[i - shift]`; the first `shift` samples are NaN.
pub fn time_shift(series: &[f64], shift: usize) -> Result<Vec<f64>> {
    if series.len() < shift {
        return Err(Error::Domain(format!(
            "cannot shift {} samples by {shift}",
            series.len()
        )));
    }
    let mut out = vec![f64::NAN; shift];
    out.extend_from_slice(&series[..series.len() - shift]);
    Ok(out)
}

/// Linearly fills interior runs of at most `max_gap` missing samples and
/// flags them. Longer runs and runs touching either end stay missing.
pub fn interpolate_gaps(series: &[f64], max_gap: usize) -> (Vec<f64>, Vec<bool>) {
    let mut out = series.to_vec();
    let mut flags = vec![false; series.len()];
    let mut i = 0;
    while i < out.len() {
        if !out[i].is_nan() {
            i += 1;
            continue;
        }
        let start = i;
        while i < out.len() && out[i].is_nan() {
            i += 1;
        }
        let len = i - start;
        if start == 0 || i == out.len() || len > max_gap {
            continue;
        }
        let (left, right) = (out[start - 1], out[i]);
        for (k, j) in (start..i).enumerate() {
            let w = (k + 1) as f64 / (len + 1) as f64;
            out[j] = left + w * (right - left);
            flags[j] = true;
        }
    }
    (out, flags)
}
