// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! Small numeric helpers shared by the scorer and the aggregates.

/// Scale factor turning a median absolute deviation into a consistent
/// estimate of the standard deviation under normality.
pub const MAD_TO_SD: f64 = 1.4826;

/// z-quantile for a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

/// Median of `values`, reordering the slice in place. `None` when empty.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        Some(upper)
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((lower_max + upper) / 2.0)
    }
}

/// Median and median absolute deviation. `scratch` is overwritten.
pub fn median_mad(values: &[f64], scratch: &mut Vec<f64>) -> Option<(f64, f64)> {
    scratch.clear();
    scratch.extend_from_slice(values);
    let median = median_in_place(scratch)?;
    for v in scratch.iter_mut() {
        *v = (*v - median).abs();
    }
    let mad = median_in_place(scratch)?;
    Some((median, mad))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Population standard deviation (n denominator); zero when empty.
pub fn population_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / n as f64).sqrt()
}

/// Normal-approximation half width `z · sd / √n` with the sample sd.
pub fn normal_half_width(values: &[f64], z: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    z * sample_sd(values) / (values.len() as f64).sqrt()
}
