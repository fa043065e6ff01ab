//! Scalar statistics helpers.

use std::f64::consts::{PI, SQRT_2};

/// Two-sided standard normal tail `2·(1 − Φ(|z|))`.
pub fn two_sided_normal_tail(z: f64) -> f64 {
    libm::erfc(z.abs() / SQRT_2).clamp(0.0, 1.0)
}

/// Natural log of [`two_sided_normal_tail`], accurate far into the tail where
/// the tail itself underflows.
pub fn ln_two_sided_normal_tail(z: f64) -> f64 {
    let x = z.abs() / SQRT_2;
    if x < 25.0 {
        return libm::erfc(x).ln();
    }
    // Asymptotic expansion of erfc for large arguments.
    let x2 = x * x;
    let series = 1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) - 15.0 / (8.0 * x2 * x2 * x2);
    -x2 - (x * PI.sqrt()).ln() + series.ln()
}

/// Percentile with linear interpolation between order statistics.
///
/// `q` is in percent. Returns `None` for an empty input.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0).unwrap_or(0.0)
}
