//! Small order-statistic and moment helpers.

use crate::error::{ConquerError, Result};

/// Lower order statistic at index `ceil(q * n)` (1-based), i.e.
/// `inf { t : F_n(t) >= q }`. `q <= 0` returns the minimum.
pub fn lower_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(ConquerError::InvalidArgument(
            "quantile of an empty sample".into(),
        ));
    }
    let n = values.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    let mut buf = values.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*v)
}

/// Same convention as [`lower_quantile`] on an already sorted slice.
pub fn lower_quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Conventional median (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(ConquerError::InvalidArgument("median of an empty sample".into()));
    }
    let mut buf = values.to_vec();
    buf.sort_by(f64::total_cmp);
    let n = buf.len();
    Ok(if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    })
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
