//! Equity metrics.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("gini input {index} is negative ({value})")]
    NegativeInput { index: usize, value: f64 },
}

/// Population Gini index `Σ_i Σ_j |x_i − x_j| / (2 n² μ)`.
///
/// Returns 0 for empty input or zero mean.
pub fn gini(values: &[f64]) -> Result<f64, MetricError> {
    if let Some((index, &value)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| v.is_nan() || **v < 0.0)
    {
        return Err(MetricError::NegativeInput { index, value });
    }
    let n = values.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let mut diff = 0.0;
    for x in values {
        for y in values {
            diff += (x - y).abs();
        }
    }
    Ok(diff / (2.0 * (n * n) as f64 * mean))
}
