//! Evaluation metrics over the sequence of backtest windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    /// Mean of |(r_B - r_F) / r_B| over the terms with r_B != 0.
    pub value: f64,
    /// Number of terms dropped because the benchmark return was zero.
    pub excluded: usize,
}

pub fn mape(forecasts: &[f64], realized: &[f64]) -> Result<Mape> {
    if forecasts.len() != realized.len() {
        return Err(Error::Dimension { expected: realized.len(), actual: forecasts.len() });
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (f, r) in forecasts.iter().zip(realized) {
        if *r == 0.0 {
            continue;
        }
        sum += ((r - f) / r).abs();
        used += 1;
    }
    let value = if used == 0 { 0.0 } else { sum / used as f64 };
    Ok(Mape { value, excluded: realized.len() - used })
}

/// Percentage of positions where `a` is strictly below `b`.
pub fn win_rate(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), actual: b.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count();
    Ok(100.0 * wins as f64 / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalPerformance {
    /// First and last window of the interval, 1-based and inclusive.
    pub start: usize,
    pub end: usize,
    /// Mean per-step excess return times the annualization factor.
    pub annualized_excess: f64,
}

/// Annualized mean excess return over consecutive blocks of `interval`
/// windows; the last block may be shorter.
pub fn over_performance(portfolio: &[f64], benchmark: &[f64], interval: usize, annualization: f64) -> Result<Vec<IntervalPerformance>> {
    if portfolio.len() != benchmark.len() {
        return Err(Error::Dimension { expected: benchmark.len(), actual: portfolio.len() });
    }
    if interval == 0 {
        return Err(Error::Input("interval length must be positive".into()));
    }
    let mut out = Vec::new();
    for (k, (p, b)) in portfolio.chunks(interval).zip(benchmark.chunks(interval)).enumerate() {
        let excess = p.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / p.len() as f64;
        out.push(IntervalPerformance {
            start: k * interval + 1,
            end: k * interval + p.len(),
            annualized_excess: excess * annualization,
        });
    }
    Ok(out)
}
