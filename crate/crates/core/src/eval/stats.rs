use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Result, RsmError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided.
    pub p_value: f64,
    pub df: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Two-sided one-sample t-test of `mean(diffs) == 0`.
///
/// All-zero differences give `t = 0, p = 1`.
pub fn paired_t_test(diffs: &[f64]) -> Result<TTest> {
    let n = diffs.len();
    if n < 2 {
        return Err(RsmError::TooFewSamples(n));
    }
    let df = (n - 1) as f64;
    if diffs.iter().all(|&d| d == diffs[0]) {
        if diffs[0] == 0.0 {
            return Ok(TTest { t: 0.0, p_value: 1.0, df });
        }
        return Err(RsmError::DegenerateVariance);
    }
    let m = mean(diffs);
    let sd = sample_std(diffs);
    let t = m / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| RsmError::InvalidConfig(e.to_string()))?;
    let p_value = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest { t, p_value, df })
}
