//! Four-moment sample statistics.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Population moments of a sample. `kappa` is the non-excess kurtosis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub kappa: f64,
}

/// Raw central moments `(mean, m2, m3, m4)` with `1/n` normalization.
pub(crate) fn central_moments(values: &[f64]) -> (f64, f64, f64, f64) {
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in values {
        let d = x - mu;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (mu, m2 / n, m3 / n, m4 / n)
}

pub fn moments(values: &[f64]) -> Result<MomentStats> {
    if values.len() < 2 {
        return Err(Error::SampleSize {
            need: 2,
            got: values.len(),
        });
    }
    let (mu, m2, m3, m4) = central_moments(values);
    if m2 <= 0.0 || values.iter().all(|&v| v == values[0]) {
        return Err(Error::DegenerateSample);
    }
    let sigma = m2.sqrt();
    Ok(MomentStats {
        mu,
        sigma,
        gamma: m3 / (m2 * sigma),
        kappa: m4 / (m2 * m2),
    })
}
