//! Limiting values for spiked eigenvalues and singular vectors.
//!
//! Spikes are parametrized by `tau`, with signal strength
//! `theta = tau * beta^(1/4)`. The phase transition sits at `tau = 1`; a spike
//! with `tau = 1` exactly is treated as absorbed by the bulk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mp::{bulk_edges, d_transform_inverse};

/// Limit of `(lambda - 1) / sqrt(beta)` for the bulk edge.
pub const BULK_CENTERED_LIMIT: f64 = 2.0;

/// Number of spikes with `tau > 1`.
pub fn above_threshold_count(taus: &[f64]) -> usize {
    taus.iter().filter(|t| **t > 1.0).count()
}

/// Limit of the centered eigenvalue `(lambda - 1) / sqrt(beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenteredLimit {
    pub value: f64,
    /// The spike does not separate from the bulk; `value` is the bulk limit.
    pub absorbed: bool,
}

/// `tau^2 + tau^-2` above the transition, the bulk value 2 otherwise.
pub fn centered_eigenvalue_limit(tau: f64) -> CenteredLimit {
    if tau > 1.0 {
        CenteredLimit { value: tau * tau + 1.0 / (tau * tau), absorbed: false }
    } else {
        CenteredLimit { value: BULK_CENTERED_LIMIT, absorbed: true }
    }
}

/// Outlier location `(1 + theta^2)(beta + theta^2) / theta^2`.
pub fn lambda_bar(theta: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::validation(format!("beta must lie in (0, 1], got {beta}")));
    }
    let t2 = theta * theta;
    if !(t2 > beta.sqrt()) {
        return Err(Error::BelowThreshold(format!(
            "theta^2 = {t2} does not exceed sqrt(beta) = {}",
            beta.sqrt()
        )));
    }
    Ok((1.0 + t2) * (beta + t2) / t2)
}

/// Limiting left cosine `sqrt(1 - tau^-4)` for `tau > 1`, else 0.
pub fn cosine_left(tau: f64) -> f64 {
    if tau > 1.0 {
        (1.0 - tau.powi(-4)).sqrt()
    } else {
        0.0
    }
}

/// Limits at a fixed aspect ratio: eigenvalue location and squared overlaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionalLimits {
    pub lambda_limit: f64,
    pub u_overlap_sq: f64,
    pub v_overlap_sq: f64,
    pub supercritical: bool,
}

/// Fixed-`beta` limits. Below `theta = beta^(1/4)` the bulk values
/// `((1 + sqrt(beta))^2, 0, 0)` are returned.
pub fn proportional_reference(theta: f64, beta: f64) -> Result<ProportionalLimits> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::validation(format!("beta must lie in (0, 1], got {beta}")));
    }
    let t2 = theta * theta;
    if !(theta > beta.powf(0.25)) {
        return Ok(ProportionalLimits {
            lambda_limit: bulk_edges(beta).1,
            u_overlap_sq: 0.0,
            v_overlap_sq: 0.0,
            supercritical: false,
        });
    }
    Ok(ProportionalLimits {
        lambda_limit: (1.0 + t2) * (beta + t2) / t2,
        u_overlap_sq: 1.0 - beta * (1.0 + t2) / (t2 * (t2 + beta)),
        v_overlap_sq: 1.0 - (beta + t2) / (t2 * (t2 + 1.0)),
        supercritical: true,
    })
}

/// Per-spike theoretical values at a given aspect ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub tau: f64,
    pub theta: f64,
    pub above_threshold: bool,
    /// Outlier location; the upper bulk edge for absorbed spikes.
    pub lambda_bar: f64,
    pub centered_limit: f64,
    pub cosine_left: f64,
    /// Envelope `beta^(1/4)` for the right overlap.
    pub right_overlap_scale: f64,
    pub bulk_limit_centered: f64,
}

/// Theory for each `tau` at aspect ratio `beta`, with `theta = tau beta^(1/4)`.
pub fn predict(taus: &[f64], beta: f64) -> Result<Vec<TheoryPrediction>> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::validation(format!("beta must lie in (0, 1], got {beta}")));
    }
    let scale = beta.powf(0.25);
    taus.iter()
        .map(|&tau| {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(Error::validation(format!("tau must be finite and >= 0, got {tau}")));
            }
            let theta = tau * scale;
            let above = tau > 1.0;
            let lambda_bar = if above {
                d_transform_inverse(1.0 / (theta * theta), beta)?
            } else {
                bulk_edges(beta).1
            };
            Ok(TheoryPrediction {
                tau,
                theta,
                above_threshold: above,
                lambda_bar,
                centered_limit: centered_eigenvalue_limit(tau).value,
                cosine_left: cosine_left(tau),
                right_overlap_scale: scale,
                bulk_limit_centered: BULK_CENTERED_LIMIT,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_counts() {
        assert_eq!(above_threshold_count(&[2.0, 1.5, 0.5]), 2);
        assert_eq!(above_threshold_count(&[0.9]), 0);
        assert_eq!(above_threshold_count(&[1.0]), 0);
    }

    #[test]
    fn centered_limits() {
        assert!((centered_eigenvalue_limit(2f64.sqrt()).value - 2.5).abs() < 1e-14);
        let at_one = centered_eigenvalue_limit(1.0);
        assert_eq!(at_one.value, 2.0);
        assert!(at_one.absorbed);
        assert!((centered_eigenvalue_limit(2.0).value - 4.25).abs() < 1e-15);
        assert!(!centered_eigenvalue_limit(2.0).absorbed);
    }

    #[test]
    fn lambda_bar_examples() {
        let lb = lambda_bar(0.2f64.sqrt(), 0.01).unwrap();
        assert!((lb - 1.26).abs() < 1e-12);
        assert!((lb - (1.0 + 2.5 * 0.1 + 0.01)).abs() < 1e-12);
        // theta = 1, beta = 1 sits exactly on the threshold.
        assert!(lambda_bar(1.0, 1.0).is_err());
        assert!((lambda_bar(2.0, 1.0).unwrap() - 6.25).abs() < 1e-15);
        let inv = d_transform_inverse(1.0 / 0.2, 0.01).unwrap();
        assert!((lb - inv).abs() < 1e-12);
        assert!(lambda_bar(0.1, 0.01).is_err());
        assert!(lambda_bar(0.01f64.powf(0.25), 0.01).is_err());
    }

    #[test]
    fn cosine_values() {
        assert_eq!(cosine_left(1.0), 0.0);
        assert_eq!(cosine_left(0.3), 0.0);
        assert!((cosine_left(2f64.sqrt()) - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((cosine_left(1e6) - 1.0).abs() < 1e-15);
        assert!((cosine_left(1.6) - 0.92055).abs() < 1e-5);
    }

    #[test]
    fn proportional_examples() {
        let p = proportional_reference(2.0, 1.0).unwrap();
        assert!((p.lambda_limit - 6.25).abs() < 1e-14);
        assert!((p.u_overlap_sq - 0.75).abs() < 1e-14);
        assert!((p.v_overlap_sq - 0.75).abs() < 1e-14);
        let p = proportional_reference(0.5, 1.0).unwrap();
        assert_eq!((p.lambda_limit, p.u_overlap_sq, p.v_overlap_sq), (4.0, 0.0, 0.0));
        assert!(!p.supercritical);
        let p = proportional_reference(0.2f64.sqrt(), 0.01).unwrap();
        assert!((p.lambda_limit - 1.26).abs() < 1e-12);
    }

    #[test]
    fn predict_row() {
        let rows = predict(&[1.6], 0.005).unwrap();
        assert!((rows[0].centered_limit - 2.950625).abs() < 1e-12);
        assert!((rows[0].cosine_left - 0.92055).abs() < 1e-5);
        assert!(rows[0].above_threshold);
        assert!(rows[0].lambda_bar > bulk_edges(0.005).1);
        let rows = predict(&[0.8], 0.005).unwrap();
        assert_eq!(rows[0].lambda_bar, bulk_edges(0.005).1);
        assert_eq!(rows[0].cosine_left, 0.0);
    }
}
