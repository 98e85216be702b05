//! Detection of outlier eigenvalues and inversion of the eigenvalue map.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mp::{bulk_edges, d_transform_real};
use crate::predictions::cosine_left;
use crate::spectra::{eigenvalues_desc, sample_covariance};

/// Default detection margin: eigenvalues above `1 + (2 + eta) sqrt(beta)`.
pub const DEFAULT_ETA: f64 = 0.5;

const TIE_TOLERANCE: f64 = 1e-12;

/// Detection threshold `1 + (2 + eta) sqrt(beta)`.
pub fn detection_threshold(beta: f64, eta: f64) -> f64 {
    1.0 + (2.0 + eta) * beta.sqrt()
}

/// Zero-based indices of the leading eigenvalues above the detection
/// threshold. Scanning stops at the first eigenvalue that does not exceed it.
pub fn detect_outliers(eigenvalues: &[f64], beta: f64, eta: f64) -> Result<Vec<usize>> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::validation(format!("eta must be positive, got {eta}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::validation(format!("beta must lie in (0, 1], got {beta}")));
    }
    let threshold = detection_threshold(beta, eta);
    Ok(eigenvalues.iter().take_while(|l| **l > threshold).enumerate().map(|(i, _)| i).collect())
}

/// Estimated spike strength from an outlier eigenvalue, as `(tau, theta)`.
///
/// Inverts the finite-`beta` map exactly: `theta^-2 = D(lambda)`.
pub fn estimate_tau(lambda_hat: f64, beta: f64) -> Result<(f64, f64)> {
    let edge = bulk_edges(beta).1;
    if !(lambda_hat > edge) {
        return Err(Error::BelowThreshold(format!(
            "eigenvalue {lambda_hat} does not exceed the bulk edge {edge}"
        )));
    }
    let d = d_transform_real(lambda_hat, beta)?;
    let theta = (1.0 / d).sqrt();
    let tau = theta / beta.powf(0.25);
    Ok((tau, theta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    /// Zero-based position in the descending spectrum.
    pub index: usize,
    pub lambda: f64,
    /// `(lambda - 1) / sqrt(beta)`.
    pub centered: f64,
    pub tau_hat: f64,
    pub theta_hat: f64,
    /// Predicted `|<u_hat, u>|`.
    pub cosine_hat: f64,
    /// Envelope `beta^(1/4)` for `|<v_hat, v>|`.
    pub right_scale: f64,
    /// Within `1e-12` of a neighboring outlier.
    pub tie_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    /// Rows and columns after the transpose convention (`n <= m`).
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub eta: f64,
    pub edge: f64,
    pub threshold: f64,
    /// The input had more rows than columns and was transposed; left and
    /// right roles refer to the transposed matrix.
    pub transposed: bool,
    pub outliers: Vec<Outlier>,
    /// Eigenvalues above the bulk edge that were not reported as outliers.
    pub subcritical_count: usize,
}

/// Eigenvalue-based report for an observed matrix.
pub fn analyze(x_tilde: &DMatrix<f64>, eta: f64) -> Result<EstimationReport> {
    let (rows, cols) = x_tilde.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::validation("empty matrix"));
    }
    let transposed = rows > cols;
    let cov = if transposed {
        sample_covariance(&x_tilde.transpose())
    } else {
        sample_covariance(x_tilde)
    };
    let (n, m) = if transposed { (cols, rows) } else { (rows, cols) };
    let eigenvalues = eigenvalues_desc(&cov);
    analyze_eigenvalues(&eigenvalues, n, m, eta, transposed)
}

/// Same as [`analyze`] for a precomputed descending spectrum.
pub fn analyze_eigenvalues(
    eigenvalues: &[f64],
    n: usize,
    m: usize,
    eta: f64,
    transposed: bool,
) -> Result<EstimationReport> {
    let beta = n as f64 / m as f64;
    let edge = bulk_edges(beta).1;
    let indices = detect_outliers(eigenvalues, beta, eta)?;
    let mut outliers = Vec::with_capacity(indices.len());
    for &i in &indices {
        let lambda = eigenvalues[i];
        // Only reachable when the threshold sits below the edge (large eta * beta).
        let Ok((tau_hat, theta_hat)) = estimate_tau(lambda, beta) else {
            continue;
        };
        let near = |j: usize| eigenvalues.get(j).is_some_and(|l| (l - lambda).abs() <= TIE_TOLERANCE);
        let tie_warning = (i > 0 && near(i - 1)) || near(i + 1);
        outliers.push(Outlier {
            index: i,
            lambda,
            centered: (lambda - 1.0) / beta.sqrt(),
            tau_hat,
            theta_hat,
            cosine_hat: cosine_left(tau_hat),
            right_scale: beta.powf(0.25),
            tie_warning,
        });
    }
    let above_edge = eigenvalues.iter().filter(|l| **l > edge).count();
    Ok(EstimationReport {
        n,
        m,
        beta,
        eta,
        edge,
        threshold: detection_threshold(beta, eta),
        transposed,
        subcritical_count: above_edge.saturating_sub(outliers.len()),
        outliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictions::lambda_bar;

    #[test]
    fn detection_examples() {
        assert!(detect_outliers(&[1.2, 1.1, 0.9], 0.01, 0.5).unwrap().is_empty());
        assert_eq!(detect_outliers(&[1.26, 1.19, 1.0], 0.01, 0.5).unwrap(), vec![0]);
        assert!(detect_outliers(&[1.26], 0.01, 0.0).is_err());
        assert!(detect_outliers(&[1.26], 0.01, -1.0).is_err());
    }

    #[test]
    fn detection_stops_at_first_gap() {
        // A later eigenvalue above the threshold is not reported.
        assert_eq!(detect_outliers(&[1.5, 1.2, 1.4], 0.01, 0.5).unwrap(), vec![0]);
    }

    #[test]
    fn estimate_tau_example() {
        let (tau, theta) = estimate_tau(1.26, 0.01).unwrap();
        assert!((theta * theta - 0.2).abs() < 1e-12);
        assert!((tau - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn estimate_tau_rejects_edge() {
        assert!(estimate_tau(1.21, 0.01).is_err());
        assert!(estimate_tau(1.0, 0.01).is_err());
    }

    #[test]
    fn estimate_tau_inverts_lambda_bar() {
        for beta in [0.1, 0.01] {
            for tau in [1.2, 1.6, 2.0, 3.0] {
                let lb = lambda_bar(tau * f64::powf(beta, 0.25), beta).unwrap();
                let (t, th) = estimate_tau(lb, beta).unwrap();
                assert!((t - tau).abs() < 1e-10 * tau, "{t} vs {tau}");
                assert!(((lambda_bar(th, beta).unwrap() - lb) / lb).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn report_from_spectrum() {
        let eig = [1.26, 1.22, 1.19, 1.0];
        let r = analyze_eigenvalues(&eig, 100, 10_000, 0.5, false).unwrap();
        assert_eq!(r.outliers.len(), 1);
        assert!((r.outliers[0].tau_hat - 2f64.sqrt()).abs() < 1e-10);
        assert_eq!(r.subcritical_count, 1);
        assert!(r.outliers.iter().all(|o| o.tau_hat > 1.0 && o.centered >= 2.5));
    }

    #[test]
    fn tall_input_is_transposed() {
        let x = DMatrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64).sin());
        let r = analyze(&x, 0.5).unwrap();
        assert!(r.transposed);
        assert_eq!((r.n, r.m), (3, 7));
    }
}
