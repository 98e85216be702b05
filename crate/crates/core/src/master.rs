//! The `2r x 2r` master matrices whose singular points locate outlier
//! eigenvalues, and contour certification of their roots.
//!
//! Block layout (all blocks `r x r`):
//!
//! ```text
//! [ sqrt(z) U' G U                     (1/sqrt(m)) U' G X V + Theta^{-1} ]
//! [ (1/sqrt(m)) V' X' G U + Theta^{-1}  sqrt(z) V' (X'X/m - z)^{-1} V    ]
//! ```
//!
//! with `G = (S - z)^{-1}` and `S = X X' / m` the noise covariance. The
//! semi-empirical and deterministic versions replace the resolvent quadratic
//! forms by the empirical and Marchenko-Pastur Stieltjes transforms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::SpikedSample;
use crate::error::{Error, Result};
use crate::mp::{bulk_edges, mp_stieltjes};
use crate::predictions::lambda_bar;
use crate::spectra::{eigen_desc, eigenvalues_desc, empirical_stieltjes, sample_covariance, C64};

/// Distance below which an evaluation point counts as an eigenvalue of `S`.
pub const RESOLVENT_POLE_TOLERANCE: f64 = 1e-12;

/// Default contour radius exponent: radius `n^{-ell} sqrt(beta)`.
pub const DEFAULT_ELL: f64 = 0.2;

/// Default number of contour nodes.
pub const DEFAULT_NODES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// Built from the noise resolvent and the signal vectors.
    Empirical,
    /// Built from the empirical Stieltjes transform of the noise.
    SemiEmpirical,
    /// Built from the Marchenko-Pastur Stieltjes transform.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterMatrix {
    pub entries: DMatrix<C64>,
    pub kind: MatrixKind,
    pub z: C64,
    pub beta: f64,
    pub theta: Vec<f64>,
}

impl MasterMatrix {
    pub fn r(&self) -> usize {
        self.theta.len()
    }

    pub fn determinant(&self) -> C64 {
        if self.entries.is_empty() {
            return C64::new(1.0, 0.0);
        }
        self.entries.clone().determinant()
    }
}

fn check_thetas(theta: &[f64]) -> Result<()> {
    if let Some(t) = theta.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::validation(format!(
            "signal strengths must be positive (got {t}); drop zero spikes instead"
        )));
    }
    Ok(())
}

/// Matrix with scalar diagonal blocks `upper I`, `lower I` and off-diagonal
/// blocks `Theta^{-1}`.
fn diagonal_block_matrix(theta: &[f64], upper: C64, lower: C64) -> DMatrix<C64> {
    let r = theta.len();
    let mut m = DMatrix::from_element(2 * r, 2 * r, C64::new(0.0, 0.0));
    for (i, t) in theta.iter().enumerate() {
        m[(i, i)] = upper;
        m[(r + i, r + i)] = lower;
        m[(i, r + i)] = C64::new(1.0 / t, 0.0);
        m[(r + i, i)] = C64::new(1.0 / t, 0.0);
    }
    m
}

fn blocks_from_stieltjes(s: C64, z: C64, beta: f64) -> (C64, C64) {
    let rz = z.sqrt();
    (rz * s, beta * rz * s - (1.0 - beta) / rz)
}

/// Deterministic master matrix from the Marchenko-Pastur transform.
pub fn build_m_bar(theta: &[f64], beta: f64, z: C64) -> Result<MasterMatrix> {
    check_thetas(theta)?;
    let (s, _) = mp_stieltjes(z, beta)?;
    let (upper, lower) = blocks_from_stieltjes(s, z, beta);
    Ok(MasterMatrix {
        entries: diagonal_block_matrix(theta, upper, lower),
        kind: MatrixKind::Deterministic,
        z,
        beta,
        theta: theta.to_vec(),
    })
}

/// Semi-empirical master matrix from the noise eigenvalues.
pub fn build_m_semi(theta: &[f64], noise_eigenvalues: &[f64], beta: f64, z: C64) -> Result<MasterMatrix> {
    check_thetas(theta)?;
    let (s, _) = empirical_stieltjes(noise_eigenvalues, z)?;
    let (upper, lower) = blocks_from_stieltjes(s, z, beta);
    Ok(MasterMatrix {
        entries: diagonal_block_matrix(theta, upper, lower),
        kind: MatrixKind::SemiEmpirical,
        z,
        beta,
        theta: theta.to_vec(),
    })
}

/// Spectral factorization of the noise reused across evaluation points.
///
/// With `S = Q diag(lambda) Q'`, every block of the empirical master matrix
/// is a weighted sum over eigenvalues of products of rows of `Q'U` and
/// `Q'XV`, so each evaluation costs `O(n r^2)`. The lower-right block uses
/// `(X'X/m - z)^{-1} = -(1/z)(I - X'(S - z)^{-1}X/m)`, which avoids any
/// `m x m` work.
#[derive(Debug, Clone)]
pub struct NoiseResolvent {
    eigenvalues: Vec<f64>,
    qt_u: DMatrix<f64>,
    qt_xv: DMatrix<f64>,
    vt_v: DMatrix<f64>,
    theta: Vec<f64>,
    m: usize,
    beta: f64,
}

impl NoiseResolvent {
    pub fn new(sample: &SpikedSample) -> Result<Self> {
        check_thetas(&sample.theta)?;
        if sample.r() == 0 {
            return Err(Error::validation("master matrix needs at least one spike"));
        }
        let cov = sample_covariance(&sample.x);
        let (eigenvalues, q) = eigen_desc(&cov);
        let xv = &sample.x * &sample.v;
        Ok(NoiseResolvent {
            eigenvalues,
            qt_u: q.tr_mul(&sample.u),
            qt_xv: q.tr_mul(&xv),
            vt_v: sample.v.tr_mul(&sample.v),
            theta: sample.theta.clone(),
            m: sample.m(),
            beta: sample.beta(),
        })
    }

    /// Eigenvalues of the noise covariance, descending.
    pub fn noise_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    fn weights(&self, z: C64) -> Result<Vec<C64>> {
        self.eigenvalues
            .iter()
            .map(|&l| {
                let d = C64::new(l, 0.0) - z;
                if d.norm() <= RESOLVENT_POLE_TOLERANCE {
                    Err(Error::Pole { z: z.to_string(), pole: l, distance: d.norm() })
                } else {
                    Ok(d.inv())
                }
            })
            .collect()
    }

    /// Empirical master matrix at `z`.
    pub fn m_tilde(&self, z: C64) -> Result<MasterMatrix> {
        let r = self.theta.len();
        let w = self.weights(z)?;
        let zero = C64::new(0.0, 0.0);
        let mut uu = DMatrix::from_element(r, r, zero);
        let mut ux = DMatrix::from_element(r, r, zero);
        let mut xx = DMatrix::from_element(r, r, zero);
        for (alpha, wa) in w.iter().enumerate() {
            for i in 0..r {
                let a_i = self.qt_u[(alpha, i)];
                let b_i = self.qt_xv[(alpha, i)];
                for j in 0..r {
                    uu[(i, j)] += wa * (a_i * self.qt_u[(alpha, j)]);
                    ux[(i, j)] += wa * (a_i * self.qt_xv[(alpha, j)]);
                    xx[(i, j)] += wa * (b_i * self.qt_xv[(alpha, j)]);
                }
            }
        }
        let rz = z.sqrt();
        let inv_sqrt_m = 1.0 / (self.m as f64).sqrt();
        let inv_m = 1.0 / self.m as f64;
        let mut entries = DMatrix::from_element(2 * r, 2 * r, zero);
        for i in 0..r {
            for j in 0..r {
                let mut off = ux[(i, j)] * inv_sqrt_m;
                if i == j {
                    off += 1.0 / self.theta[i];
                }
                entries[(i, j)] = rz * uu[(i, j)];
                entries[(i, r + j)] = off;
                entries[(r + j, i)] = off;
                let lower = C64::new(self.vt_v[(i, j)], 0.0) - xx[(i, j)] * inv_m;
                entries[(r + i, r + j)] = -lower / rz;
            }
        }
        Ok(MasterMatrix {
            entries,
            kind: MatrixKind::Empirical,
            z,
            beta: self.beta,
            theta: self.theta.clone(),
        })
    }

    pub fn det_m_tilde(&self, z: C64) -> Result<C64> {
        Ok(self.m_tilde(z)?.determinant())
    }
}

/// Empirical master matrix of a sample at `z`.
pub fn build_m_tilde(sample: &SpikedSample, z: C64) -> Result<MasterMatrix> {
    NoiseResolvent::new(sample)?.m_tilde(z)
}

/// Scales the upper-left block by `sqrt(beta)` and the off-diagonal blocks by
/// `beta^(1/4)`; the determinant picks up a factor `beta^(r/2)`.
pub fn rescale_blocks(m: &MasterMatrix) -> MasterMatrix {
    let r = m.r();
    let quarter = m.beta.powf(0.25);
    let half = m.beta.sqrt();
    let mut out = m.clone();
    for i in 0..2 * r {
        for j in 0..2 * r {
            let factor = match (i < r, j < r) {
                (true, true) => half,
                (false, false) => 1.0,
                _ => quarter,
            };
            out.entries[(i, j)] *= factor;
        }
    }
    out
}

/// `(Theta V' v_i ; Theta U' u_i)` for an empirical singular pair. At an
/// outlier eigenvalue it lies in the kernel of the empirical master matrix.
pub fn kernel_vector(
    sample: &SpikedSample,
    left: &nalgebra::DVector<f64>,
    right: &nalgebra::DVector<f64>,
) -> nalgebra::DVector<C64> {
    let r = sample.r();
    let vr = sample.v.tr_mul(right);
    let ul = sample.u.tr_mul(left);
    nalgebra::DVector::from_fn(2 * r, |k, _| {
        let value = if k < r { sample.theta[k] * vr[k] } else { sample.theta[k - r] * ul[k - r] };
        C64::new(value, 0.0)
    })
}

/// Counts zeros minus poles of `f` inside the circle `|z - center| = radius`
/// by accumulating the argument change over `nodes` equally spaced points.
pub fn winding_count<F>(f: F, center: C64, radius: f64, nodes: usize) -> Result<i64>
where
    F: Fn(C64) -> Result<C64>,
{
    if nodes < 64 {
        return Err(Error::validation(format!("need at least 64 contour nodes, got {nodes}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::validation(format!("contour radius must be positive, got {radius}")));
    }
    let values: Vec<C64> = (0..nodes)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / nodes as f64;
            f(center + C64::from_polar(radius, angle))
        })
        .collect::<Result<_>>()?;
    let largest = values.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let smallest = values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if !largest.is_finite() || !(smallest > 1e-13 * largest) {
        return Err(Error::CertificationFailed(format!(
            "function nearly vanishes on the contour (min |f| = {smallest:e}, max |f| = {largest:e})"
        )));
    }
    let mut total = 0.0;
    let mut max_step = 0.0f64;
    for k in 0..nodes {
        let step = (values[(k + 1) % nodes] / values[k]).arg();
        max_step = max_step.max(step.abs());
        total += step;
    }
    if max_step > std::f64::consts::FRAC_PI_2 {
        return Err(Error::CertificationFailed(format!(
            "argument jumps by {max_step:.3} rad between nodes; contour under-resolved"
        )));
    }
    let turns = total / (2.0 * std::f64::consts::PI);
    let rounded = turns.round();
    if (turns - rounded).abs() >= 0.1 {
        return Err(Error::CertificationFailed(format!("non-integer winding {turns:.4}")));
    }
    Ok(rounded as i64)
}

/// Outcome of certifying one outlier root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCertificate {
    /// Zero-based spike index.
    pub spike_index: usize,
    pub center: f64,
    pub radius: f64,
    pub winding: i64,
    pub certified: bool,
    /// Matching empirical eigenvalue of the observed covariance.
    pub lambda_emp: f64,
    /// `|lambda_emp - center| / sqrt(beta)`.
    pub centered_distance: f64,
    pub attempts: usize,
}

const RADIUS_FACTORS: [f64; 3] = [1.0, 1.07, 0.93];

/// Certifies each supercritical spike of `sample` by counting roots of the
/// empirical master determinant on the circle of radius `n^{-ell} sqrt(beta)`
/// around its predicted location.
pub fn certify_outliers(sample: &SpikedSample, ell: f64, nodes: usize) -> Result<Vec<RootCertificate>> {
    if !(ell > 0.0 && ell < 0.25) {
        return Err(Error::validation(format!("ell must lie in (0, 1/4), got {ell}")));
    }
    let beta = sample.beta();
    let centers: Vec<(usize, f64)> = sample
        .theta
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| lambda_bar(t, beta).ok().map(|c| (i, c)))
        .collect();
    if centers.is_empty() {
        return Ok(Vec::new());
    }
    let resolvent = NoiseResolvent::new(sample)?;
    let observed = eigenvalues_desc(&sample_covariance(&sample.x_tilde));
    let base_radius = (sample.n() as f64).powf(-ell) * beta.sqrt();
    let edge = bulk_edges(beta).1;
    let mut certificates = Vec::with_capacity(centers.len());
    for (rank, &(i, center)) in centers.iter().enumerate() {
        let mut last_err = None;
        let mut done = None;
        for (attempt, factor) in RADIUS_FACTORS.iter().enumerate() {
            let radius = base_radius * factor;
            // A noise eigenvalue on the contour is a pole of the determinant.
            let clearance = 4.0 * radius * std::f64::consts::PI / nodes as f64;
            let hits_pole = resolvent
                .noise_eigenvalues()
                .iter()
                .any(|l| ((l - center).abs() - radius).abs() < clearance);
            if hits_pole {
                last_err = Some(Error::CertificationFailed(format!(
                    "contour of radius {radius:e} passes through a noise eigenvalue"
                )));
                continue;
            }
            match winding_count(|z| resolvent.det_m_tilde(z), C64::new(center, 0.0), radius, nodes) {
                Ok(w) => {
                    done = Some((w, radius, attempt + 1));
                    break;
                }
                Err(e) if e.is_numerical() => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        let (winding, radius, attempts) = match done {
            Some(d) => d,
            None => return Err(last_err.unwrap_or_else(|| Error::CertificationFailed("no attempts".into()))),
        };
        let lambda_emp = observed.get(rank).copied().unwrap_or(edge);
        certificates.push(RootCertificate {
            spike_index: i,
            center,
            radius,
            winding,
            certified: winding == 1,
            lambda_emp,
            centered_distance: (lambda_emp - center).abs() / beta.sqrt(),
            attempts,
        });
    }
    Ok(certificates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mp::{d_transform, d_transform_inverse};

    #[test]
    fn m_bar_root_at_lambda_bar() {
        let beta = 0.01;
        let theta = 0.2f64.sqrt();
        let z = d_transform_inverse(1.0 / (theta * theta), beta).unwrap();
        let m = build_m_bar(&[theta], beta, C64::new(z, 0.0)).unwrap();
        assert!(m.determinant().norm() < 1e-10);
    }

    #[test]
    fn m_bar_two_by_two() {
        let m = build_m_bar(&[1.0], 1.0, C64::new(5.0, 0.0)).unwrap();
        let d = d_transform(C64::new(5.0, 0.0), 1.0).unwrap();
        let entries = &m.entries;
        let direct = entries[(0, 0)] * entries[(1, 1)] - entries[(0, 1)] * entries[(1, 0)];
        assert!((m.determinant() - (d - 1.0)).norm() < 1e-12);
        assert!((direct - (d - 1.0)).norm() < 1e-12);
    }

    #[test]
    fn m_bar_huge_second_spike() {
        let beta = 0.05;
        let z = C64::new(2.0, 0.0);
        let m = build_m_bar(&[0.9, 1e9], beta, z).unwrap();
        let d = d_transform(z, beta).unwrap();
        let expected = (d - 1.0 / 0.81) * d;
        assert!((m.determinant() - expected).norm() < 1e-10);
    }

    #[test]
    fn zero_theta_rejected() {
        assert!(build_m_bar(&[1.0, 0.0], 0.1, C64::new(3.0, 0.0)).is_err());
    }

    #[test]
    fn m_bar_block_structure() {
        let m = build_m_bar(&[1.5, 0.7], 0.2, C64::new(3.0, 0.5)).unwrap();
        assert_eq!(m.entries[(0, 2)], C64::new(1.0 / 1.5, 0.0));
        assert_eq!(m.entries[(3, 1)], C64::new(1.0 / 0.7, 0.0));
        assert_eq!(m.entries[(0, 3)], C64::new(0.0, 0.0));
        assert_eq!(m.entries, m.entries.transpose());
    }

    #[test]
    fn rescale_identity_cases() {
        let m = build_m_bar(&[1.2], 1.0, C64::new(6.0, 0.0)).unwrap();
        assert_eq!(rescale_blocks(&m).entries, m.entries);
        let mut zero = m.clone();
        zero.beta = 0.3;
        zero.entries.fill(C64::new(0.0, 0.0));
        assert_eq!(rescale_blocks(&zero).entries, zero.entries);
        let m = build_m_bar(&[0.5], 0.09, C64::new(2.0, 0.0)).unwrap();
        let scaled = rescale_blocks(&m);
        let lhs = m.determinant();
        let rhs = scaled.determinant() / 0.09f64.sqrt();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn winding_simple_functions() {
        let c = C64::new(1.3, 0.2);
        assert_eq!(winding_count(|z| Ok(z - c), c, 0.1, 64).unwrap(), 1);
        assert_eq!(winding_count(|z| Ok(z - c), c + 1.0, 0.1, 64).unwrap(), 0);
        assert_eq!(winding_count(|z| Ok((z - c) * (z - c)), c, 0.1, 64).unwrap(), 2);
        assert!(winding_count(|z| Ok(z - c), c, 0.1, 32).is_err());
        assert!(winding_count(|z| Ok(z - c), c + 0.1, 0.1, 64).is_err());
    }

    #[test]
    fn winding_counts_poles_negatively() {
        let c = C64::new(0.0, 0.0);
        assert_eq!(winding_count(|z| Ok(1.0 / (z - c)), c, 1.0, 128).unwrap(), -1);
    }
}
