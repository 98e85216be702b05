//! Self-checks run by `verify` and by the test suites: exact analytic
//! identities, and a brute-force comparison of master-matrix roots against a
//! direct eigendecomposition on tiny instances.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{assemble_spiked, sample_noise, sample_signal_vectors, NoiseFamily, SignalFamily};
use crate::error::Result;
use crate::estimator::estimate_tau;
use crate::master::{build_m_bar, build_m_semi, kernel_vector, rescale_blocks, MasterMatrix, NoiseResolvent};
use crate::mp::{bulk_edges, d_transform, d_transform_inverse, mp_stieltjes};
use crate::predictions::lambda_bar;
use crate::rng::{self, Purpose};
use crate::spectra::{eigen_desc, sample_covariance, C64};

/// Result of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &str, errors: &[f64], tolerance: f64) -> Self {
        let max_error = errors.iter().copied().fold(0.0f64, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) });
        CheckResult {
            name: name.to_string(),
            cases: errors.len(),
            max_error,
            tolerance,
            passed: !errors.is_empty() && max_error < tolerance,
        }
    }
}

fn beta_grid(count: usize) -> Vec<f64> {
    (0..count).map(|k| 10f64.powf(-4.0 + 4.0 * k as f64 / (count - 1) as f64)).collect()
}

/// Relative round-trip error of `D(D^{-1}(t)) = t` on 20 aspect ratios times
/// 40 values of `t` spread over `(0, beta^{-1/2})`.
pub fn check_d_round_trip() -> Result<CheckResult> {
    let mut errors = Vec::with_capacity(800);
    for beta in beta_grid(20) {
        let top = beta.powf(-0.5);
        for k in 0..40 {
            let t = top * (0.005 + 0.99 * k as f64 / 39.0);
            let z = d_transform_inverse(t, beta)?;
            let back = d_transform(C64::new(z, 0.0), beta)?;
            errors.push((back - t).norm() / t);
        }
    }
    Ok(CheckResult::new("D round trip (relative)", &errors, 1e-9))
}

fn off_bulk_points(beta: f64) -> Vec<C64> {
    let (a, b) = bulk_edges(beta);
    let mut pts = Vec::new();
    for k in 1..=8 {
        let step = k as f64 * 0.25;
        pts.push(C64::new(b + step * beta.sqrt(), 0.0));
        pts.push(C64::new(b * (1.0 + step), 0.0));
        pts.push(C64::new(0.5 * (a + b), step));
        pts.push(C64::new(a * 0.5, -0.1 * step));
        pts.push(C64::new(-step, 0.0));
    }
    pts
}

/// Residual of `beta z s^2 + (z + beta - 1) s + 1 = 0` away from the bulk.
pub fn check_mp_quadratic() -> Result<CheckResult> {
    let mut errors = Vec::new();
    for beta in beta_grid(12) {
        for z in off_bulk_points(beta) {
            let (s, _) = mp_stieltjes(z, beta)?;
            let residual = beta * z * s * s + (z + beta - 1.0) * s + 1.0;
            errors.push(residual.norm());
        }
    }
    Ok(CheckResult::new("Marchenko-Pastur quadratic residual", &errors, 1e-12))
}

/// `det M_bar(z) = prod_i (D(z) - theta_i^-2)` on real points right of the bulk.
pub fn check_determinant_factorization() -> Result<CheckResult> {
    let mut errors = Vec::new();
    let theta_sets: [&[f64]; 4] = [&[0.7], &[1.3, 0.4], &[2.0, 1.1, 0.6], &[5.0, 0.9, 0.5, 0.2]];
    for beta in beta_grid(8) {
        let start = bulk_edges(beta).1 * 1.01;
        for thetas in theta_sets {
            let scaled: Vec<f64> = thetas.iter().map(|t| t * beta.powf(0.25)).collect();
            for k in 0..25 {
                let z = C64::new(start * (1.0 + 0.1 * k as f64), 0.0);
                let det = build_m_bar(&scaled, beta, z)?.determinant();
                let d = d_transform(z, beta)?;
                let product = scaled.iter().fold(C64::new(1.0, 0.0), |acc, t| acc * (d - 1.0 / (t * t)));
                errors.push((det - product).norm() / det.norm().max(1.0));
            }
        }
    }
    Ok(CheckResult::new("M_bar determinant factorization", &errors, 1e-10))
}

fn rescale_error(m: &MasterMatrix) -> f64 {
    let det = m.determinant();
    let scaled = rescale_blocks(m).determinant();
    let expected = det * m.beta.powf(m.r() as f64 / 2.0);
    (scaled - expected).norm() / expected.norm().max(f64::MIN_POSITIVE)
}

/// `det(rescaled) = beta^{r/2} det` for all three kinds of master matrix.
pub fn check_rescaling(seed: u64) -> Result<CheckResult> {
    let mut errors = Vec::new();
    for (case, &(n, m, r)) in [(20usize, 200usize, 1usize), (30, 120, 2), (12, 600, 3)].iter().enumerate() {
        let beta = n as f64 / m as f64;
        let theta: Vec<f64> = (0..r).map(|i| (2.5 - 0.6 * i as f64) * beta.powf(0.25)).collect();
        let (u, v) = sample_signal_vectors(n, m, r, SignalFamily::GaussianIid, seed, case as u64)?;
        let x = sample_noise(n, m, NoiseFamily::Gaussian, seed, case as u64)?;
        let sample = assemble_spiked(u, v, theta.clone(), x)?;
        let resolvent = NoiseResolvent::new(&sample)?;
        let edge = bulk_edges(beta).1;
        for k in 0..6 {
            let z = C64::new(edge * (1.2 + 0.3 * k as f64), 0.05 * k as f64);
            errors.push(rescale_error(&build_m_bar(&theta, beta, z)?));
            errors.push(rescale_error(&build_m_semi(&theta, resolvent.noise_eigenvalues(), beta, z)?));
            errors.push(rescale_error(&resolvent.m_tilde(z)?));
        }
    }
    Ok(CheckResult::new("determinant rescaling (relative)", &errors, 1e-12))
}

/// `estimate_tau(lambda_bar(theta)) = tau` above the threshold.
pub fn check_estimator_inverse() -> Result<CheckResult> {
    let mut errors = Vec::new();
    for beta in beta_grid(10) {
        for k in 0..20 {
            let tau = 1.05 + 0.25 * k as f64;
            let theta = tau * beta.powf(0.25);
            let lambda = lambda_bar(theta, beta)?;
            let (tau_hat, _) = estimate_tau(lambda, beta)?;
            errors.push((tau_hat - tau).abs() / tau);
        }
    }
    Ok(CheckResult::new("estimate_tau inverts lambda_bar (relative)", &errors, 1e-10))
}

/// All exact identities.
pub fn exact_identity_suite(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_d_round_trip()?,
        check_mp_quadratic()?,
        check_determinant_factorization()?,
        check_rescaling(seed)?,
        check_estimator_inverse()?,
    ])
}

/// Outcome of the brute-force comparison on one tiny instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyInstanceCheck {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    /// Eigenvalues of the observed covariance away from the noise spectrum.
    pub eigenvalues: Vec<f64>,
    /// Real roots of the empirical master determinant off the noise spectrum.
    pub roots: Vec<f64>,
    /// Largest mismatch between matched roots and eigenvalues; infinite if
    /// the counts differ.
    pub root_error: f64,
    /// Largest `|M(lambda) k|` over the matched eigenvalues.
    pub kernel_residual: f64,
}

/// Separation from the noise spectrum below which an eigenvalue is treated
/// as shared with it.
const SHARED_EIGENVALUE_GAP: f64 = 1e-7;

fn scan_nodes(lo: f64, hi: f64) -> Vec<f64> {
    let width = hi - lo;
    let mut nodes: Vec<f64> = (1..400).map(|k| lo + width * k as f64 / 400.0).collect();
    for k in 0..=120 {
        let offset = (width * 10f64.powf(-9.5 + 8.0 * k as f64 / 120.0)).max(1e-11);
        nodes.push(lo + offset);
        nodes.push(hi - offset);
    }
    nodes.retain(|z| *z > lo && *z < hi);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    nodes
}

fn real_det(resolvent: &NoiseResolvent, z: f64) -> Result<f64> {
    Ok(resolvent.det_m_tilde(C64::new(z, 0.0))?.re)
}

fn bisect(resolvent: &NoiseResolvent, mut a: f64, mut b: f64, mut fa: f64) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = real_det(resolvent, mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Real roots of `det M(z)` for `z > 0`, scanning each gap between poles.
pub fn real_master_roots(resolvent: &NoiseResolvent, upper: f64) -> Result<Vec<f64>> {
    let mut poles: Vec<f64> = resolvent.noise_eigenvalues().iter().copied().filter(|l| *l > 1e-12).collect();
    poles.push(0.0);
    poles.sort_by(f64::total_cmp);
    poles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    poles.push(upper.max(poles.last().copied().unwrap_or(0.0) * 2.0 + 1.0));
    let mut roots = Vec::new();
    for gap in poles.windows(2) {
        let nodes = scan_nodes(gap[0], gap[1]);
        let mut prev: Option<(f64, f64)> = None;
        for z in nodes {
            let f = real_det(resolvent, z)?;
            if let Some((zp, fp)) = prev {
                if f == 0.0 {
                    roots.push(z);
                } else if fp != 0.0 && (f > 0.0) != (fp > 0.0) {
                    roots.push(bisect(resolvent, zp, z, fp)?);
                }
            }
            prev = Some((z, f));
        }
    }
    Ok(roots)
}

fn random_tiny_instance(seed: u64, index: u64) -> Result<(usize, usize, crate::ensemble::SpikedSample)> {
    let mut rng = rng::stream(seed, Purpose::Auxiliary, index);
    let n = rng.random_range(2..=6usize);
    let m = rng.random_range(n..=10usize);
    let r = rng.random_range(1..=2usize).min(n);
    let beta = n as f64 / m as f64;
    let mut taus: Vec<f64> = (0..r).map(|_| rng.random_range(0.5..3.0)).collect();
    taus.sort_by(|a, b| b.total_cmp(a));
    let theta: Vec<f64> = taus.iter().map(|t| t * beta.powf(0.25)).collect();
    let (u, v) = sample_signal_vectors(n, m, r, SignalFamily::GaussianIid, seed, index)?;
    let x = sample_noise(n, m, NoiseFamily::Gaussian, seed, index)?;
    Ok((n, m, assemble_spiked(u, v, theta, x)?))
}

/// Brute-force comparison on instance `index` of the tiny ensemble
/// (`n <= 6`, `m <= 10`, `r <= 2`).
pub fn tiny_instance_check(seed: u64, index: u64) -> Result<TinyInstanceCheck> {
    let (n, m, sample) = random_tiny_instance(seed, index)?;
    let r = sample.r();
    let resolvent = NoiseResolvent::new(&sample)?;
    let noise = resolvent.noise_eigenvalues().to_vec();
    let (observed, vectors) = eigen_desc(&sample_covariance(&sample.x_tilde));

    let off_noise = |z: f64| noise.iter().all(|l| (z - l).abs() > SHARED_EIGENVALUE_GAP * z.abs().max(1.0));
    let mut eigenvalues: Vec<(f64, usize)> =
        observed.iter().enumerate().filter(|(_, l)| **l > 1e-10 && off_noise(**l)).map(|(k, l)| (*l, k)).collect();
    eigenvalues.sort_by(|a, b| a.0.total_cmp(&b.0));

    let trace: f64 = observed.iter().sum();
    let mut roots = real_master_roots(&resolvent, 1.5 * trace + 1.0)?;
    roots.retain(|z| off_noise(*z));

    let root_error = if roots.len() == eigenvalues.len() {
        roots
            .iter()
            .zip(&eigenvalues)
            .map(|(z, (l, _))| (z - l).abs() / l.abs().max(1.0))
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };

    let sqrt_m = (m as f64).sqrt();
    let mut kernel_residual = 0.0f64;
    for &(lambda, k) in &eigenvalues {
        let left = vectors.column(k).into_owned();
        let right = sample.x_tilde.tr_mul(&left) / (sqrt_m * lambda.sqrt());
        let kv = kernel_vector(&sample, &left, &right);
        let mt = resolvent.m_tilde(C64::new(lambda, 0.0))?;
        kernel_residual = kernel_residual.max((&mt.entries * kv).norm());
    }

    Ok(TinyInstanceCheck {
        n,
        m,
        r,
        eigenvalues: eigenvalues.into_iter().map(|(l, _)| l).collect(),
        roots,
        root_error,
        kernel_residual,
    })
}

/// Brute-force root and kernel checks over `instances` tiny instances.
pub fn brute_force_suite(seed: u64, instances: usize) -> Result<(Vec<TinyInstanceCheck>, Vec<CheckResult>)> {
    let checks: Vec<TinyInstanceCheck> =
        (0..instances as u64).map(|i| tiny_instance_check(seed, i)).collect::<Result<_>>()?;
    let root_errors: Vec<f64> = checks.iter().map(|c| c.root_error).collect();
    let kernel: Vec<f64> = checks.iter().map(|c| c.kernel_residual).collect();
    let summary = vec![
        CheckResult::new("master roots match observed eigenvalues", &root_errors, 1e-8),
        CheckResult::new("kernel vector residual", &kernel, 1e-6),
    ];
    Ok((checks, summary))
}
