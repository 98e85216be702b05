//! Spiked signal-plus-noise ensembles.
//!
//! A draw consists of an `n x m` noise matrix `X` with i.i.d. standardized
//! entries and a rank-`r` signal `sum_i theta_i u_i v_i'`. The observed matrix
//! is stored unscaled, `X_tilde = sqrt(m) * sum_i theta_i u_i v_i' + X`, so that
//! `X_tilde / sqrt(m)` is the usual normalized model.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Distribution of the i.i.d. noise entries. All families have mean 0 and
/// variance 1; all but `Gaussian` are "general" i.i.d. laws with finite
/// fourth moment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// Symmetric +/-1 signs.
    Rademacher,
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    Uniform,
    /// Student t with `dof > 4` degrees of freedom, rescaled to unit variance.
    StudentT(f64),
}

impl NoiseFamily {
    pub fn is_gaussian(&self) -> bool {
        matches!(self, NoiseFamily::Gaussian)
    }

    fn validate(&self) -> Result<()> {
        if let NoiseFamily::StudentT(dof) = *self {
            if !(dof.is_finite() && dof > 4.0) {
                return Err(Error::validation(format!(
                    "student_t noise needs dof > 4 for a finite fourth moment, got {dof}"
                )));
            }
        }
        Ok(())
    }

    /// Fourth moment `E X^4` of the standardized law.
    pub fn fourth_moment(&self) -> f64 {
        match *self {
            NoiseFamily::Gaussian => 3.0,
            NoiseFamily::Rademacher => 1.0,
            NoiseFamily::Uniform => 1.8,
            NoiseFamily::StudentT(dof) => 3.0 + 6.0 / (dof - 4.0),
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseFamily::Gaussian => write!(f, "gaussian"),
            NoiseFamily::Rademacher => write!(f, "rademacher"),
            NoiseFamily::Uniform => write!(f, "uniform"),
            NoiseFamily::StudentT(dof) => write!(f, "student_t:{dof}"),
        }
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let family = match s.as_str() {
            "gaussian" | "normal" => NoiseFamily::Gaussian,
            "rademacher" => NoiseFamily::Rademacher,
            "uniform" => NoiseFamily::Uniform,
            other => {
                let dof = other
                    .strip_prefix("student_t:")
                    .or_else(|| other.strip_prefix("t:"))
                    .ok_or_else(|| Error::validation(format!("unknown noise family '{other}'")))?;
                let dof: f64 = dof
                    .parse()
                    .map_err(|_| Error::validation(format!("bad degrees of freedom '{dof}'")))?;
                NoiseFamily::StudentT(dof)
            }
        };
        family.validate()?;
        Ok(family)
    }
}

impl Serialize for NoiseFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NoiseFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How the signal vectors are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalFamily {
    /// Columns `G / sqrt(dim)` with i.i.d. standard normal `G`.
    #[default]
    GaussianIid,
    /// Orthonormal columns, from orthogonalizing a Gaussian matrix.
    Orthonormal,
}

impl FromStr for SignalFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian_iid" | "gaussian" | "iid" => Ok(SignalFamily::GaussianIid),
            "orthonormal" | "orthogonal" => Ok(SignalFamily::Orthonormal),
            other => Err(Error::validation(format!("unknown signal family '{other}'"))),
        }
    }
}

impl fmt::Display for SignalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalFamily::GaussianIid => write!(f, "gaussian_iid"),
            SignalFamily::Orthonormal => write!(f, "orthonormal"),
        }
    }
}

/// Full description of one spiked ensemble.
///
/// Serializes to a flat JSON object with keys
/// `n, m, r, taus, eps, noise_family, signal_family, seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelConfig")]
pub struct ModelConfig {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub taus: Vec<f64>,
    pub eps: Vec<f64>,
    pub noise_family: NoiseFamily,
    pub signal_family: SignalFamily,
    pub seed: u64,
}

#[derive(Deserialize)]
struct RawModelConfig {
    n: usize,
    m: usize,
    r: Option<usize>,
    #[serde(default)]
    taus: Vec<f64>,
    #[serde(default)]
    eps: Vec<f64>,
    #[serde(default)]
    noise_family: NoiseFamily,
    #[serde(default)]
    signal_family: SignalFamily,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<RawModelConfig> for ModelConfig {
    type Error = Error;

    fn try_from(raw: RawModelConfig) -> Result<Self> {
        let r = raw.r.unwrap_or(raw.taus.len());
        if r != raw.taus.len() {
            return Err(Error::validation(format!(
                "r = {r} but {} taus were given",
                raw.taus.len()
            )));
        }
        let eps = if raw.eps.is_empty() { vec![0.0; r] } else { raw.eps };
        let cfg = ModelConfig {
            n: raw.n,
            m: raw.m,
            r,
            taus: raw.taus,
            eps,
            noise_family: raw.noise_family,
            signal_family: raw.signal_family,
            seed: raw.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ModelConfig {
    /// Gaussian noise, Gaussian i.i.d. signal vectors, zero perturbations.
    pub fn new(n: usize, m: usize, taus: Vec<f64>) -> Result<Self> {
        let r = taus.len();
        let cfg = ModelConfig {
            n,
            m,
            r,
            taus,
            eps: vec![0.0; r],
            noise_family: NoiseFamily::Gaussian,
            signal_family: SignalFamily::GaussianIid,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_eps(mut self, eps: Vec<f64>) -> Result<Self> {
        self.eps = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_noise(mut self, family: NoiseFamily) -> Result<Self> {
        self.noise_family = family;
        self.validate()?;
        Ok(self)
    }

    pub fn with_signal(mut self, family: SignalFamily) -> Result<Self> {
        self.signal_family = family;
        self.validate()?;
        Ok(self)
    }

    /// Aspect ratio `n / m`.
    pub fn beta(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::validation("n and m must be positive"));
        }
        if self.m < self.n {
            return Err(Error::validation(format!(
                "need m >= n (transpose the data instead), got n = {}, m = {}",
                self.n, self.m
            )));
        }
        if self.r != self.taus.len() || self.r != self.eps.len() {
            return Err(Error::validation(format!(
                "r = {} must match taus ({}) and eps ({})",
                self.r,
                self.taus.len(),
                self.eps.len()
            )));
        }
        if self.r > self.n.min(self.m) {
            return Err(Error::validation(format!("rank {} exceeds min(n, m)", self.r)));
        }
        validate_taus(&self.taus)?;
        if let Some(e) = self.eps.iter().find(|e| !e.is_finite() || **e <= -1.0) {
            return Err(Error::validation(format!("perturbation {e} must be finite and > -1")));
        }
        self.noise_family.validate()?;
        if self.signal_family == SignalFamily::Orthonormal && !self.noise_family.is_gaussian() {
            return Err(Error::validation(
                "orthonormal signal vectors are only modeled with Gaussian noise",
            ));
        }
        Ok(())
    }

    /// Signal strengths `theta_i` for this configuration.
    pub fn thetas(&self) -> Result<Vec<f64>> {
        calibrate_signal_strengths(&self.taus, &self.eps, self.beta())
    }

    /// Draws the `index`-th sample of this ensemble.
    pub fn sample(&self, index: u64) -> Result<SpikedSample> {
        self.validate()?;
        let theta = self.thetas()?;
        let (u, v) =
            sample_signal_vectors(self.n, self.m, self.r, self.signal_family, self.seed, index)?;
        let x = sample_noise(self.n, self.m, self.noise_family, self.seed, index)?;
        assemble_spiked(u, v, theta, x)
    }
}

fn validate_taus(taus: &[f64]) -> Result<()> {
    if let Some(t) = taus.iter().find(|t| !t.is_finite() || **t <= 0.0) {
        return Err(Error::validation(format!(
            "spike parameters must be positive and finite, got {t}"
        )));
    }
    if let Some(w) = taus.windows(2).find(|w| w[0] <= w[1]) {
        return Err(Error::validation(format!(
            "taus must be strictly decreasing, got {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// `theta_i = tau_i * beta^(1/4) * (1 + eps_i)`.
pub fn calibrate_signal_strengths(taus: &[f64], eps: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::validation(format!("beta must lie in (0, 1], got {beta}")));
    }
    if taus.len() != eps.len() {
        return Err(Error::validation("taus and eps differ in length"));
    }
    validate_taus(taus)?;
    if eps.iter().any(|e| !e.is_finite()) {
        return Err(Error::validation("perturbations must be finite"));
    }
    let scale = beta.powf(0.25);
    Ok(taus.iter().zip(eps).map(|(t, e)| t * scale * (1.0 + e)).collect())
}

fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Draws the left (`n x r`) and right (`m x r`) signal vectors.
pub fn sample_signal_vectors(
    n: usize,
    m: usize,
    r: usize,
    family: SignalFamily,
    seed: u64,
    index: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if r > n.min(m) {
        return Err(Error::validation(format!("rank {r} exceeds min({n}, {m})")));
    }
    let gu = gaussian_matrix(n, r, &mut rng::stream(seed, Purpose::LeftSignal, index));
    let gv = gaussian_matrix(m, r, &mut rng::stream(seed, Purpose::RightSignal, index));
    if r == 0 {
        return Ok((gu, gv));
    }
    Ok(match family {
        SignalFamily::GaussianIid => (gu / (n as f64).sqrt(), gv / (m as f64).sqrt()),
        SignalFamily::Orthonormal => (gu.qr().q(), gv.qr().q()),
    })
}

/// Draws an `n x m` matrix of i.i.d. standardized noise.
pub fn sample_noise(
    n: usize,
    m: usize,
    family: NoiseFamily,
    seed: u64,
    index: u64,
) -> Result<DMatrix<f64>> {
    if n == 0 || m == 0 {
        return Err(Error::validation("noise dimensions must be positive"));
    }
    family.validate()?;
    let mut rng = rng::stream(seed, Purpose::Noise, index);
    Ok(match family {
        NoiseFamily::Gaussian => gaussian_matrix(n, m, &mut rng),
        NoiseFamily::Rademacher => {
            DMatrix::from_fn(n, m, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
        }
        NoiseFamily::Uniform => {
            let half = 3f64.sqrt();
            DMatrix::from_fn(n, m, |_, _| rng.random_range(-half..half))
        }
        NoiseFamily::StudentT(dof) => {
            let t = StudentT::new(dof).map_err(|e| Error::validation(e.to_string()))?;
            let scale = ((dof - 2.0) / dof).sqrt();
            DMatrix::from_fn(n, m, |_, _| scale * t.sample(&mut rng))
        }
    })
}

/// One realization of the spiked model.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikedSample {
    /// `n x r`, columns are the left signal vectors.
    pub u: DMatrix<f64>,
    /// `m x r`, columns are the right signal vectors.
    pub v: DMatrix<f64>,
    pub theta: Vec<f64>,
    /// Noise, `n x m`, unscaled.
    pub x: DMatrix<f64>,
    /// Observation `sqrt(m) * U diag(theta) V' + X`, unscaled.
    pub x_tilde: DMatrix<f64>,
}

impl SpikedSample {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn r(&self) -> usize {
        self.theta.len()
    }

    pub fn beta(&self) -> f64 {
        self.n() as f64 / self.m() as f64
    }

    /// `P = sum_i theta_i u_i v_i'`.
    pub fn signal(&self) -> DMatrix<f64> {
        let scaled_u = &self.u * DMatrix::from_diagonal(&DVector::from_column_slice(&self.theta));
        scaled_u * self.v.transpose()
    }
}

/// Forms `X_tilde = X + sqrt(m) * sum_i theta_i u_i v_i'`.
pub fn assemble_spiked(
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    theta: Vec<f64>,
    x: DMatrix<f64>,
) -> Result<SpikedSample> {
    let (n, m) = x.shape();
    let r = theta.len();
    if u.shape() != (n, r) || v.shape() != (m, r) {
        return Err(Error::validation(format!(
            "shape mismatch: X is {n}x{m}, U is {}x{}, V is {}x{}, {r} strengths",
            u.nrows(),
            u.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    let mut x_tilde = x.clone();
    if r > 0 {
        let scaled_u = &u * DMatrix::from_diagonal(&DVector::from_column_slice(&theta));
        x_tilde.gemm((m as f64).sqrt(), &scaled_u, &v.transpose(), 1.0);
    }
    Ok(SpikedSample { u, v, theta, x, x_tilde })
}

/// Result of truncating and re-standardizing a noise matrix.
#[derive(Debug, Clone)]
pub struct Truncation {
    pub matrix: DMatrix<f64>,
    /// Entries with `|x| > threshold` were zeroed before re-standardizing.
    pub threshold: f64,
    pub truncated: usize,
    pub mean: f64,
    pub sd: f64,
}

/// `delta_n = max((nm)^(-1/16), 1 / ln(nm))`.
pub fn truncation_delta(n: usize, m: usize) -> f64 {
    let nm = n as f64 * m as f64;
    nm.powf(-1.0 / 16.0).max(1.0 / nm.ln())
}

/// Truncation level `delta_n * (nm)^(1/4)`.
pub fn truncation_threshold(n: usize, m: usize) -> f64 {
    let nm = n as f64 * m as f64;
    truncation_delta(n, m) * nm.powf(0.25)
}

/// Zeroes entries above the truncation level, then centers and scales with
/// the empirical mean and standard deviation of the truncated entries.
pub fn truncate_normalize(x: &DMatrix<f64>) -> Result<Truncation> {
    let (n, m) = x.shape();
    if x.is_empty() {
        return Err(Error::validation("cannot truncate an empty matrix"));
    }
    let threshold = truncation_threshold(n, m);
    let mut truncated = 0usize;
    let clipped = x.map(|v| {
        if v.abs() <= threshold {
            v
        } else {
            truncated += 1;
            0.0
        }
    });
    let count = clipped.len() as f64;
    let mean = crate::stats::neumaier_sum(clipped.iter().copied()) / count;
    let var = crate::stats::neumaier_sum(clipped.iter().map(|v| (v - mean) * (v - mean))) / count;
    let sd = var.sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::Numerical(
            "truncated entries have zero spread; cannot normalize".into(),
        ));
    }
    let matrix = clipped.map(|v| (v - mean) / sd);
    Ok(Truncation { matrix, threshold, truncated, mean, sd })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_examples() {
        let th = calibrate_signal_strengths(&[2f64.sqrt()], &[0.0], 0.01).unwrap();
        assert!((th[0] - 0.2f64.sqrt()).abs() < 1e-15);
        assert!((th[0] - 0.447214).abs() < 1e-6);
        assert_eq!(calibrate_signal_strengths(&[1.0], &[0.0], 1.0).unwrap(), vec![1.0]);
        let th = calibrate_signal_strengths(&[2.0, 1.0], &[0.1, 0.0], 1e-4).unwrap();
        assert!((th[0] - 0.22).abs() < 1e-15);
        assert!((th[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn calibration_rejects_non_decreasing_taus() {
        assert!(calibrate_signal_strengths(&[1.0, 1.0], &[0.0, 0.0], 0.1).is_err());
        assert!(calibrate_signal_strengths(&[1.0, 2.0], &[0.0, 0.0], 0.1).is_err());
        assert!(calibrate_signal_strengths(&[1.0], &[0.0], 0.0).is_err());
        assert!(calibrate_signal_strengths(&[1.0], &[0.0], 1.5).is_err());
    }

    #[test]
    fn config_construction_enforces_ordering() {
        assert!(ModelConfig::new(10, 20, vec![1.0, 2.0]).is_err());
        assert!(ModelConfig::new(10, 20, vec![1.0, 1.0]).is_err());
        assert!(ModelConfig::new(20, 10, vec![1.0]).is_err());
        assert!(ModelConfig::new(2, 10, vec![3.0, 2.0, 1.0]).is_err());
        assert!(ModelConfig::new(10, 20, vec![2.0, 1.0]).is_ok());
        assert!(ModelConfig::new(10, 20, vec![]).unwrap().with_eps(vec![0.1]).is_err());
    }

    #[test]
    fn zero_rank_signal() {
        let (u, v) = sample_signal_vectors(5, 7, 0, SignalFamily::GaussianIid, 1, 0).unwrap();
        assert_eq!(u.shape(), (5, 0));
        assert_eq!(v.shape(), (7, 0));
        let x = sample_noise(5, 7, NoiseFamily::Gaussian, 1, 0).unwrap();
        let s = assemble_spiked(u, v, vec![], x.clone()).unwrap();
        assert_eq!(s.x_tilde, x);
    }

    #[test]
    fn rank_larger_than_dimensions_is_rejected() {
        assert!(sample_signal_vectors(3, 7, 4, SignalFamily::Orthonormal, 1, 0).is_err());
    }

    #[test]
    fn orthonormal_signal_vectors() {
        for seed in 0..5 {
            let (u, v) = sample_signal_vectors(30, 50, 3, SignalFamily::Orthonormal, seed, 2).unwrap();
            let eu = (u.transpose() * &u - DMatrix::identity(3, 3)).abs().max();
            let ev = (v.transpose() * &v - DMatrix::identity(3, 3)).abs().max();
            assert!(eu < 1e-12 && ev < 1e-12, "{eu} {ev}");
        }
    }

    #[test]
    fn single_spike_on_basis_vectors() {
        let mut u = DMatrix::zeros(3, 1);
        u[(0, 0)] = 1.0;
        let mut v = DMatrix::zeros(4, 1);
        v[(0, 0)] = 1.0;
        let s = assemble_spiked(u, v, vec![1.0], DMatrix::zeros(3, 4)).unwrap();
        assert_eq!(s.x_tilde[(0, 0)], 2.0);
        assert_eq!(s.x_tilde.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn assemble_matches_outer_product_sum() {
        let (u, v) = sample_signal_vectors(3, 4, 2, SignalFamily::GaussianIid, 9, 0).unwrap();
        let x = sample_noise(3, 4, NoiseFamily::Gaussian, 9, 0).unwrap();
        let theta = vec![1.7, 0.4];
        let s = assemble_spiked(u.clone(), v.clone(), theta.clone(), x.clone()).unwrap();
        let sqrt_m = 2.0;
        for i in 0..3 {
            for j in 0..4 {
                let mut p = 0.0;
                for k in 0..2 {
                    p += theta[k] * u[(i, k)] * v[(j, k)];
                }
                let recon = s.x_tilde[(i, j)] / sqrt_m - x[(i, j)] / sqrt_m;
                assert!((recon - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn assemble_rejects_shape_mismatch() {
        let u = DMatrix::zeros(3, 1);
        let v = DMatrix::zeros(5, 1);
        assert!(assemble_spiked(u, v, vec![1.0], DMatrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        for family in [
            NoiseFamily::Gaussian,
            NoiseFamily::Rademacher,
            NoiseFamily::Uniform,
            NoiseFamily::StudentT(6.0),
        ] {
            let a = sample_noise(6, 9, family, 42, 3).unwrap();
            let b = sample_noise(6, 9, family, 42, 3).unwrap();
            let c = sample_noise(6, 9, family, 43, 3).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn rademacher_entries_are_signs() {
        let x = sample_noise(10, 10, NoiseFamily::Rademacher, 1, 0).unwrap();
        assert!(x.iter().all(|v| *v == 1.0 || *v == -1.0));
    }

    #[test]
    fn gaussian_noise_moments() {
        let x = sample_noise(1000, 1000, NoiseFamily::Gaussian, 5, 0).unwrap();
        let mean = x.mean();
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.01, "{mean} {var}");
    }

    #[test]
    fn noise_family_parsing() {
        assert_eq!("gaussian".parse::<NoiseFamily>().unwrap(), NoiseFamily::Gaussian);
        assert_eq!("student_t:6".parse::<NoiseFamily>().unwrap(), NoiseFamily::StudentT(6.0));
        assert!("student_t:3".parse::<NoiseFamily>().is_err());
        assert!("cauchy".parse::<NoiseFamily>().is_err());
        let f: NoiseFamily = serde_json::from_str("\"rademacher\"").unwrap();
        assert_eq!(f, NoiseFamily::Rademacher);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ModelConfig::new(10, 40, vec![2.0, 1.5])
            .unwrap()
            .with_noise(NoiseFamily::StudentT(8.0))
            .unwrap()
            .with_seed(99);
        let text = serde_json::to_string(&cfg).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&str> = value.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in ["n", "m", "r", "taus", "eps", "noise_family", "signal_family", "seed"] {
            assert!(keys.contains(&k), "missing {k}");
        }
        let back: ModelConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let bad = r#"{"n": 10, "m": 40, "taus": [1.0, 2.0]}"#;
        assert!(serde_json::from_str::<ModelConfig>(bad).is_err());
        let minimal: ModelConfig = serde_json::from_str(r#"{"n": 4, "m": 8, "taus": [1.5]}"#).unwrap();
        assert_eq!(minimal.eps, vec![0.0]);
        assert_eq!(minimal.r, 1);
    }

    #[test]
    fn truncation_clips_outliers() {
        let mut x = sample_noise(100, 100, NoiseFamily::Gaussian, 3, 0).unwrap();
        x[(0, 0)] = 1e9;
        let t = truncate_normalize(&x).unwrap();
        assert_eq!(t.truncated, 1);
        assert!((t.matrix[(0, 0)] + t.mean / t.sd).abs() < 1e-12);
        assert!(t.matrix[(0, 0)].abs() < 0.05);
    }

    #[test]
    fn truncation_of_standardized_bounded_entries_is_identity() {
        let raw = sample_noise(1000, 1000, NoiseFamily::Uniform, 11, 0).unwrap();
        let mean = raw.mean();
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / raw.len() as f64).sqrt();
        let x = raw.map(|v| (v - mean) / sd);
        let t = truncate_normalize(&x).unwrap();
        assert_eq!(t.truncated, 0);
        let change = (&t.matrix - &x).abs().max();
        assert!(change < 1e-6, "{change}");
    }

    #[test]
    fn gaussian_truncation_rate_is_negligible() {
        let x = sample_noise(100, 100, NoiseFamily::Gaussian, 8, 0).unwrap();
        let t = truncate_normalize(&x).unwrap();
        assert!((t.truncated as f64) / 1e4 < 1e-3);
    }

    #[test]
    fn truncation_of_constant_matrix_fails() {
        let x = DMatrix::from_element(4, 4, 0.0);
        assert!(truncate_normalize(&x).is_err());
    }

    #[test]
    fn delta_sequence_limits() {
        // delta -> 0 while delta * (nm)^(1/4) -> infinity
        let small = truncation_delta(100, 1000);
        let big = truncation_delta(10_000, 1_000_000);
        assert!(big < small);
        assert!(truncation_threshold(10_000, 1_000_000) > truncation_threshold(100, 1000));
    }
}
