//! Monte Carlo harness: repeated trials of the spiked model, aggregation,
//! sweeps over `n`, and the rate experiments for Stieltjes deviations and
//! right-vector projection energy.
//!
//! Trials are independent tasks. Trial `k` draws every random object from
//! streams keyed by `(seed, purpose, k)`, records come back in trial order,
//! and aggregation is compensated and sequential, so a report is bit-identical
//! for any degree of parallelism.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    assemble_spiked, sample_noise, sample_signal_vectors, truncate_normalize, ModelConfig,
    NoiseFamily,
};
use crate::error::{Error, Result};
use crate::mp::{bulk_edges, mp_stieltjes};
use crate::predictions::{above_threshold_count, lambda_bar};
use crate::rng::{self, Purpose};
use crate::spectra::{
    eigenvalues_desc, empirical_stieltjes, overlap_matrix, right_projection_energy,
    sample_covariance, top_spectrum, C64,
};
use crate::stats::{median, Summary};

/// Fraction of failed trials above which an experiment is rejected.
pub const MAX_FAILED_FRACTION: f64 = 0.10;

fn default_trials() -> usize {
    1
}
fn default_parallelism() -> usize {
    1
}
fn default_eta() -> f64 {
    crate::estimator::DEFAULT_ETA
}
fn default_u_offset() -> f64 {
    1.0
}

/// A model plus the knobs of a repeated experiment. Serializes flat, with the
/// model keys at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Truncate and re-standardize the noise before adding the signal.
    #[serde(default)]
    pub truncate: bool,
    /// Record the Stieltjes deviation of the noise spectrum in each trial.
    #[serde(default)]
    pub measure_stieltjes: bool,
    /// Record the right projection energy of `v_1` in each trial.
    #[serde(default)]
    pub measure_projection: bool,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Offset of the Stieltjes probe center above the detection threshold,
    /// in units of `sqrt(beta)`.
    #[serde(default = "default_u_offset")]
    pub u_offset: f64,
}

impl ExperimentConfig {
    pub fn new(model: ModelConfig, trials: usize) -> Self {
        ExperimentConfig {
            model,
            trials,
            parallelism: 1,
            truncate: false,
            measure_stieltjes: false,
            measure_projection: false,
            eta: default_eta(),
            u_offset: default_u_offset(),
        }
    }

    pub fn with_parallelism(mut self, threads: usize) -> Self {
        self.parallelism = threads;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.trials == 0 {
            return Err(Error::validation("need at least one trial"));
        }
        if self.parallelism == 0 {
            return Err(Error::validation("parallelism must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::validation(format!("eta must be positive, got {}", self.eta)));
        }
        if !self.u_offset.is_finite() {
            return Err(Error::validation("u_offset must be finite"));
        }
        Ok(())
    }
}

/// Measurements for one spike in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeMeasurement {
    pub tau: f64,
    pub lambda_emp: f64,
    /// Predicted location; the upper bulk edge for absorbed spikes.
    pub lambda_bar: f64,
    /// `|lambda_emp - lambda_bar| / sqrt(beta)`.
    pub centered_err: f64,
    pub u_overlap: f64,
    /// `max_{j != i} |<u_hat_i, u_j>|`; `None` for a single spike.
    pub u_cross_max: Option<f64>,
    pub v_overlap: f64,
    pub v_cross_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub taus: Vec<f64>,
    pub seed: u64,
    pub trial: usize,
    pub spikes: Vec<SpikeMeasurement>,
    /// First eigenvalue not attributed to a supercritical spike.
    pub bulk_top: f64,
    /// Normalized sup deviation `|s_n - s_bar| sqrt(beta)` on the probe disc.
    pub stieltjes_dev: Option<f64>,
    pub proj_energy: Option<f64>,
}

impl TrialRecord {
    /// `(lambda_1 - 1) / sqrt(beta)` style centering of any eigenvalue.
    pub fn centered(&self, lambda: f64) -> f64 {
        (lambda - 1.0) / self.beta.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrialOutcome {
    Completed(TrialRecord),
    Failed { trial: usize, reason: String },
}

fn measure_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialRecord> {
    let model = &config.model;
    let (n, m, r) = (model.n, model.m, model.r);
    let beta = model.beta();
    let index = trial as u64;
    let theta = model.thetas()?;
    let (u, v) = sample_signal_vectors(n, m, r, model.signal_family, model.seed, index)?;
    let mut x = sample_noise(n, m, model.noise_family, model.seed, index)?;
    if config.truncate {
        x = truncate_normalize(&x)?.matrix;
    }
    let sample = assemble_spiked(u, v, theta, x)?;

    let k = r.max(1).min(n);
    let spectrum = top_spectrum(&sample.x_tilde, k)?;
    let i0 = above_threshold_count(&model.taus);
    let edge = bulk_edges(beta).1;

    let mut spikes = Vec::with_capacity(r);
    if r > 0 {
        let ou = overlap_matrix(&sample.u, &spectrum.left_vectors)?;
        let ov = overlap_matrix(&sample.v, &spectrum.right_vectors)?;
        let cross = |o: &DMatrix<f64>, i: usize| -> Option<f64> {
            (0..r).filter(|&j| j != i).map(|j| o[(j, i)].abs()).reduce(f64::max)
        };
        for i in 0..r {
            let lambda_emp = spectrum.eigenvalues[i];
            let lb = lambda_bar(sample.theta[i], beta).unwrap_or(edge);
            spikes.push(SpikeMeasurement {
                tau: model.taus[i],
                lambda_emp,
                lambda_bar: lb,
                centered_err: (lambda_emp - lb).abs() / beta.sqrt(),
                u_overlap: ou[(i, i)].abs(),
                u_cross_max: cross(&ou, i),
                v_overlap: ov[(i, i)].abs(),
                v_cross_max: cross(&ov, i),
            });
        }
    }
    let bulk_top = spectrum.eigenvalues.get(i0).copied().unwrap_or(0.0);

    let stieltjes_dev = if config.measure_stieltjes {
        let noise_eigs = eigenvalues_desc(&sample_covariance(&sample.x));
        let probe = StieltjesProbe::value(config.eta, config.u_offset);
        Some(stieltjes_deviation(&noise_eigs, n, beta, &probe)?)
    } else {
        None
    };
    let proj_energy = if config.measure_projection {
        let v = if r > 0 {
            sample.v.column(0).into_owned()
        } else {
            standalone_right_vector(m, model.seed, index)
        };
        Some(right_projection_energy(&sample.x, &v)?)
    } else {
        None
    };

    Ok(TrialRecord {
        n,
        m,
        beta,
        taus: model.taus.clone(),
        seed: model.seed,
        trial,
        spikes,
        bulk_top,
        stieltjes_dev,
        proj_energy,
    })
}

/// Runs trial `trial` of the experiment. Numerical failures come back as
/// [`TrialOutcome::Failed`].
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialOutcome> {
    config.validate()?;
    Ok(match measure_trial(config, trial) {
        Ok(record) => TrialOutcome::Completed(record),
        Err(e) if e.is_numerical() => TrialOutcome::Failed { trial, reason: e.to_string() },
        Err(e) => return Err(e),
    })
}

fn run_parallel<T, F>(threads: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

/// Aggregates for one spike across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeAggregate {
    pub tau: f64,
    pub lambda_emp: Summary,
    pub lambda_bar: Summary,
    /// `(lambda_emp - 1) / sqrt(beta)`.
    pub centered_value: Summary,
    pub centered_err: Summary,
    pub u_overlap: Summary,
    pub u_cross_max: Option<Summary>,
    pub v_overlap: Summary,
    pub v_cross_max: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub trials: usize,
    pub completed: usize,
    pub failed: usize,
    pub schedule: String,
    pub spikes: Vec<SpikeAggregate>,
    pub bulk_top: Summary,
    /// `(bulk_top - 1) / (2 sqrt(beta))`.
    pub bulk_top_centered: Summary,
    pub stieltjes_dev: Option<Summary>,
    pub proj_energy: Option<Summary>,
    /// Completed trials in trial order.
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    #[serde(skip)]
    pub failures: Vec<(usize, String)>,
}

fn summarize<F: Fn(&TrialRecord) -> f64>(records: &[TrialRecord], f: F) -> Summary {
    let values: Vec<f64> = records.iter().map(f).collect();
    Summary::of(&values).expect("at least one record")
}

fn summarize_opt<F: Fn(&TrialRecord) -> Option<f64>>(records: &[TrialRecord], f: F) -> Option<Summary> {
    let values: Vec<f64> = records.iter().filter_map(f).collect();
    Summary::of(&values)
}

/// Aggregates completed records, which must be in trial order.
pub fn aggregate(
    config: &ExperimentConfig,
    records: Vec<TrialRecord>,
    failures: Vec<(usize, String)>,
    schedule: &str,
) -> Result<ExperimentReport> {
    let trials = records.len() + failures.len();
    if records.is_empty() {
        return Err(Error::Numerical(format!("all {trials} trials failed")));
    }
    let beta = config.model.beta();
    let sb = beta.sqrt();
    let spikes = (0..config.model.r)
        .map(|i| SpikeAggregate {
            tau: config.model.taus[i],
            lambda_emp: summarize(&records, |t| t.spikes[i].lambda_emp),
            lambda_bar: summarize(&records, |t| t.spikes[i].lambda_bar),
            centered_value: summarize(&records, |t| (t.spikes[i].lambda_emp - 1.0) / sb),
            centered_err: summarize(&records, |t| t.spikes[i].centered_err),
            u_overlap: summarize(&records, |t| t.spikes[i].u_overlap),
            u_cross_max: summarize_opt(&records, |t| t.spikes[i].u_cross_max),
            v_overlap: summarize(&records, |t| t.spikes[i].v_overlap),
            v_cross_max: summarize_opt(&records, |t| t.spikes[i].v_cross_max),
        })
        .collect();
    Ok(ExperimentReport {
        n: config.model.n,
        m: config.model.m,
        beta,
        trials,
        completed: records.len(),
        failed: failures.len(),
        schedule: schedule.to_string(),
        spikes,
        bulk_top: summarize(&records, |t| t.bulk_top),
        bulk_top_centered: summarize(&records, |t| (t.bulk_top - 1.0) / (2.0 * sb)),
        stieltjes_dev: summarize_opt(&records, |t| t.stieltjes_dev),
        proj_energy: summarize_opt(&records, |t| t.proj_energy),
        records,
        failures,
    })
}

/// Runs all trials on `config.parallelism` threads and aggregates them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with_schedule(config, &format!("fixed beta = {}", config.model.beta()))
}

fn run_experiment_with_schedule(config: &ExperimentConfig, schedule: &str) -> Result<ExperimentReport> {
    config.validate()?;
    let outcomes = run_parallel(config.parallelism, config.trials, |t| run_trial(config, t))?;
    let mut records = Vec::with_capacity(config.trials);
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome? {
            TrialOutcome::Completed(r) => records.push(r),
            TrialOutcome::Failed { trial, reason } => failures.push((trial, reason)),
        }
    }
    if failures.len() as f64 > MAX_FAILED_FRACTION * config.trials as f64 {
        return Err(Error::Numerical(format!(
            "{} of {} trials failed; first: {}",
            failures.len(),
            config.trials,
            failures[0].1
        )));
    }
    aggregate(config, records, failures, schedule)
}

/// How the aspect ratio shrinks with `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    Fixed { beta: f64 },
    /// `beta_n = c n^{-alpha}`; `alpha = 0` is the fixed-ratio regime.
    PowerLaw { c: f64, alpha: f64 },
}

impl BetaSchedule {
    pub fn beta(&self, n: usize) -> f64 {
        match *self {
            BetaSchedule::Fixed { beta } => beta,
            BetaSchedule::PowerLaw { c, alpha } => c * (n as f64).powf(-alpha),
        }
    }

    /// `m_n = round(n / beta_n)`.
    pub fn columns(&self, n: usize) -> Result<usize> {
        let beta = self.beta(n);
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::validation(format!("schedule gives beta = {beta} at n = {n}")));
        }
        let m = (n as f64 / beta).round();
        if !(m.is_finite() && m < usize::MAX as f64) {
            return Err(Error::validation(format!("m overflows at n = {n}")));
        }
        Ok(m as usize)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Fixed { beta } if beta > 0.0 && beta <= 1.0 => Ok(()),
            BetaSchedule::PowerLaw { c, alpha } if c > 0.0 && (0.0..=1.0).contains(&alpha) => Ok(()),
            other => Err(Error::validation(format!("invalid schedule {other:?}"))),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            BetaSchedule::Fixed { beta } => format!("fixed beta = {beta}"),
            BetaSchedule::PowerLaw { c, alpha } => format!("beta_n = {c} * n^-{alpha}"),
        }
    }
}

/// Default cap on the memory for one trial's matrices.
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

/// One row of a sweep. `report` is `None` when the size was skipped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub report: Option<ExperimentReport>,
    pub skipped: Option<String>,
}

/// Bytes needed to hold the noise and observed matrices of one trial per
/// worker thread.
pub fn trial_memory(n: usize, m: usize, threads: usize) -> usize {
    n.saturating_mul(m).saturating_mul(2 * std::mem::size_of::<f64>()).saturating_mul(threads)
}

/// Runs the base experiment at every `n`, with `m_n = round(n / beta_n)`.
pub fn sweep(
    base: &ExperimentConfig,
    n_values: &[usize],
    schedule: BetaSchedule,
    memory_budget: usize,
) -> Result<Vec<SweepEntry>> {
    schedule.validate()?;
    let mut table = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let m = schedule.columns(n)?;
        let beta = n as f64 / m as f64;
        let need = trial_memory(n, m, base.parallelism);
        if need > memory_budget {
            let reason = format!("needs {need} bytes, budget is {memory_budget}");
            log_warning(&format!("skipping n = {n}, m = {m}: {reason}"));
            table.push(SweepEntry { n, m, beta, report: None, skipped: Some(reason) });
            continue;
        }
        let mut config = base.clone();
        config.model.n = n;
        config.model.m = m;
        let report = run_experiment_with_schedule(&config, &schedule.describe())?;
        table.push(SweepEntry { n, m, beta, report: Some(report), skipped: None });
    }
    Ok(table)
}

fn log_warning(msg: &str) {
    eprintln!("warning: {msg}");
}

/// Probe set approximating a supremum over the disc
/// `|z - u| <= n^{-radius_exponent} sqrt(beta)`, `u = 1 + (2 + eta + u_offset) sqrt(beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StieltjesProbe {
    pub eta: f64,
    pub u_offset: f64,
    pub radius_exponent: f64,
    /// Compare derivatives instead of values.
    pub derivative: bool,
    pub boundary_points: usize,
}

impl StieltjesProbe {
    /// Value probe with radius `n^{-1/4} sqrt(beta)`.
    pub fn value(eta: f64, u_offset: f64) -> Self {
        StieltjesProbe { eta, u_offset, radius_exponent: 0.25, derivative: false, boundary_points: 16 }
    }

    /// Derivative probe with radius `n^{-1/8} sqrt(beta)`.
    pub fn derivative(eta: f64, u_offset: f64) -> Self {
        StieltjesProbe { eta, u_offset, radius_exponent: 0.125, derivative: true, boundary_points: 16 }
    }

    pub fn center(&self, beta: f64) -> f64 {
        1.0 + (2.0 + self.eta + self.u_offset) * beta.sqrt()
    }

    pub fn radius(&self, n: usize, beta: f64) -> f64 {
        (n as f64).powf(-self.radius_exponent) * beta.sqrt()
    }

    /// Center followed by equally spaced boundary points.
    pub fn points(&self, n: usize, beta: f64) -> Vec<C64> {
        let c = C64::new(self.center(beta), 0.0);
        let rho = self.radius(n, beta);
        std::iter::once(c)
            .chain((0..self.boundary_points).map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / self.boundary_points as f64;
                c + C64::from_polar(rho, angle)
            }))
            .collect()
    }
}

/// `max_k |emp(z_k) - reference(z_k)|`. A point where `emp` hits a pole is
/// nudged by `1e-3 * radius` (at most three times).
pub fn sup_deviation<E, R>(points: &[C64], radius: f64, emp: E, reference: R) -> Result<f64>
where
    E: Fn(C64) -> Result<C64>,
    R: Fn(C64) -> Result<C64>,
{
    let mut worst = 0.0f64;
    for &z0 in points {
        let mut z = z0;
        let mut attempt = 0;
        let value = loop {
            match emp(z) {
                Ok(v) => break v,
                Err(Error::Pole { .. }) if attempt < 3 => {
                    attempt += 1;
                    z = z0 + C64::new(0.0, 1e-3 * radius * attempt as f64);
                }
                Err(e) => return Err(e),
            }
        };
        worst = worst.max((value - reference(z)?).norm());
    }
    Ok(worst)
}

/// Normalized deviation between the empirical and Marchenko-Pastur Stieltjes
/// transforms: `sup |s_n - s_bar| sqrt(beta)`, or `sup |s_n' - s_bar'| beta`
/// for a derivative probe.
pub fn stieltjes_deviation(eigenvalues: &[f64], n: usize, beta: f64, probe: &StieltjesProbe) -> Result<f64> {
    let points = probe.points(n, beta);
    let radius = probe.radius(n, beta);
    let pick = |pair: (C64, C64)| if probe.derivative { pair.1 } else { pair.0 };
    let raw = sup_deviation(
        &points,
        radius,
        |z| empirical_stieltjes(eigenvalues, z).map(pick),
        |z| mp_stieltjes(z, beta).map(pick),
    )?;
    Ok(if probe.derivative { raw * beta } else { raw * beta.sqrt() })
}

/// Deviations measured on one pure-noise draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationSample {
    pub trial: usize,
    pub value: f64,
    pub derivative: f64,
}

/// Value and derivative deviations on pure-noise draws, one per trial.
pub fn stieltjes_deviation_experiment(
    n: usize,
    m: usize,
    noise: NoiseFamily,
    seed: u64,
    trials: usize,
    eta: f64,
    u_offset: f64,
    parallelism: usize,
) -> Result<Vec<DeviationSample>> {
    if n == 0 || m < n {
        return Err(Error::validation(format!("need 0 < n <= m, got n = {n}, m = {m}")));
    }
    let beta = n as f64 / m as f64;
    let value_probe = StieltjesProbe::value(eta, u_offset);
    let deriv_probe = StieltjesProbe::derivative(eta, u_offset);
    run_parallel(parallelism.max(1), trials, |t| -> Result<DeviationSample> {
        let x = sample_noise(n, m, noise, seed, t as u64)?;
        let eigs = eigenvalues_desc(&sample_covariance(&x));
        Ok(DeviationSample {
            trial: t,
            value: stieltjes_deviation(&eigs, n, beta, &value_probe)?,
            derivative: stieltjes_deviation(&eigs, n, beta, &deriv_probe)?,
        })
    })?
    .into_iter()
    .collect()
}

/// Least-squares slope of `ln(value)` against `ln(n)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::validation("need at least three points to fit a rate"));
    }
    if let Some(p) = points.iter().find(|(n, v)| !(*n > 0.0 && *v > 0.0)) {
        return Err(Error::validation(format!("non-positive point {p:?}")));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::validation("all points share the same n"));
    }
    Ok(sxy / sxx)
}

/// Medians of deviation samples, as `(value, derivative)`.
pub fn median_deviation(samples: &[DeviationSample]) -> Option<(f64, f64)> {
    let v: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let d: Vec<f64> = samples.iter().map(|s| s.derivative).collect();
    Some((median(&v)?, median(&d)?))
}

/// Right vector per the Gaussian signal model, independent of everything else
/// in trial `index`.
pub fn standalone_right_vector(m: usize, seed: u64, index: u64) -> DVector<f64> {
    let mut rng = rng::stream(seed, Purpose::ProbeVector, index);
    let scale = 1.0 / (m as f64).sqrt();
    DVector::from_fn(m, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSample {
    pub trial: usize,
    pub energy: f64,
    /// `energy / beta`.
    pub ratio_beta: f64,
    /// `energy / (beta ln n)`.
    pub ratio_beta_log_n: f64,
}

/// Projection energy of an independent right vector onto the row space of a
/// pure-noise matrix, one sample per trial. Uses `v_1` of the signal when the
/// model has a spike, and a standalone draw otherwise.
pub fn projection_energy_experiment(config: &ExperimentConfig) -> Result<Vec<ProjectionSample>> {
    config.validate()?;
    let model = &config.model;
    let (n, m) = (model.n, model.m);
    let beta = model.beta();
    let log_n = (n as f64).ln();
    run_parallel(config.parallelism, config.trials, |t| -> Result<ProjectionSample> {
        let index = t as u64;
        let x = sample_noise(n, m, model.noise_family, model.seed, index)?;
        let v = if model.r > 0 {
            let (_, v) = sample_signal_vectors(n, m, model.r, model.signal_family, model.seed, index)?;
            v.column(0).into_owned()
        } else {
            standalone_right_vector(m, model.seed, index)
        };
        let energy = right_projection_energy(&x, &v)?;
        Ok(ProjectionSample {
            trial: t,
            energy,
            ratio_beta: energy / beta,
            ratio_beta_log_n: energy / (beta * log_n),
        })
    })?
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_rate_exact_power_laws() {
        let ns = [100.0, 200.0, 400.0, 800.0];
        let pts: Vec<_> = ns.iter().map(|n: &f64| (*n, n.powf(-0.5))).collect();
        assert!((fit_rate(&pts).unwrap() + 0.5).abs() < 1e-12);
        let pts: Vec<_> = ns.iter().map(|n| (*n, 7.0)).collect();
        assert!(fit_rate(&pts).unwrap().abs() < 1e-12);
        let pts: Vec<_> = ns.iter().map(|n: &f64| (*n, 3.0 * n.powf(-0.25))).collect();
        assert!((fit_rate(&pts).unwrap() + 0.25).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_rejects_bad_input() {
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 1.0)]).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn schedule_columns() {
        let s = BetaSchedule::PowerLaw { c: 1.0, alpha: 0.5 };
        let ms: Vec<usize> = [100, 200, 400].iter().map(|&n| s.columns(n).unwrap()).collect();
        assert_eq!(ms, vec![1000, 2828, 8000]);
        let fixed = BetaSchedule::PowerLaw { c: 0.1, alpha: 0.0 };
        assert_eq!(fixed.columns(50).unwrap(), BetaSchedule::Fixed { beta: 0.1 }.columns(50).unwrap());
        assert!(BetaSchedule::Fixed { beta: 2.0 }.validate().is_err());
    }

    #[test]
    fn self_reference_has_zero_deviation() {
        let eigs = [1.1, 1.0, 0.95, 0.9];
        let probe = StieltjesProbe::value(0.5, 0.0);
        let pts = probe.points(4, 0.01);
        assert_eq!(pts.len(), 17);
        let f = |z| empirical_stieltjes(&eigs, z).map(|p| p.0);
        assert_eq!(sup_deviation(&pts, 0.01, f, f).unwrap(), 0.0);
    }

    #[test]
    fn pole_on_probe_point_is_nudged() {
        let probe = StieltjesProbe::value(0.5, 0.0);
        let beta = 0.01;
        let eigs = [probe.center(beta), 1.0];
        let d = stieltjes_deviation(&eigs, 2, beta, &probe).unwrap();
        assert!(d.is_finite());
    }
}
