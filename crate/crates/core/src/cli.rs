//! Command-line front end. Each verb merges a flat JSON config file with
//! command-line flags (flags win), runs, and writes its outputs plus a
//! `metadata.json` that can be fed back through `--config`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::estimator::{analyze, DEFAULT_ETA};
use crate::invariants::{brute_force_suite, exact_identity_suite, CheckResult};
use crate::io::{read_matrix_csv, write_json, write_trials_csv};
use crate::master::{certify_outliers, RootCertificate, DEFAULT_ELL, DEFAULT_NODES};
use crate::montecarlo::{run_experiment, sweep, BetaSchedule, ExperimentConfig, DEFAULT_MEMORY_BUDGET};
use crate::predictions::predict;
use crate::ensemble::ModelConfig;

/// Environment variable consulted for the seed when neither flag nor config
/// sets one.
pub const SEED_ENV: &str = "SPIKE_SEED";

const GIT_DESCRIBE: &str = env!("SPIKED_GIT_DESCRIBE");

#[derive(Debug, Parser)]
#[command(name = "spiked", version, about = "Spiked models with extreme aspect ratios")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Run Monte Carlo trials and write the tidy trial table.
    Simulate(SimulateArgs),
    /// Print theoretical limits for given spike strengths.
    Predict(PredictArgs),
    /// Detect outliers and estimate spike strengths from a matrix file.
    Estimate(EstimateArgs),
    /// Repeat an experiment over a range of n.
    Sweep(SweepArgs),
    /// Certify outlier roots on fresh draws and run the invariant suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat JSON config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "spiked-out")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    taus: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    eps: Option<Vec<f64>>,
    /// gaussian, rademacher, uniform or student_t:<dof>.
    #[arg(long)]
    noise_family: Option<String>,
    /// gaussian_iid or orthonormal.
    #[arg(long)]
    signal_family: Option<String>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    truncate: bool,
    #[arg(long)]
    measure_stieltjes: bool,
    #[arg(long)]
    measure_projection: bool,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    u_offset: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    taus: Option<Vec<f64>>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    /// Headerless CSV matrix.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Comma-separated row counts.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n_values: Option<Vec<usize>>,
    /// Fixed aspect ratio; excludes --c/--alpha.
    #[arg(long)]
    beta: Option<f64>,
    /// Power-law schedule beta_n = c n^-alpha.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Memory cap per sweep point, in bytes.
    #[arg(long)]
    memory_budget: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    /// Number of fresh draws to certify.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    nodes: Option<usize>,
    /// Tiny instances in the brute-force suite.
    #[arg(long)]
    instances: Option<usize>,
}

/// Parses `argv` (including the program name), runs the verb and returns the
/// process exit code: 0 on success, 1 on invalid input, 2 on numerical failure.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.verb) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn dispatch(verb: Verb) -> Result<()> {
    match verb {
        Verb::Simulate(a) => simulate(a),
        Verb::Predict(a) => predict_cmd(a),
        Verb::Estimate(a) => estimate(a),
        Verb::Sweep(a) => sweep_cmd(a),
        Verb::Verify(a) => verify(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<Map<String, Value>> {
    let Some(path) = path else { return Ok(Map::new()) };
    let text = std::fs::read_to_string(path)?;
    match serde_json::from_str(&text)? {
        Value::Object(mut map) => {
            map.remove("run");
            Ok(map)
        }
        _ => Err(Error::Parse(format!("{} is not a JSON object", path.display()))),
    }
}

fn set<T: Serialize>(map: &mut Map<String, Value>, key: &str, value: Option<T>) -> Result<()> {
    if let Some(v) = value {
        map.insert(key.to_string(), serde_json::to_value(v)?);
    }
    Ok(())
}

fn flag(map: &mut Map<String, Value>, key: &str, on: bool) {
    if on {
        map.insert(key.to_string(), Value::Bool(true));
    }
}

fn base_map(common: &Common) -> Result<Map<String, Value>> {
    let mut map = load_config(common.config.as_deref())?;
    set(&mut map, "seed", common.seed)?;
    if !map.contains_key("seed") {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::validation(format!("{SEED_ENV}='{raw}' is not an unsigned integer")))?;
            map.insert("seed".into(), seed.into());
        }
    }
    Ok(map)
}

fn apply_model(map: &mut Map<String, Value>, a: &ModelArgs) -> Result<()> {
    set(map, "n", a.n)?;
    set(map, "m", a.m)?;
    if let Some(taus) = &a.taus {
        set(map, "taus", Some(taus))?;
        map.insert("r".into(), taus.len().into());
        if a.eps.is_none() {
            map.remove("eps");
        }
    }
    set(map, "eps", a.eps.as_ref())?;
    set(map, "noise_family", a.noise_family.as_ref())?;
    set(map, "signal_family", a.signal_family.as_ref())
}

fn apply_experiment(map: &mut Map<String, Value>, a: &ExperimentArgs) -> Result<()> {
    apply_model(map, &a.model)?;
    set(map, "trials", a.trials)?;
    set(map, "parallelism", a.parallelism)?;
    flag(map, "truncate", a.truncate);
    flag(map, "measure_stieltjes", a.measure_stieltjes);
    flag(map, "measure_projection", a.measure_projection);
    set(map, "eta", a.eta)?;
    set(map, "u_offset", a.u_offset)
}

fn decode<T: DeserializeOwned>(map: &Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(map.clone())).map_err(|e| Error::validation(format!("invalid configuration: {e}")))
}

fn required<T: DeserializeOwned>(map: &Map<String, Value>, key: &str) -> Result<T> {
    let value = map.get(key).ok_or_else(|| Error::validation(format!("missing required setting '{key}'")))?;
    serde_json::from_value(value.clone()).map_err(|e| Error::validation(format!("setting '{key}': {e}")))
}

fn optional<T: DeserializeOwned>(map: &Map<String, Value>, key: &str) -> Result<Option<T>> {
    map.get(key).map(|_| required(map, key)).transpose()
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes `metadata.json`: the effective flat config plus a `run` block that
/// is ignored when the file is read back as a config.
fn write_metadata(dir: &Path, verb: &str, config: Value, run: Value) -> Result<()> {
    let mut object = match config {
        Value::Object(map) => map,
        other => return Err(Error::Numerical(format!("config serialized to {other}"))),
    };
    let mut block = json!({ "verb": verb, "version": env!("CARGO_PKG_VERSION"), "git_describe": GIT_DESCRIBE });
    if let (Value::Object(b), Value::Object(extra)) = (&mut block, run) {
        b.extend(extra);
    }
    object.insert("run".into(), block);
    write_json(&dir.join("metadata.json"), &Value::Object(object))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut map = base_map(&a.common)?;
    apply_experiment(&mut map, &a.experiment)?;
    let config: ExperimentConfig = decode(&map)?;
    config.validate()?;
    prepare_out_dir(&a.common.out_dir)?;
    let report = run_experiment(&config)?;
    write_trials_csv(&a.common.out_dir.join("trials.csv"), &report.records)?;
    write_json(&a.common.out_dir.join("summary.json"), &report)?;
    write_metadata(
        &a.common.out_dir,
        "simulate",
        serde_json::to_value(&config)?,
        json!({ "schedule": report.schedule, "failed_trials": report.failed }),
    )?;
    println!(
        "{} trials ({} failed) written to {}",
        report.trials,
        report.failed,
        a.common.out_dir.join("trials.csv").display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictConfig {
    taus: Vec<f64>,
    beta: f64,
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let mut map = base_map(&a.common)?;
    set(&mut map, "taus", a.taus.as_ref())?;
    set(&mut map, "beta", a.beta)?;
    let config = PredictConfig { taus: required(&map, "taus")?, beta: required(&map, "beta")? };
    let rows = predict(&config.taus, config.beta)?;
    prepare_out_dir(&a.common.out_dir)?;
    let mut wtr = csv::Writer::from_path(a.common.out_dir.join("predictions.csv"))?;
    let mut stdout = csv::Writer::from_writer(std::io::stdout());
    for row in &rows {
        wtr.serialize(row)?;
        stdout.serialize(row)?;
    }
    wtr.flush()?;
    stdout.flush()?;
    write_metadata(&a.common.out_dir, "predict", serde_json::to_value(&config)?, json!({}))
}

#[derive(Debug, Serialize, Deserialize)]
struct EstimateConfig {
    input: PathBuf,
    eta: f64,
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let mut map = base_map(&a.common)?;
    set(&mut map, "input", a.input.as_ref())?;
    set(&mut map, "eta", a.eta)?;
    let config = EstimateConfig {
        input: required(&map, "input")?,
        eta: optional(&map, "eta")?.unwrap_or(DEFAULT_ETA),
    };
    let x = read_matrix_csv(&config.input)?;
    let report = analyze(&x, config.eta)?;
    prepare_out_dir(&a.common.out_dir)?;
    write_json(&a.common.out_dir.join("estimate.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    write_metadata(&a.common.out_dir, "estimate", serde_json::to_value(&config)?, json!({}))
}

#[derive(Debug, Serialize)]
struct SweepRow {
    n: usize,
    m: usize,
    beta: f64,
    skipped: Option<String>,
    report: Option<crate::montecarlo::ExperimentReport>,
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let mut map = base_map(&a.common)?;
    apply_experiment(&mut map, &a.experiment)?;
    set(&mut map, "n_values", a.n_values.as_ref())?;
    set(&mut map, "memory_budget", a.memory_budget)?;
    if let Some(beta) = a.beta {
        map.remove("c");
        map.remove("alpha");
        map.insert("beta".into(), beta.into());
    }
    if a.c.is_some() || a.alpha.is_some() {
        map.remove("beta");
    }
    set(&mut map, "c", a.c)?;
    set(&mut map, "alpha", a.alpha)?;

    let n_values: Vec<usize> = required(&map, "n_values")?;
    let schedule = match (optional::<f64>(&map, "beta")?, optional::<f64>(&map, "c")?, optional::<f64>(&map, "alpha")?) {
        (Some(beta), None, None) => BetaSchedule::Fixed { beta },
        (None, c, alpha) => BetaSchedule::PowerLaw { c: c.unwrap_or(1.0), alpha: alpha.unwrap_or(0.5) },
        _ => return Err(Error::validation("give either beta or c/alpha, not both")),
    };
    schedule.validate()?;
    let budget = optional(&map, "memory_budget")?.unwrap_or(DEFAULT_MEMORY_BUDGET);
    // The base config needs some valid n and m; the sweep overrides both.
    let first = n_values.first().copied().unwrap_or(1).max(1);
    map.insert("n".into(), first.into());
    map.insert("m".into(), schedule.columns(first)?.into());
    let base: ExperimentConfig = decode(&map)?;
    base.validate()?;

    prepare_out_dir(&a.common.out_dir)?;
    let table = sweep(&base, &n_values, schedule, budget)?;
    let records: Vec<_> = table.iter().filter_map(|e| e.report.as_ref()).flat_map(|r| r.records.iter().cloned()).collect();
    write_trials_csv(&a.common.out_dir.join("sweep.csv"), &records)?;
    let rows: Vec<SweepRow> = table
        .into_iter()
        .map(|e| SweepRow { n: e.n, m: e.m, beta: e.beta, skipped: e.skipped, report: e.report })
        .collect();
    write_json(&a.common.out_dir.join("sweep.json"), &rows)?;
    map.remove("n");
    map.remove("m");
    map.insert("memory_budget".into(), budget.into());
    write_metadata(&a.common.out_dir, "sweep", Value::Object(map), json!({ "schedule": schedule.describe() }))?;
    println!("{} sweep points written to {}", rows.len(), a.common.out_dir.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    certificates: Vec<Vec<RootCertificate>>,
    certified_fraction: Option<f64>,
    identities: Vec<CheckResult>,
    brute_force: Vec<CheckResult>,
}

fn verify(a: VerifyArgs) -> Result<()> {
    let mut map = base_map(&a.common)?;
    apply_model(&mut map, &a.model)?;
    set(&mut map, "trials", a.trials)?;
    set(&mut map, "ell", a.ell)?;
    set(&mut map, "nodes", a.nodes)?;
    set(&mut map, "instances", a.instances)?;
    for (key, value) in [("trials", json!(1)), ("ell", json!(DEFAULT_ELL)), ("nodes", json!(DEFAULT_NODES)), ("instances", json!(20))] {
        map.entry(key).or_insert(value);
    }
    let model: ModelConfig = decode(&map)?;
    let trials: usize = required(&map, "trials")?;
    let ell: f64 = required(&map, "ell")?;
    let nodes: usize = required(&map, "nodes")?;
    let instances: usize = required(&map, "instances")?;

    let mut certificates = Vec::with_capacity(trials);
    for t in 0..trials {
        let sample = model.sample(t as u64)?;
        certificates.push(certify_outliers(&sample, ell, nodes)?);
    }
    let all: Vec<&RootCertificate> = certificates.iter().flatten().collect();
    let certified_fraction = (!all.is_empty()).then(|| all.iter().filter(|c| c.certified).count() as f64 / all.len() as f64);
    let identities = exact_identity_suite(model.seed)?;
    let (_, brute_force) = brute_force_suite(model.seed, instances)?;
    let report = VerifyReport { certificates, certified_fraction, identities, brute_force };

    prepare_out_dir(&a.common.out_dir)?;
    write_json(&a.common.out_dir.join("verify.json"), &report)?;
    let tolerances: Map<String, Value> =
        report.identities.iter().chain(&report.brute_force).map(|c| (c.name.clone(), json!(c.tolerance))).collect();
    write_metadata(
        &a.common.out_dir,
        "verify",
        Value::Object(map),
        json!({ "tolerances": tolerances, "winding_integer_gap": 0.1 }),
    )?;
    for check in report.identities.iter().chain(&report.brute_force) {
        println!(
            "{} {} (max error {:e}, tolerance {:e})",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.max_error,
            check.tolerance
        );
    }
    if let Some(f) = report.certified_fraction {
        println!("certified roots: {:.1}%", 100.0 * f);
    }
    if report.identities.iter().chain(&report.brute_force).all(|c| c.passed) {
        Ok(())
    } else {
        Err(Error::Numerical("invariant suite failed".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::validation("bad")), 1);
        assert_eq!(exit_code(&Error::Parse("bad".into())), 1);
        assert_eq!(exit_code(&Error::Numerical("bad".into())), 2);
        assert_eq!(exit_code(&Error::CertificationFailed("bad".into())), 2);
        assert_eq!(exit_code(&Error::Pole { z: "1".into(), pole: 1.0, distance: 0.0 }), 2);
    }
}
