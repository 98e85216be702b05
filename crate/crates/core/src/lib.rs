//! Spiked low-rank-plus-noise matrices with extreme aspect ratios.
//!
//! The model is `X_tilde = X + sqrt(m) * sum_i theta_i u_i v_i'` with an
//! `n x m` noise matrix `X`, `beta = n / m` small and
//! `theta_i = tau_i * beta^(1/4)`. The crate simulates it, evaluates the
//! limiting eigenvalue and cosine predictions, estimates spike strengths from
//! data, and certifies outlier eigenvalues through the master-matrix
//! determinant.

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod estimator;
pub mod invariants;
pub mod io;
pub mod master;
pub mod montecarlo;
pub mod mp;
pub mod predictions;
pub mod rng;
pub mod spectra;
pub mod stats;

pub use ensemble::{ModelConfig, NoiseFamily, SignalFamily, SpikedSample};
pub use error::{Error, Result};
pub use estimator::{analyze, estimate_tau, EstimationReport, Outlier};
pub use master::{certify_outliers, MasterMatrix, MatrixKind, RootCertificate};
pub use montecarlo::{run_experiment, sweep, BetaSchedule, ExperimentConfig, ExperimentReport, TrialRecord};
pub use mp::{d_transform, d_transform_inverse, mp_stieltjes};
pub use predictions::{predict, TheoryPrediction};
pub use spectra::C64;
