//! Gridless direction-of-arrival (DOA) estimation from fourth-order
//! cumulants, robust to unknown Gaussian colored noise.
//!
//! The pipeline turns array snapshots into a small set of virtual
//! measurements whose noise floor is set by the snapshot count rather
//! than by the (Gaussian) noise field:
//!
//! 1. [`cumulants::sample_c4`] estimates the fourth-order cumulant
//!    matrix of the snapshots; Gaussian noise of any spatial color is
//!    invisible to it in expectation.
//! 2. Lag averaging ([`cumulants::rc_foc`], [`cumulants::smv`])
//!    compresses the cumulant matrix onto the difference coarray,
//!    yielding a single measurement vector `z` of length `4N-3` that
//!    follows a Vandermonde (virtual uniform array) model.
//! 3. [`error_stats`] estimates the covariance of the finite-snapshot
//!    error in `z` and converts it into a whitened chi-square bound,
//!    so the denoising step needs no hand-tuned error budget.
//! 4. [`solver::solve_et_anm`] solves the atomic-norm denoising SDP
//!    with that data-driven error ellipsoid via operator splitting.
//! 5. [`retrieval::esprit`] reads the DOAs off the recovered Toeplitz
//!    matrix; [`retrieval::foc_music`] provides a grid-search baseline.
//!
//! Both uniform linear arrays (ULA) and hole-free sparse linear arrays
//! (SLA) over a half-wavelength grid are supported. [`bench`] drives
//! Monte Carlo sweeps over SNR and snapshot count and writes CSV
//! reports; [`config`] parses the flat key/value experiment files used
//! by the CLI.

pub mod bench;
pub mod config;
pub mod cumulants;
pub mod error;
pub mod error_stats;
pub mod geometry;
pub mod linalg;
pub mod retrieval;
pub mod selfcheck;
pub mod signal;
pub mod solver;

pub use bench::{run_trial, sweep_and_report, ExperimentConfig, Method, MetricKind, ResultRow};
pub use cumulants::{
    population_c4, rc_foc, reduction_operators, sample_c4, smv, CumulantMatrix,
    NonRedundantVector, RcFocMatrix, ReductionOperators,
};
pub use error::{DoaError, Result};
pub use error_stats::{
    chi2_threshold, error_covariance, shrink_covariance, w_matrix, whitener, CovarianceMode,
    ErrorSamples, WhiteningModel,
};
pub use geometry::{virtual_steering, ArrayGeometry};
pub use linalg::{CMat, CVec, C64};
pub use retrieval::{esprit, foc_music, model_order, DoaEstimates};
pub use signal::{gen_colored_noise, gen_snapshots, gen_sources, NoiseConfig, SnapshotMatrix, SourceConfig};
pub use solver::{
    ellipsoid_project, psd_project, solve_et_anm, verify_solution, AnmProblem, SolveStatus,
    SolverParams, ToeplitzSolution,
};
