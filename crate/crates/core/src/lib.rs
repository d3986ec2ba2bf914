//! Gaussian mixture summaries of datasets, an exact component-level
//! optimal-transport distance between them, and a chunk classifier built on
//! that distance.
//!
//! The pipeline: fit a GMM per data source ([`gmm`]), compare sources via the
//! closed-form Gaussian 2-Wasserstein distance lifted to mixtures through an
//! exact transportation solve ([`gaussian`], [`transport`]), and label unseen
//! chunks by the nearest class model ([`classify`]). One-dimensional
//! quantile-formula distances ([`wasserstein1d`]) and brute-force transport
//! enumeration ([`selftest`]) serve as independent oracles for the fast paths.

pub mod classify;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod gaussian;
pub mod gmm;
pub mod model_io;
pub mod seeds;
pub mod selftest;
pub mod transport;
pub mod wasserstein1d;

pub use error::{Error, Result};
pub use gaussian::{gaussian_w2_squared, spd_sqrt, Gaussian, SpdSqrtResult};
pub use gmm::{
    e_step, fit, log_likelihood, m_step, select_n_components, BicRow, CovarianceType, FitConfig,
    FitReport, Gmm, Responsibilities,
};
pub use classify::{
    classify_chunk, evaluate, fit_class_models, gmm_l2_baseline, knn_baseline, ChunkFailure,
    ClassModelSet, EvalProtocol, EvalReport, EvalRow, LabeledChunk, MatchResult, Method,
    MethodSummary,
};
pub use dataset::{read_delimited, Dataset, ReadOptions};
pub use model_io::{load_model, load_model_from_path, save_model, save_model_to_path};
pub use selftest::{run_selftest, run_suite, Fault, Suite, SuiteConfig, SuiteOutcome};
pub use transport::{
    build_cost_matrix, build_cost_matrix_with, gmm_wasserstein, gmm_wasserstein_with,
    solve_transport, verify_duality, CostConvention, CostMatrix, DualSolution, DualityReport,
    TransportPlan,
};
pub use wasserstein1d::{
    bootstrap_se, check_rearrangement_inequality, empirical_wn, gaussian_w2_squared_1d,
    sample_gmm, EmpiricalDistribution,
};
