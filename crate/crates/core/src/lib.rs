//! Bifurcating autoregressive processes on forests of binary cell
//! genealogies, observed through a two-type Galton-Watson process.
//!
//! The crate simulates forests, computes pooled least-squares and
//! reproduction-law estimates with their asymptotic covariances, builds
//! confidence intervals and Wald symmetry tests, and runs replicated
//! studies of rejection rates and error decay.

pub mod asymptotics;
pub mod error;
pub mod estimate;
pub mod hypothesis;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod process;
pub mod registry;
pub mod stats;
pub mod tree;

pub use asymptotics::{
    bar_covariance, gw_covariance, gw_variance, moment_limits, theoretical_limits, BarCovariance, GwCovariance,
    GwVariance, MomentLimits, TheoreticalLimits,
};
pub use error::{Error, Result};
pub use estimate::{
    estimate_gw, estimate_noise, estimate_theta, residuals, ForestSummary, GwEstimate, NoiseEstimate, ThetaEstimate,
};
pub use hypothesis::{
    ci_bar, ci_gw, test_bar_coeffs, test_fixed_point, test_gw_mean, test_gw_vector, test_variance,
    ConfidenceInterval, StdErrorRule, TestKind, WaldTestResult,
};
pub use io::{analyze, read_lineage, write_lineage, EstimationReport, SimulationParams};
pub use montecarlo::{run_power_study, run_rate_study, run_study, run_study_with_sets, StudyConfig, StudyResult};
pub use process::{
    descendants_matrix, dominant_eigen, gaussian_moments, simulate_forest, BarCoeffs, DescendantsMatrix,
    DominantEigen, GwLaw, NoiseMoments, RootLaw,
};
pub use registry::{param_set, registry, ParamSet};
pub use stats::RngStream;
pub use tree::{counts, node_relations, CellType, ForestCounts, NodeId, ObservedForest, ObservedTree};
