//! Quality-Diversity optimisation for uncertain domains.
//!
//! Noisy tasks return a different fitness and descriptor on every
//! evaluation. This crate provides CVT archives of depth `D`, MAP-Elites and
//! the resampling variants built on it (MAP-Elites-sampling, Deep-Grid,
//! Deep-Grid-sampling, Archive-Sampling, Parallel-Adaptive-Sampling), all run
//! under a common per-generation sampling budget, and the corrected-archive
//! metrics used to compare them.
//!
//! ```
//! use std::sync::Arc;
//! use uqd_core::{generate_cvt, AlgorithmConfig, Arm, Evaluator, NoiseModel, Optimizer, RngStream, Variant};
//!
//! let task = Arc::new(Arm::new(8, NoiseModel::gaussian(0.01, 0.01)).unwrap());
//! let centroids = Arc::new(generate_cvt(64, 2, 5_000, 20, &RngStream::new(0, 0)).unwrap());
//! let config = AlgorithmConfig::new(Variant::ArchiveSampling, 256);
//! let mut run = Optimizer::new(config, centroids, Evaluator::new(task), RngStream::new(1, 0)).unwrap();
//! for _ in 0..10 {
//!     run.step().unwrap();
//! }
//! assert!(run.archive().coverage() > 0.0);
//! ```

pub mod algorithms;
pub mod archive;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tasks;
pub mod tessellation;
pub mod variation;

pub use algorithms::{
    initialize, median_evals_number, plan_budget, AlgorithmConfig, BudgetPlan, GenerationReport, Optimizer, Variant,
};
pub use archive::{AddOutcome, AdditionRule, Archive, InCellSelector};
pub use error::{Error, Result};
pub use metrics::{
    corrected_archive, estimator_study, CorrectedArchive, CorrectedMetrics, CorrectedMode, MetricsReport, ReevalResult,
    VarianceNormalizers,
};
pub use model::{Evaluation, Genotype, SolutionRecord};
pub use rng::{RngStream, StreamRng};
pub use tasks::{Arm, EvalRequest, Evaluator, GaussianNoise, HetSphere, NoiseModel, Task, TaskSpec};
pub use tessellation::{generate_cvt, Centroids};
pub use variation::VariationParams;
