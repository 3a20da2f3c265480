//! Experiment harness: synthetic data, the noise-injection grid, and the
//! cleaning / selective-classification / hit-rate frontiers.

pub mod frontier;
pub mod grid;
pub mod synthetic;

pub use frontier::{
    clean_data, default_grid, disagreement_hit_rate_frontier, hit_rate_frontier, selective_frontier,
    test_error_and_regret, uniform_grid, write_frontier, write_frontier_csv, FrontierPoint, TestSet,
};
pub use grid::{
    hedge_spec, load_split, prepare_task, resolve_priors, run_grid, split, train_method, DataSource, ExperimentConfig, GridReport, GridRow, NoiseSetting,
    NoisyTask, SplitData,
};
pub use synthetic::{
    gaussian_bayes_error, generate_synthetic, logistic_bayes_error, SyntheticData, SyntheticSpec,
};
