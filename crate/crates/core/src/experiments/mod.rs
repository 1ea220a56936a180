//! Seeded desk-scale experiments: data generation, training, evaluation,
//! localization and the learned-dictionary comparison.

mod compare;
mod config;
pub mod io;
mod runs;
mod scenario;

pub use compare::{compare_mod, single_dimension_model, ComparePoint};
pub use config::{CompareConfig, Dims, ExperimentConfig};
pub use scenario::{build_model, build_truth, eval_nmse, generate, noise_seed, observations, Estimator, Sample, Scenario};
pub use runs::{
    load_checkpoint, localize_split, nmse_table, run_admap, run_compare, run_eval, run_generate, run_localize, run_train,
    LocalizationRow,
};
