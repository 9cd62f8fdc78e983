//! Grid expansion, run execution, sweeps and result output.

pub mod config;
pub mod exec;
pub mod plot;
pub mod report;
pub mod train;

pub use config::{
    expand_grid, DatasetSource, ExperimentConfig, GridAxes, RunSpec, SweepTag, Trainer, TrainingScheme, CONFIG_VERSION,
};
pub use exec::{
    activation_sweep, degree_width_sweep, execute_run, matched_pairs, run_experiment, run_specs, select_best,
    spec_from_record, sweep_scheme, MatchedPair, PreparedData, RunRecord, RunStatus, SelectionRule,
};
pub use report::{emit_plots, read_jsonl, report_text, write_jsonl, write_results};
pub use train::{evaluate, layer_predict, train_backprop, train_frozen_head, History, TrainOptions};
