//! Training loops, evaluation, checkpoint-score averaging, norm telemetry and
//! the experiment matrix.

mod config;
mod evaluate;
mod experiment;
pub mod telemetry;
mod trainer;

pub use config::{domain_file_name, AuxLoss, DataSource, ExperimentConfig, Setting};
pub use evaluate::{accuracy_of_scores, average_checkpoint_scores, averaged_scores, evaluate};
pub use experiment::{
    run_experiment, run_experiment_matrix, standard_pairs, CellSummary, DomainPair, Method, MethodRow, ResultsTable,
    RunResult, DEFAULT_TOP_K,
};
pub use telemetry::{
    parse_telemetry_csv, records_to_csv, rho_deviation_deciles, top_k_norm_share, EvalMode, EvalRecord,
    IterationRecord, NormTelemetry, TopKShare, TELEMETRY_HEADER,
};
pub use trainer::{train_dg, train_uda, TrainOutcome};
