//! Desk-scale training harness: synthetic renderings of a task, a small
//! concept extractor trained with the four objectives, ensembles and
//! empirical remap estimates.

pub mod bears;
pub mod data;
pub mod eval;
pub mod io;
pub mod model;
pub mod objective;
pub mod trainer;

pub use bears::{
    expand_annotations, random_queries, select_queries, slot_entropy, train_bears_ensemble, BearsOutcome, Ensemble, EnsembleConfig,
    ExcludedMember, Query,
};
pub use data::{generate_dataset, Dataset, Render, Renderer, SyntheticTaskConfig};
pub use eval::{estimate_alpha, evaluate, EmpiricalAlpha, EvalMetrics};
pub use model::{ConceptModel, Extractor, HeadMode, Linear, ModelConfig, Oracle, OracleMap, Prediction};
pub use objective::{Extras, Mitigation, Objective, TrainConfig};
pub use trainer::{build_extractor, train, train_with, EpochRecord, TrainOutcome};
