//! Reasoning-shortcut analysis: remap families, exhaustive and model-counting
//! shortcut counts, and the diagnostic metrics.

pub mod brute;
pub mod cnf;
pub mod encode;
pub mod family;
pub mod metrics;
pub mod mixture;
pub mod remap;
pub mod report;

pub use brute::{count_rss_bruteforce, enumerate_rss, Enumeration, DEFAULT_BUDGET};
pub use cnf::{count_models, Cnf, Lit};
pub use encode::{count_rss_sat, encode, Encoding};
pub use family::{FamilyBase, Forbidden, Pin, RemapFamily};
pub use metrics::{collapse_metric, default_label_dist, knowledge_complexity, rs_risk, KnowledgeComplexity};
pub use mixture::{mix_remaps, verify_mixture_is_rs, MixtureCheck, StochasticRemap};
pub use remap::{is_rs, preserves_labels, ConceptRemap};
pub use report::{analyze, count_rss, k_unambiguity, AnalyzeOptions, DiagnosticsReport, KUnambiguity, Method, TaskSummary, REPORT_SCHEMA_VERSION};
