//! Task representation: spaces, knowledge, parsing and the compiled
//! ground-truth inference table.

pub mod formula;
pub mod parse;
pub mod space;
pub mod table;
pub mod task;

pub use formula::{evaluate, Assignment, Connective, Expr, Factor, Formula, Relation, Term};
pub use parse::{parse_formula, parse_task, parse_task_with_cap, TaskFile};
pub use space::{ConceptSpace, LabelSpace, Space, Variable, DEFAULT_CAP};
pub use table::{build_beta_star, check_k_unambiguity, InferenceTable, Unambiguity};
pub use task::{enumerate_models, TaskSpec};
