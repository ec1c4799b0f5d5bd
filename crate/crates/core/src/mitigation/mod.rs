//! Mitigation levers as task and family transforms, and before/after
//! shortcut-count reports.

pub mod transforms;
pub mod whatif;

pub use transforms::{constrain_family, merge_multitask, pin_all, transform_support, FamilyConstraint, SupportMode};
pub use whatif::{
    summary_csv, what_if, CombinationOutcome, Effect, MitigationSpec, Outcome, StrategyOutcome, TaskSource,
    WhatIfOptions, WhatIfReport, WHATIF_SCHEMA_VERSION,
};
