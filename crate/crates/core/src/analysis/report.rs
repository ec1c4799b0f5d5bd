use serde::{Deserialize, Serialize};

use crate::analysis::brute::{count_rss_bruteforce, enumerate_rss, DEFAULT_BUDGET};
use crate::analysis::encode::count_rss_sat;
use crate::analysis::family::{Layout, RemapFamily};
use crate::analysis::metrics::{knowledge_complexity, KnowledgeComplexity};
use crate::error::{Error, Result};
use crate::logic::{check_k_unambiguity, InferenceTable, TaskSpec, Unambiguity, Variable};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Brute force when the family fits the budget, model counting otherwise.
    #[default]
    Auto,
    Sat,
    Brute,
}

#[derive(Clone, Debug)]
pub struct AnalyzeOptions {
    pub method: Method,
    pub budget: u128,
    /// Maximum number of remaps listed in the report.
    pub cap: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            budget: DEFAULT_BUDGET,
            cap: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum KUnambiguity {
    Unambiguous,
    Ambiguous { witness: (u32, u32) },
    NotApplicable { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub concepts: Vec<Variable>,
    pub labels: Vec<Variable>,
    pub concept_space_size: usize,
    pub support_size: usize,
}

impl TaskSummary {
    pub fn of(task: &TaskSpec) -> Self {
        Self {
            concepts: task.concepts().vars().to_vec(),
            labels: task.labels().vars().to_vec(),
            concept_space_size: task.concepts().size(),
            support_size: task.support().len(),
        }
    }
}

pub type Pairs = Vec<(Vec<u32>, Vec<u32>)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub task: TaskSummary,
    pub family: RemapFamily,
    pub family_description: String,
    pub family_size: String,
    pub method: Method,
    pub rs_count: u128,
    pub knowledge_complexity: KnowledgeComplexity,
    pub k_unambiguity: KUnambiguity,
    /// Largest collapse among the listed shortcuts.
    pub collapse: f64,
    /// Whether the shortcuts could be listed within the budget.
    pub enumerated: bool,
    pub remaps: Vec<Pairs>,
}

/// Counts the shortcuts of `family` with the requested method.
pub fn count_rss(
    task: &TaskSpec,
    table: &InferenceTable,
    family: &RemapFamily,
    method: Method,
    budget: u128,
) -> Result<(u128, Method)> {
    match method {
        Method::Brute => Ok((count_rss_bruteforce(task, table, family, budget)?, Method::Brute)),
        Method::Sat => Ok((count_rss_sat(task, table, family)?, Method::Sat)),
        Method::Auto => {
            family.validate(task)?;
            if Layout::new(family.base, task)?.candidates() <= budget {
                Ok((count_rss_bruteforce(task, table, family, budget)?, Method::Brute))
            } else {
                Ok((count_rss_sat(task, table, family)?, Method::Sat))
            }
        }
    }
}

pub fn k_unambiguity(table: &InferenceTable) -> KUnambiguity {
    match check_k_unambiguity(table, table.concepts().len()) {
        Ok(Unambiguity::Unambiguous) => KUnambiguity::Unambiguous,
        Ok(Unambiguity::Ambiguous { witness }) => KUnambiguity::Ambiguous { witness },
        Err(e) => KUnambiguity::NotApplicable { reason: e.to_string() },
    }
}

pub fn analyze(
    task: &TaskSpec,
    table: &InferenceTable,
    family: &RemapFamily,
    opts: &AnalyzeOptions,
) -> Result<DiagnosticsReport> {
    let (rs_count, method) = count_rss(task, table, family, opts.method, opts.budget)?;
    let support = task.support_vectors();
    let (enumerated, remaps) = if opts.cap == 0 {
        (true, Vec::new())
    } else {
        match enumerate_rss(task, table, family, opts.cap, opts.budget) {
            Ok(e) => {
                if e.count != rs_count {
                    return Err(Error::InvalidArgument(format!(
                        "enumeration found {} shortcuts but counting found {rs_count}",
                        e.count
                    )));
                }
                (true, e.remaps)
            }
            Err(Error::BudgetExceeded { .. }) => (false, Vec::new()),
            Err(e) => return Err(e),
        }
    };
    let mut collapse: f64 = 0.0;
    let mut listed = Vec::with_capacity(remaps.len());
    for r in &remaps {
        collapse = collapse.max(r.collapse(&support)?);
        listed.push(r.to_pairs(&support)?);
    }
    Ok(DiagnosticsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        manifest: None,
        task: TaskSummary::of(task),
        family: family.clone(),
        family_description: family.describe(),
        family_size: Layout::new(family.base, task)?.candidates().to_string(),
        method,
        rs_count,
        knowledge_complexity: knowledge_complexity(task, table, None)?,
        k_unambiguity: k_unambiguity(table),
        collapse,
        enumerated,
        remaps: listed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::family::FamilyBase;
    use crate::logic::{build_beta_star, parse_task};

    #[test]
    fn boia_report() {
        let task = parse_task("concept C_red : 2; concept C_ped : 2; label Y : 2;\nknowledge { (C_ped=1 | C_red=1) <-> Y=0 }").unwrap();
        let table = build_beta_star(&task).unwrap();
        let family = RemapFamily::new(FamilyBase::FullTable);
        let r = analyze(&task, &table, &family, &AnalyzeOptions::default()).unwrap();
        assert_eq!(r.rs_count, 26);
        assert_eq!(r.remaps.len(), 26);
        assert!(r.enumerated);
        assert_eq!(r.knowledge_complexity.value, 2.0);
        // some shortcut sends all three stop vectors to one
        assert!((r.collapse - 0.5).abs() < 1e-12);
        let sat = analyze(&task, &table, &family, &AnalyzeOptions { method: Method::Sat, ..Default::default() }).unwrap();
        assert_eq!(sat.rs_count, 26);
        assert_eq!(sat.method, Method::Sat);
    }
}
