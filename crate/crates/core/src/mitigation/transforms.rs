use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::analysis::{FamilyBase, Pin, RemapFamily};
use crate::error::{Error, Result};
use crate::logic::{Connective, Formula, Space, TaskSpec, Variable};

/// Conjoins the knowledge of tasks over one concept space. Label spaces are
/// concatenated; a label whose name is already taken gets a numeric suffix.
/// The support is the intersection of the supports.
pub fn merge_multitask(tasks: &[TaskSpec]) -> Result<TaskSpec> {
    let first = tasks
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to merge".into()))?;
    let k = first.concepts().len();
    let mut names: HashSet<String> = first.concepts().vars().iter().map(|v| v.name.clone()).collect();
    let mut labels: Vec<Variable> = Vec::new();
    let mut knowledge: Option<Formula> = None;
    let mut support: Vec<usize> = first.support().to_vec();
    for t in tasks {
        if t.concepts() != first.concepts() {
            return Err(Error::InvalidTask("concept-space mismatch between merged tasks".into()));
        }
        let offset = labels.len();
        for v in t.labels().vars() {
            let mut name = v.name.clone();
            let mut n = 2;
            while names.contains(&name) {
                name = format!("{}_{n}", v.name);
                n += 1;
            }
            names.insert(name.clone());
            labels.push(Variable::new(name, v.card));
        }
        let k_i = t.knowledge().map_vars(&|v| if v < k { v } else { v + offset });
        knowledge = Some(match knowledge {
            None => k_i,
            Some(prev) => Formula::binary(Connective::And, prev, k_i),
        });
        support.retain(|c| t.support().binary_search(c).is_ok());
    }
    if support.is_empty() {
        return Err(Error::InvalidTask("merged tasks share no support vector".into()));
    }
    let label_space = Space::new("label", labels, first.cap())?;
    let support = support.iter().map(|c| first.concepts().vector_of(*c)).collect();
    TaskSpec::new(
        first.concepts().clone(),
        label_space,
        knowledge.unwrap(),
        Some(support),
        None,
        first.cap(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    Set,
    Add,
    Remove,
}

pub fn transform_support(task: &TaskSpec, vectors: &[Vec<u32>], mode: SupportMode) -> Result<TaskSpec> {
    for v in vectors {
        if !task.concepts().contains(v) {
            return Err(Error::InvalidTask(format!("{v:?} is not in the concept space")));
        }
    }
    let current = task.support_vectors();
    let next: Vec<Vec<u32>> = match mode {
        SupportMode::Set => vectors.to_vec(),
        SupportMode::Add => current.iter().chain(vectors).cloned().collect(),
        SupportMode::Remove => current.iter().filter(|g| !vectors.contains(g)).cloned().collect(),
    };
    if next.is_empty() {
        return Err(Error::InvalidTask("support must be nonempty".into()));
    }
    let mut sorted: Vec<usize> = next.iter().map(|g| task.concepts().index_of(g)).collect();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted == task.support() {
        return Ok(task.clone());
    }
    task.with_support(next)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum FamilyConstraint {
    Pin { pins: Vec<Pin> },
    Injective,
    Factorize { shape: FamilyBase },
}

pub fn constrain_family(family: &RemapFamily, constraint: &FamilyConstraint) -> Result<RemapFamily> {
    let mut out = family.clone();
    match constraint {
        FamilyConstraint::Pin { pins } => {
            for p in pins {
                out = out.with_pin(p.clone());
            }
        }
        FamilyConstraint::Injective => out.injective = true,
        FamilyConstraint::Factorize { shape } => match shape {
            FamilyBase::FullTable => {
                return Err(Error::InvalidArgument("factorize needs perslot or sharedslot".into()))
            }
            // a shared map is already per-slot expressible; keep the narrower family
            FamilyBase::PerSlot if family.base == FamilyBase::SharedSlot => {}
            s => out.base = *s,
        },
    }
    Ok(out)
}

/// Pins every support vector to itself.
pub fn pin_all(task: &TaskSpec) -> Vec<Pin> {
    task.support_vectors().into_iter().map(|g| Pin::Vector { g }).collect()
}
