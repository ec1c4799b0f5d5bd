//! Exhaustive counting: every parameter assignment of the family is built
//! and checked against the definition directly.

use rayon::prelude::*;

use crate::analysis::family::{Layout, RemapFamily};
use crate::analysis::remap::ConceptRemap;
use crate::error::{Error, Result};
use crate::logic::{InferenceTable, TaskSpec};

pub const DEFAULT_BUDGET: u128 = 100_000_000;

/// Result of an enumeration: the first remaps in canonical order and the
/// total number of shortcuts.
#[derive(Clone, Debug, PartialEq)]
pub struct Enumeration {
    pub count: u128,
    pub remaps: Vec<ConceptRemap>,
}

struct Checker<'a> {
    task: &'a TaskSpec,
    table: &'a InferenceTable,
    family: &'a RemapFamily,
    layout: Layout,
    targets: Vec<Option<usize>>,
    constrained: bool,
}

impl<'a> Checker<'a> {
    fn new(task: &'a TaskSpec, table: &'a InferenceTable, family: &'a RemapFamily, budget: u128) -> Result<Self> {
        family.validate(task)?;
        let layout = Layout::new(family.base, task)?;
        let candidates = layout.candidates();
        if candidates > budget {
            return Err(Error::BudgetExceeded { candidates, budget });
        }
        let targets = task.support().iter().map(|g| table.label_of(*g)).collect();
        let constrained = !family.pins.is_empty() || !family.forbidden.is_empty();
        Ok(Self {
            task,
            table,
            family,
            layout,
            targets,
            constrained,
        })
    }

    /// Whether the candidate is a label-preserving member of the family.
    fn admits(&self, vals: &[usize], images: &mut Vec<usize>) -> bool {
        images.clear();
        for (row, target) in self.targets.iter().enumerate() {
            let img = self.layout.image(vals, row);
            if target.is_none() || self.table.label_of(img) != *target {
                return false;
            }
            images.push(img);
        }
        if self.constrained {
            let space = self.task.concepts();
            for (g, img) in self.layout.support.iter().zip(images.iter()) {
                if !self.family.allows(g, &space.vector_of(*img)) {
                    return false;
                }
            }
        }
        if self.family.injective {
            images.sort_unstable();
            if images.windows(2).any(|w| w[0] == w[1]) {
                return false;
            }
        }
        true
    }

    fn is_identity(&self, vals: &[usize]) -> bool {
        (0..self.targets.len()).all(|row| self.layout.image(vals, row) == self.task.support()[row])
    }

    /// Visits every candidate whose first parameter equals `first`, in
    /// odometer order (last parameter fastest).
    fn walk(&self, first: usize, visit: &mut dyn FnMut(&[usize]) -> bool) {
        let params = &self.layout.params;
        let mut vals = vec![0usize; params.len()];
        vals[0] = first;
        loop {
            if !visit(&vals) {
                return;
            }
            let mut p = params.len() - 1;
            loop {
                if p == 0 {
                    return;
                }
                vals[p] += 1;
                if vals[p] < params[p].codomain {
                    break;
                }
                vals[p] = 0;
                p -= 1;
            }
        }
    }

    fn first_values(&self) -> std::ops::Range<usize> {
        0..self.layout.params[0].codomain
    }
}

/// Number of label-preserving family members, minus the identity.
pub fn count_rss_bruteforce(
    task: &TaskSpec,
    table: &InferenceTable,
    family: &RemapFamily,
    budget: u128,
) -> Result<u128> {
    let ck = Checker::new(task, table, family, budget)?;
    let total: u128 = ck
        .first_values()
        .into_par_iter()
        .map(|first| {
            let mut n = 0u128;
            let mut images = Vec::new();
            ck.walk(first, &mut |vals| {
                if ck.admits(vals, &mut images) {
                    n += 1;
                }
                true
            });
            n
        })
        .sum();
    total.checked_sub(1).ok_or(Error::IdentityExcluded)
}

/// The first `cap` shortcuts in canonical order plus the total count.
pub fn enumerate_rss(
    task: &TaskSpec,
    table: &InferenceTable,
    family: &RemapFamily,
    cap: usize,
    budget: u128,
) -> Result<Enumeration> {
    let ck = Checker::new(task, table, family, budget)?;
    let chunks: Vec<(u128, bool, Vec<Vec<usize>>)> = ck
        .first_values()
        .into_par_iter()
        .map(|first| {
            let mut n = 0u128;
            let mut saw_identity = false;
            let mut kept = Vec::new();
            let mut images = Vec::new();
            ck.walk(first, &mut |vals| {
                if ck.admits(vals, &mut images) {
                    if ck.is_identity(vals) {
                        saw_identity = true;
                    } else {
                        n += 1;
                        if kept.len() < cap {
                            kept.push(vals.to_vec());
                        }
                    }
                }
                true
            });
            (n, saw_identity, kept)
        })
        .collect();
    if !chunks.iter().any(|c| c.1) {
        return Err(Error::IdentityExcluded);
    }
    let count = chunks.iter().map(|c| c.0).sum();
    let remaps = chunks
        .into_iter()
        .flat_map(|c| c.2)
        .take(cap)
        .map(|vals| ConceptRemap::from_params(&ck.layout, &vals, task.concepts()))
        .collect();
    Ok(Enumeration { count, remaps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::family::{FamilyBase, Pin};
    use crate::logic::{build_beta_star, parse_task};

    fn setup(text: &str) -> (TaskSpec, InferenceTable) {
        let task = parse_task(text).unwrap();
        let table = build_beta_star(&task).unwrap();
        (task, table)
    }

    const BOIA: &str = "concept C_red : 2; concept C_ped : 2; label Y : 2;\nknowledge { (C_ped=1 | C_red=1) <-> Y=0 }";

    #[test]
    fn boia_counts() {
        let (task, table) = setup(BOIA);
        let full = RemapFamily::new(FamilyBase::FullTable);
        assert_eq!(count_rss_bruteforce(&task, &table, &full, DEFAULT_BUDGET).unwrap(), 26);
        let inj = full.clone().injective();
        assert_eq!(count_rss_bruteforce(&task, &table, &inj, DEFAULT_BUDGET).unwrap(), 5);
        let mut pinned = full;
        for g in task.support_vectors() {
            pinned = pinned.with_pin(Pin::Vector { g });
        }
        assert_eq!(count_rss_bruteforce(&task, &table, &pinned, DEFAULT_BUDGET).unwrap(), 0);
    }

    #[test]
    fn xor_and_bit_sum() {
        let shared = RemapFamily::new(FamilyBase::SharedSlot);
        let (task, table) = setup("concept A : 2; concept B : 2; label Y : 2; knowledge { (A=1 ^ B=1) <-> Y=1 }");
        let e = enumerate_rss(&task, &table, &shared, 10, DEFAULT_BUDGET).unwrap();
        assert_eq!(e.count, 1);
        assert_eq!(e.remaps, vec![ConceptRemap::SharedSlot { map: vec![(0, 1), (1, 0)] }]);
        let (task, table) = setup("concept A : 2; concept B : 2; label Y : 3; knowledge { Y == A + B }");
        let e = enumerate_rss(&task, &table, &shared, 10, DEFAULT_BUDGET).unwrap();
        assert_eq!(e.count, 0);
        assert!(e.remaps.is_empty());
    }

    #[test]
    fn budget_is_enforced() {
        let (task, table) = setup(BOIA);
        let full = RemapFamily::new(FamilyBase::FullTable);
        assert!(matches!(
            count_rss_bruteforce(&task, &table, &full, 100),
            Err(Error::BudgetExceeded { candidates: 256, budget: 100 })
        ));
    }
}
