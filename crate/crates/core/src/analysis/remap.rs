use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::analysis::family::{FamilyBase, Layout};
use crate::error::{Error, Result};
use crate::logic::{InferenceTable, Space};

/// A deterministic remap of ground-truth concept vectors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConceptRemap {
    /// Explicit `g -> c` pairs.
    FullTable { pairs: Vec<(Vec<u32>, Vec<u32>)> },
    /// `maps[slot]` lists `from -> to` symbol pairs for that slot.
    PerSlot { maps: Vec<Vec<(u32, u32)>> },
    /// One `from -> to` symbol map shared by every slot.
    SharedSlot { map: Vec<(u32, u32)> },
}

fn lookup(map: &[(u32, u32)], x: u32) -> Option<u32> {
    map.iter().find(|(f, _)| *f == x).map(|(_, t)| *t)
}

impl ConceptRemap {
    pub fn identity(space: &Space, support: &[Vec<u32>], base: FamilyBase) -> Self {
        match base {
            FamilyBase::FullTable => ConceptRemap::FullTable {
                pairs: support.iter().map(|g| (g.clone(), g.clone())).collect(),
            },
            FamilyBase::PerSlot => ConceptRemap::PerSlot {
                maps: (0..space.len())
                    .map(|i| {
                        let d: BTreeSet<u32> = support.iter().map(|g| g[i]).collect();
                        d.into_iter().map(|v| (v, v)).collect()
                    })
                    .collect(),
            },
            FamilyBase::SharedSlot => {
                let d: BTreeSet<u32> = support.iter().flatten().copied().collect();
                ConceptRemap::SharedSlot {
                    map: d.into_iter().map(|v| (v, v)).collect(),
                }
            }
        }
    }

    pub(crate) fn from_params(layout: &Layout, vals: &[usize], space: &Space) -> Self {
        match layout.base {
            FamilyBase::FullTable => ConceptRemap::FullTable {
                pairs: layout
                    .support
                    .iter()
                    .zip(vals)
                    .map(|(g, c)| (g.clone(), space.vector_of(*c)))
                    .collect(),
            },
            FamilyBase::PerSlot => {
                let mut maps = vec![Vec::new(); space.len()];
                for (p, v) in layout.params.iter().zip(vals) {
                    maps[p.slot.unwrap()].push((p.from, *v as u32));
                }
                ConceptRemap::PerSlot { maps }
            }
            FamilyBase::SharedSlot => ConceptRemap::SharedSlot {
                map: layout
                    .params
                    .iter()
                    .zip(vals)
                    .map(|(p, v)| (p.from, *v as u32))
                    .collect(),
            },
        }
    }

    /// Image of `g`, or `PartialRemap` if the remap does not cover it.
    pub fn apply(&self, g: &[u32]) -> Result<Vec<u32>> {
        let partial = || Error::PartialRemap(g.to_vec());
        match self {
            ConceptRemap::FullTable { pairs } => pairs
                .iter()
                .find(|(from, _)| from.as_slice() == g)
                .map(|(_, to)| to.clone())
                .ok_or_else(partial),
            ConceptRemap::PerSlot { maps } => {
                if maps.len() != g.len() {
                    return Err(partial());
                }
                g.iter()
                    .zip(maps)
                    .map(|(x, m)| lookup(m, *x).ok_or_else(partial))
                    .collect()
            }
            ConceptRemap::SharedSlot { map } => {
                g.iter().map(|x| lookup(map, *x).ok_or_else(partial)).collect()
            }
        }
    }

    /// Explicit `g -> alpha(g)` pairs over `support`.
    pub fn to_pairs(&self, support: &[Vec<u32>]) -> Result<Vec<(Vec<u32>, Vec<u32>)>> {
        support.iter().map(|g| Ok((g.clone(), self.apply(g)?))).collect()
    }

    pub fn is_identity_on(&self, support: &[Vec<u32>]) -> Result<bool> {
        for g in support {
            if self.apply(g)? != *g {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Fraction of support vectors that share an image with another one:
    /// `1 - |alpha(supp)| / |supp|`.
    pub fn collapse(&self, support: &[Vec<u32>]) -> Result<f64> {
        let image: BTreeSet<Vec<u32>> = support
            .iter()
            .map(|g| self.apply(g))
            .collect::<Result<_>>()?;
        Ok(1.0 - image.len() as f64 / support.len() as f64)
    }
}

/// True when `alpha(g)` has exactly the label of `g` on every support
/// vector.
pub fn preserves_labels(alpha: &ConceptRemap, table: &InferenceTable, support: &[Vec<u32>]) -> Result<bool> {
    let space = table.concepts();
    for g in support {
        let c = alpha.apply(g)?;
        if !space.contains(&c) {
            return Err(Error::InvalidArgument(format!("image {c:?} is outside the concept space")));
        }
        let want = table.label_of(space.index_of(g));
        if want.is_none() || table.label_of(space.index_of(&c)) != want {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A reasoning shortcut: label-preserving on the support and not the
/// identity there.
pub fn is_rs(alpha: &ConceptRemap, table: &InferenceTable, support: &[Vec<u32>]) -> Result<bool> {
    Ok(preserves_labels(alpha, table, support)? && !alpha.is_identity_on(support)?)
}
