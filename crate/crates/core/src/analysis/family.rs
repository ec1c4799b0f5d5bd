use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logic::TaskSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyBase {
    /// Any map from support vectors to concept vectors.
    FullTable,
    /// One symbol map per concept slot.
    PerSlot,
    /// One symbol map applied to every slot.
    SharedSlot,
}

impl FamilyBase {
    pub fn name(self) -> &'static str {
        match self {
            FamilyBase::FullTable => "fulltable",
            FamilyBase::PerSlot => "perslot",
            FamilyBase::SharedSlot => "sharedslot",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fulltable" | "full_table" => Ok(FamilyBase::FullTable),
            "perslot" | "per_slot" => Ok(FamilyBase::PerSlot),
            "sharedslot" | "shared_slot" => Ok(FamilyBase::SharedSlot),
            other => Err(Error::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}

impl fmt::Display for FamilyBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Forces part of the remap to act as the identity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pin {
    /// `alpha(g) = g`.
    Vector { g: Vec<u32> },
    /// Every support vector with `value` in `slot` (any slot when `None`)
    /// keeps that value there.
    Symbol {
        #[serde(default)]
        slot: Option<usize>,
        value: u32,
    },
}

/// Rules out particular outputs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forbidden {
    /// `alpha(from) != to`.
    Vector { from: Vec<u32>, to: Vec<u32> },
    /// No support vector with `from` in `slot` is sent to one with `to` there.
    Symbol {
        #[serde(default)]
        slot: Option<usize>,
        from: u32,
        to: u32,
    },
}

/// The set of remaps a concept extractor architecture can express.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemapFamily {
    pub base: FamilyBase,
    #[serde(default)]
    pub pins: Vec<Pin>,
    #[serde(default)]
    pub injective: bool,
    #[serde(default)]
    pub forbidden: Vec<Forbidden>,
}

impl RemapFamily {
    pub fn new(base: FamilyBase) -> Self {
        Self {
            base,
            pins: Vec::new(),
            injective: false,
            forbidden: Vec::new(),
        }
    }

    pub fn with_pin(mut self, pin: Pin) -> Self {
        if !self.pins.contains(&pin) {
            self.pins.push(pin);
        }
        self
    }

    pub fn injective(mut self) -> Self {
        self.injective = true;
        self
    }

    /// Adds a forbidden output; fails if it would exclude the identity.
    pub fn with_forbidden(mut self, f: Forbidden) -> Result<Self> {
        let excludes_identity = match &f {
            Forbidden::Vector { from, to } => from == to,
            Forbidden::Symbol { from, to, .. } => from == to,
        };
        if excludes_identity {
            return Err(Error::IdentityExcluded);
        }
        if !self.forbidden.contains(&f) {
            self.forbidden.push(f);
        }
        Ok(self)
    }

    /// Checks the family against a task: shapes, slot indices and identity
    /// membership.
    pub fn validate(&self, task: &TaskSpec) -> Result<()> {
        let space = task.concepts();
        if self.base == FamilyBase::SharedSlot && space.homogeneous_card().is_none() {
            return Err(Error::HeterogeneousDomains);
        }
        for f in &self.forbidden {
            match f {
                Forbidden::Vector { from, to } => {
                    if from == to {
                        return Err(Error::IdentityExcluded);
                    }
                    if !space.contains(from) || !space.contains(to) {
                        return Err(Error::InvalidArgument(format!(
                            "forbidden pair {from:?} -> {to:?} is outside the concept space"
                        )));
                    }
                }
                Forbidden::Symbol { slot, from, to } => {
                    if from == to {
                        return Err(Error::IdentityExcluded);
                    }
                    check_slot(*slot, space.len())?;
                }
            }
        }
        for p in &self.pins {
            match p {
                Pin::Vector { g } => {
                    if !space.contains(g) || task.support().binary_search(&space.index_of(g)).is_err() {
                        return Err(Error::InvalidArgument(format!(
                            "pinned vector {g:?} is not in the support"
                        )));
                    }
                }
                Pin::Symbol { slot, .. } => check_slot(*slot, space.len())?,
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let mut s = self.base.name().to_string();
        if self.injective {
            s.push_str("+injective");
        }
        if !self.pins.is_empty() {
            s.push_str(&format!("+{}pin", self.pins.len()));
        }
        if !self.forbidden.is_empty() {
            s.push_str(&format!("+{}forbidden", self.forbidden.len()));
        }
        s
    }

    /// True when `to` is an admissible image of support vector `g` under
    /// pins and forbidden pairs (injectivity is a property of the whole
    /// remap and is not checked here).
    pub fn allows(&self, g: &[u32], to: &[u32]) -> bool {
        for p in &self.pins {
            match p {
                Pin::Vector { g: pinned } => {
                    if pinned.as_slice() == g && to != g {
                        return false;
                    }
                }
                Pin::Symbol { slot, value } => {
                    for i in slots(*slot, g.len()) {
                        if g[i] == *value && to[i] != *value {
                            return false;
                        }
                    }
                }
            }
        }
        for f in &self.forbidden {
            match f {
                Forbidden::Vector { from, to: t } => {
                    if from.as_slice() == g && t.as_slice() == to {
                        return false;
                    }
                }
                Forbidden::Symbol { slot, from, to: t } => {
                    for i in slots(*slot, g.len()) {
                        if g[i] == *from && to[i] == *t {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

fn check_slot(slot: Option<usize>, k: usize) -> Result<()> {
    match slot {
        Some(s) if s >= k => Err(Error::InvalidArgument(format!("slot {s} out of range"))),
        _ => Ok(()),
    }
}

pub(crate) fn slots(slot: Option<usize>, k: usize) -> std::ops::Range<usize> {
    match slot {
        Some(s) => s..s + 1,
        None => 0..k,
    }
}

/// One free choice of the family: the image of a support row (full table)
/// or of a symbol (factorized forms).
#[derive(Clone, Debug)]
pub(crate) struct Param {
    pub slot: Option<usize>,
    /// Support row index for full tables, source symbol otherwise.
    pub from: u32,
    pub codomain: usize,
}

/// Parameterization of a family over a task's support.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub base: FamilyBase,
    pub params: Vec<Param>,
    /// For factorized forms, `param_of[row][slot]` is the parameter that
    /// decides slot `slot` of row `row`.
    pub param_of: Vec<Vec<usize>>,
    pub support: Vec<Vec<u32>>,
    pub strides: Vec<usize>,
}

impl Layout {
    pub fn new(base: FamilyBase, task: &TaskSpec) -> Result<Self> {
        let space = task.concepts();
        let support = task.support_vectors();
        let k = space.len();
        let cards = space.cards();
        let mut strides = vec![1usize; k];
        for i in (0..k.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * cards[i + 1] as usize;
        }
        let mut params = Vec::new();
        let mut param_of = vec![Vec::new(); support.len()];
        match base {
            FamilyBase::FullTable => {
                for (row, _) in support.iter().enumerate() {
                    param_of[row] = vec![row];
                    params.push(Param {
                        slot: None,
                        from: row as u32,
                        codomain: space.size(),
                    });
                }
            }
            FamilyBase::PerSlot => {
                for (slot, card) in cards.iter().enumerate() {
                    let domain: BTreeSet<u32> = support.iter().map(|g| g[slot]).collect();
                    let offset = params.len();
                    let domain: Vec<u32> = domain.into_iter().collect();
                    for v in &domain {
                        params.push(Param {
                            slot: Some(slot),
                            from: *v,
                            codomain: *card as usize,
                        });
                    }
                    for (row, g) in support.iter().enumerate() {
                        param_of[row].push(offset + domain.binary_search(&g[slot]).unwrap());
                    }
                }
            }
            FamilyBase::SharedSlot => {
                let card = space.homogeneous_card().ok_or(Error::HeterogeneousDomains)?;
                let domain: Vec<u32> = support
                    .iter()
                    .flatten()
                    .copied()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                for v in &domain {
                    params.push(Param {
                        slot: None,
                        from: *v,
                        codomain: card as usize,
                    });
                }
                for (row, g) in support.iter().enumerate() {
                    param_of[row] = g.iter().map(|x| domain.binary_search(x).unwrap()).collect();
                }
            }
        }
        Ok(Self {
            base,
            params,
            param_of,
            support,
            strides,
        })
    }

    /// Number of raw candidates, saturating.
    pub fn candidates(&self) -> u128 {
        self.params
            .iter()
            .fold(1u128, |a, p| a.saturating_mul(p.codomain as u128))
    }

    /// Concept index of the image of support row `row`.
    pub fn image(&self, vals: &[usize], row: usize) -> usize {
        match self.base {
            FamilyBase::FullTable => vals[row],
            _ => self.param_of[row]
                .iter()
                .zip(&self.strides)
                .map(|(p, s)| vals[*p] * s)
                .sum(),
        }
    }

    /// Parameter values of the identity remap.
    #[cfg(test)]
    pub fn identity(&self, task: &TaskSpec) -> Vec<usize> {
        match self.base {
            FamilyBase::FullTable => task.support().to_vec(),
            _ => self.params.iter().map(|p| p.from as usize).collect(),
        }
    }
}
