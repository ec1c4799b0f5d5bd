use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the size of any enumerated joint space.
pub const DEFAULT_CAP: u64 = 1 << 20;

/// A named categorical variable with values `0..card`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub card: u32,
}

impl Variable {
    pub fn new(name: impl Into<String>, card: u32) -> Self {
        Self {
            name: name.into(),
            card,
        }
    }
}

/// An ordered product of categorical variables.
///
/// Vectors are enumerated lexicographically with the last variable varying
/// fastest; `index_of` and `vector_of` convert between a vector and its
/// position in that order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Space {
    vars: Vec<Variable>,
    size: usize,
}

pub type ConceptSpace = Space;
pub type LabelSpace = Space;

impl Space {
    /// `kind` is used in error messages ("concept", "label").
    pub fn new(kind: &str, vars: Vec<Variable>, cap: u64) -> Result<Self> {
        if vars.is_empty() {
            return Err(Error::InvalidTask(format!("at least one {kind} required")));
        }
        let mut seen = HashSet::new();
        let mut size: u128 = 1;
        for v in &vars {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidTask(format!(
                    "duplicate {kind} name `{}`",
                    v.name
                )));
            }
            if v.card < 2 {
                return Err(Error::InvalidTask(format!(
                    "{kind} `{}` has cardinality {} (need at least 2)",
                    v.name, v.card
                )));
            }
            size = size.saturating_mul(v.card as u128);
        }
        if size > cap as u128 {
            return Err(Error::CapExceeded {
                size,
                cap: cap as u128,
            });
        }
        Ok(Self {
            vars,
            size: size as usize,
        })
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    /// Number of variables (slots).
    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Number of joint vectors.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn cards(&self) -> Vec<u32> {
        self.vars.iter().map(|v| v.card).collect()
    }

    /// The shared cardinality when every slot has the same one.
    pub fn homogeneous_card(&self) -> Option<u32> {
        let first = self.vars[0].card;
        self.vars.iter().all(|v| v.card == first).then_some(first)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn contains(&self, vector: &[u32]) -> bool {
        vector.len() == self.vars.len() && vector.iter().zip(&self.vars).all(|(x, v)| *x < v.card)
    }

    pub fn index_of(&self, vector: &[u32]) -> usize {
        debug_assert!(self.contains(vector), "{vector:?} not in space");
        vector
            .iter()
            .zip(&self.vars)
            .fold(0usize, |acc, (x, v)| acc * v.card as usize + *x as usize)
    }

    pub fn vector_of(&self, mut index: usize) -> Vec<u32> {
        let mut out = vec![0u32; self.vars.len()];
        for (slot, v) in self.vars.iter().enumerate().rev() {
            out[slot] = (index % v.card as usize) as u32;
            index /= v.card as usize;
        }
        out
    }

    pub fn vectors(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        (0..self.size).map(|i| self.vector_of(i))
    }
}
