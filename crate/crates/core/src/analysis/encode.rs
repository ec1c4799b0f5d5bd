//! Shortcut counting as model counting.
//!
//! Variable `M[r][c]` says that support row `r` is sent to concept vector
//! `c`; only label-preserving images get a variable. Factorized families add
//! symbol variables `S[p][u]` (parameter `p` takes value `u`) tied to the
//! rows by `M[r][c] <-> AND_i S[param_of(r,i)][c_i]`.

use std::collections::BTreeMap;

use crate::analysis::cnf::{count_models, Cnf, Lit};
use crate::analysis::family::{FamilyBase, Layout, Pin, RemapFamily};
use crate::error::{Error, Result};
use crate::logic::{InferenceTable, TaskSpec};

pub struct Encoding {
    pub cnf: Cnf,
    /// `rows[r]` maps image concept index to its `M` variable.
    pub rows: Vec<BTreeMap<usize, Lit>>,
    /// `symbols[p][u]` for factorized families.
    pub symbols: Vec<Vec<Lit>>,
    layout: Layout,
}

impl Encoding {
    /// Units that force the identity remap.
    fn identity_units(&self, task: &TaskSpec) -> Vec<Lit> {
        let mut out: Vec<Lit> = task
            .support()
            .iter()
            .enumerate()
            .map(|(r, g)| self.rows[r][g])
            .collect();
        for (p, param) in self.layout.params.iter().enumerate() {
            if let Some(s) = self.symbols.get(p) {
                out.push(s[param.from as usize]);
            }
        }
        out
    }
}

pub fn encode(task: &TaskSpec, table: &InferenceTable, family: &RemapFamily) -> Result<Encoding> {
    family.validate(task)?;
    let layout = Layout::new(family.base, task)?;
    let space = task.concepts();
    let mut cnf = Cnf::new();

    // label preimages: concept vectors whose only consistent label is y
    let mut preimage: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in 0..space.size() {
        if let Some(y) = table.label_of(c) {
            preimage.entry(y).or_default().push(c);
        }
    }

    let mut rows: Vec<BTreeMap<usize, Lit>> = Vec::with_capacity(layout.support.len());
    let mut symbols: Vec<Vec<Lit>> = Vec::new();

    if family.base == FamilyBase::FullTable {
        for (r, g) in layout.support.iter().enumerate() {
            let y = table.label_of(task.support()[r]).ok_or_else(|| {
                Error::InvalidTask(format!("support vector {g:?} has no unique label"))
            })?;
            let mut row = BTreeMap::new();
            for c in &preimage[&y] {
                let m = cnf.fresh();
                row.insert(*c, m);
                if !family.allows(g, &space.vector_of(*c)) {
                    cnf.unit(-m);
                }
            }
            let vars: Vec<Lit> = row.values().copied().collect();
            cnf.exactly_one(&vars);
            rows.push(row);
        }
    } else {
        for param in &layout.params {
            let vars: Vec<Lit> = (0..param.codomain).map(|_| cnf.fresh()).collect();
            cnf.exactly_one(&vars);
            symbols.push(vars);
        }
        for pin in &family.pins {
            if let Pin::Symbol { slot, value } = pin {
                for (p, param) in layout.params.iter().enumerate() {
                    let hit = param.from == *value
                        && match (family.base, param.slot) {
                            (FamilyBase::PerSlot, Some(s)) => slot.is_none_or(|want| want == s),
                            _ => true,
                        };
                    if hit {
                        cnf.unit(symbols[p][*value as usize]);
                    }
                }
            }
        }
        for (r, g) in layout.support.iter().enumerate() {
            let y = table.label_of(task.support()[r]).ok_or_else(|| {
                Error::InvalidTask(format!("support vector {g:?} has no unique label"))
            })?;
            // distinct parameters deciding this row, in slot order
            let mut distinct: Vec<usize> = Vec::new();
            for p in &layout.param_of[r] {
                if !distinct.contains(p) {
                    distinct.push(*p);
                }
            }
            let mut row = BTreeMap::new();
            let mut choice = vec![0usize; distinct.len()];
            'tuples: loop {
                let value_of = |p: usize| choice[distinct.iter().position(|d| *d == p).unwrap()];
                let c: usize = layout.param_of[r]
                    .iter()
                    .zip(&layout.strides)
                    .map(|(p, s)| value_of(*p) * s)
                    .sum();
                let lits: Vec<Lit> = distinct
                    .iter()
                    .zip(&choice)
                    .map(|(p, u)| symbols[*p][*u])
                    .collect();
                let ok = table.label_of(c) == Some(y) && family.allows(g, &space.vector_of(c));
                if ok {
                    let m = cnf.fresh();
                    for s in &lits {
                        cnf.add(vec![-m, *s]);
                    }
                    let mut back: Vec<Lit> = lits.iter().map(|s| -s).collect();
                    back.push(m);
                    cnf.add(back);
                    row.insert(c, m);
                } else {
                    cnf.add(lits.iter().map(|s| -s).collect());
                }
                let mut i = choice.len();
                loop {
                    if i == 0 {
                        break 'tuples;
                    }
                    i -= 1;
                    choice[i] += 1;
                    if choice[i] < layout.params[distinct[i]].codomain {
                        continue 'tuples;
                    }
                    choice[i] = 0;
                }
            }
            let vars: Vec<Lit> = row.values().copied().collect();
            if vars.is_empty() {
                return Err(Error::IdentityExcluded);
            }
            cnf.add(vars);
            rows.push(row);
        }
    }

    for pin in &family.pins {
        if let Pin::Vector { g } = pin {
            let r = task
                .support()
                .binary_search(&space.index_of(g))
                .expect("validated pin");
            cnf.unit(rows[r][&space.index_of(g)]);
        }
    }

    if family.injective {
        let mut columns: BTreeMap<usize, Vec<Lit>> = BTreeMap::new();
        for row in &rows {
            for (c, m) in row {
                columns.entry(*c).or_default().push(*m);
            }
        }
        for col in columns.values() {
            cnf.at_most_one(col);
        }
    }

    Ok(Encoding {
        cnf,
        rows,
        symbols,
        layout,
    })
}

/// Exact count of shortcuts in `family` by model counting.
pub fn count_rss_sat(task: &TaskSpec, table: &InferenceTable, family: &RemapFamily) -> Result<u128> {
    let enc = encode(task, table, family)?;
    let mut pinned = enc.cnf.clone();
    for u in enc.identity_units(task) {
        pinned.unit(u);
    }
    if count_models(&pinned)? != 1 {
        return Err(Error::IdentityExcluded);
    }
    let total = count_models(&enc.cnf)?;
    Ok(total - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::brute::{count_rss_bruteforce, DEFAULT_BUDGET};
    use crate::analysis::family::Forbidden;
    use crate::logic::{build_beta_star, parse_task};

    fn both(text: &str, family: &RemapFamily) -> (u128, u128) {
        let task = parse_task(text).unwrap();
        let table = build_beta_star(&task).unwrap();
        (
            count_rss_sat(&task, &table, family).unwrap(),
            count_rss_bruteforce(&task, &table, family, DEFAULT_BUDGET).unwrap(),
        )
    }

    const BOIA: &str = "concept C_red : 2; concept C_ped : 2; label Y : 2;\nknowledge { (C_ped=1 | C_red=1) <-> Y=0 }";
    const MNIST: &str = "concept C1 : 10; concept C2 : 10; label Y : 19;\nsupport { (4,5); (2,3); }\nknowledge { Y == C1 + C2 }";

    #[test]
    fn boia_full_table() {
        assert_eq!(both(BOIA, &RemapFamily::new(FamilyBase::FullTable)), (26, 26));
        assert_eq!(both(BOIA, &RemapFamily::new(FamilyBase::FullTable).injective()), (5, 5));
    }

    #[test]
    fn factorized_families_agree() {
        for base in [FamilyBase::PerSlot, FamilyBase::SharedSlot] {
            let f = RemapFamily::new(base);
            let (s, b) = both(MNIST, &f);
            assert_eq!(s, b);
            let (s, b) = both(BOIA, &f.clone().injective());
            assert_eq!(s, b);
            let pinned = f.clone().with_pin(Pin::Symbol { slot: None, value: 4 });
            let (s, b) = both(MNIST, &pinned);
            assert_eq!(s, b);
            let forbid = f.with_forbidden(Forbidden::Symbol { slot: Some(0), from: 2, to: 4 }).unwrap();
            let (s, b) = both(MNIST, &forbid);
            assert_eq!(s, b);
        }
    }
}
