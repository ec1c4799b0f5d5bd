//! CNF construction and an exact model counter: DPLL with unit propagation,
//! conflict pruning, splitting into variable-disjoint components and a cache
//! of component counts.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};

/// Literal over a 1-based variable; negative means negated.
pub type Lit = i32;

#[derive(Clone, Debug, Default)]
pub struct Cnf {
    num_vars: u32,
    clauses: Vec<Vec<Lit>>,
}

impl Cnf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self) -> Lit {
        self.num_vars += 1;
        self.num_vars as Lit
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Vec<Lit>] {
        &self.clauses
    }

    /// Adds a clause, dropping duplicate literals and tautologies.
    pub fn add(&mut self, mut clause: Vec<Lit>) {
        clause.sort_unstable_by_key(|l| (l.abs(), *l));
        clause.dedup();
        if clause.windows(2).any(|w| w[0] == -w[1]) {
            return;
        }
        self.clauses.push(clause);
    }

    pub fn unit(&mut self, lit: Lit) {
        self.add(vec![lit]);
    }

    /// Pairwise for short lists; otherwise a prefix-or ladder whose helper
    /// variables are functions of the inputs, so model counts are unchanged.
    pub fn at_most_one(&mut self, xs: &[Lit]) {
        if xs.len() <= 6 {
            for i in 0..xs.len() {
                for j in i + 1..xs.len() {
                    self.add(vec![-xs[i], -xs[j]]);
                }
            }
            return;
        }
        let mut prev = self.fresh();
        self.add(vec![-xs[0], prev]);
        self.add(vec![-prev, xs[0]]);
        for (i, x) in xs.iter().enumerate().skip(1) {
            self.add(vec![-prev, -x]);
            if i + 1 == xs.len() {
                break;
            }
            let s = self.fresh();
            self.add(vec![-prev, s]);
            self.add(vec![-x, s]);
            self.add(vec![-s, prev, *x]);
            prev = s;
        }
    }

    pub fn exactly_one(&mut self, xs: &[Lit]) {
        self.add(xs.to_vec());
        self.at_most_one(xs);
    }

    /// Checks a total assignment (`values[v-1]` for variable `v`).
    pub fn satisfied_by(&self, values: &[bool]) -> bool {
        self.clauses.iter().all(|c| {
            c.iter()
                .any(|l| values[(l.unsigned_abs() - 1) as usize] == (*l > 0))
        })
    }
}

/// Branches above this depth are counted on separate workers.
const PARALLEL_DEPTH: usize = 4;

/// Entries kept in the component cache before it stops growing.
const CACHE_LIMIT: usize = 1 << 20;

type Cache = Mutex<HashMap<Vec<u32>, u128>>;

#[derive(Clone)]
struct Solver<'a> {
    clauses: &'a [Vec<Lit>],
    cache: &'a Cache,
    assign: Vec<i8>,
    trail: Vec<u32>,
}

impl<'a> Solver<'a> {
    fn value(&self, l: Lit) -> i8 {
        let v = self.assign[l.unsigned_abs() as usize];
        if l > 0 {
            v
        } else {
            -v
        }
    }

    fn set(&mut self, l: Lit) {
        self.assign[l.unsigned_abs() as usize] = if l > 0 { 1 } else { -1 };
        self.trail.push(l.unsigned_abs());
    }

    fn undo(&mut self, to: usize) {
        while self.trail.len() > to {
            let v = self.trail.pop().unwrap();
            self.assign[v as usize] = 0;
        }
    }

    /// Unit propagation restricted to `ids`; false on conflict.
    fn propagate(&mut self, ids: &[u32]) -> bool {
        loop {
            let mut changed = false;
            for id in ids {
                let mut unassigned = None;
                let mut open = 0;
                let mut sat = false;
                for l in &self.clauses[*id as usize] {
                    match self.value(*l) {
                        1 => {
                            sat = true;
                            break;
                        }
                        0 => {
                            open += 1;
                            unassigned = Some(*l);
                        }
                        _ => {}
                    }
                }
                if sat {
                    continue;
                }
                match open {
                    0 => return false,
                    1 => {
                        self.set(unassigned.unwrap());
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn open_clause(&self, id: u32) -> bool {
        self.clauses[id as usize].iter().all(|l| self.value(*l) != 1)
    }

    /// Models of the clauses `ids` over the variables `scope`.
    fn count(&mut self, ids: &[u32], scope: &[u32], depth: usize) -> Result<u128> {
        let mark = self.trail.len();
        if !self.propagate(ids) {
            self.undo(mark);
            return Ok(0);
        }
        let open: Vec<u32> = ids.iter().copied().filter(|id| self.open_clause(*id)).collect();

        // union-find over the variables of open clauses
        let mut index: HashMap<u32, usize> = HashMap::new();
        let mut parent: Vec<usize> = Vec::new();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for id in &open {
            let mut first: Option<usize> = None;
            for l in &self.clauses[*id as usize] {
                if self.value(*l) != 0 {
                    continue;
                }
                let v = l.unsigned_abs();
                let n = parent.len();
                let i = *index.entry(v).or_insert_with(|| {
                    parent.push(n);
                    n
                });
                match first {
                    None => first = Some(i),
                    Some(f) => {
                        let (a, b) = (find(&mut parent, f), find(&mut parent, i));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
        let free = scope
            .iter()
            .filter(|v| self.assign[**v as usize] == 0 && !index.contains_key(v))
            .count();
        let mut total: u128 = 1u128.checked_shl(free as u32).ok_or(Error::CountOverflow)?;

        // group clauses and variables by component root
        let mut comp_of_root: HashMap<usize, usize> = HashMap::new();
        let mut comps: Vec<(Vec<u32>, Vec<u32>)> = Vec::new();
        let mut vars: Vec<(u32, usize)> = index.iter().map(|(v, i)| (*v, *i)).collect();
        vars.sort_unstable();
        for (v, i) in vars {
            let r = find(&mut parent, i);
            let n = comps.len();
            let c = *comp_of_root.entry(r).or_insert_with(|| {
                comps.push((Vec::new(), Vec::new()));
                n
            });
            comps[c].1.push(v);
        }
        for id in &open {
            let l = self.clauses[*id as usize]
                .iter()
                .find(|l| self.value(**l) == 0)
                .expect("open clause after propagation has an unassigned literal");
            let r = find(&mut parent, index[&l.unsigned_abs()]);
            comps[comp_of_root[&r]].0.push(*id);
        }

        for (cids, cvars) in &comps {
            // open clause ids plus free variables fix the residual formula
            let mut key = cids.clone();
            key.push(u32::MAX);
            key.extend_from_slice(cvars);
            let hit = self.cache.lock().expect("cache lock").get(&key).copied();
            let n = match hit {
                Some(n) => n,
                None => {
                    let n = self.branch(cids, cvars, depth)?;
                    let mut cache = self.cache.lock().expect("cache lock");
                    if cache.len() < CACHE_LIMIT {
                        cache.insert(key, n);
                    }
                    n
                }
            };
            total = total.checked_mul(n).ok_or(Error::CountOverflow)?;
            if total == 0 {
                break;
            }
        }
        self.undo(mark);
        Ok(total)
    }

    fn branch(&mut self, ids: &[u32], scope: &[u32], depth: usize) -> Result<u128> {
        // most frequent variable of the shortest all-positive clause, so
        // choices finish one at a time; any variable when there is none
        let mut freq: HashMap<u32, u32> = HashMap::new();
        let mut choice: Option<(usize, u32)> = None;
        for id in ids {
            let c = &self.clauses[*id as usize];
            let open = c.iter().filter(|l| self.value(**l) == 0).count();
            if c.iter().all(|l| *l > 0) && choice.is_none_or(|(n, _)| open < n) {
                choice = Some((open, *id));
            }
            for l in c {
                if self.value(*l) == 0 {
                    *freq.entry(l.unsigned_abs()).or_default() += 1;
                }
            }
        }
        let pool: Vec<u32> = match choice {
            Some((_, id)) => self.clauses[id as usize]
                .iter()
                .filter(|l| self.value(**l) == 0)
                .map(|l| l.unsigned_abs())
                .collect(),
            None => freq.keys().copied().collect(),
        };
        let var = pool
            .into_iter()
            .max_by(|a, b| freq[a].cmp(&freq[b]).then(b.cmp(a)))
            .expect("component has a variable");
        let lit = var as Lit;
        if depth < PARALLEL_DEPTH {
            let mut left = self.clone();
            let mut right = self.clone();
            let (a, b) = rayon::join(
                move || {
                    left.set(lit);
                    left.count(ids, scope, depth + 1)
                },
                move || {
                    right.set(-lit);
                    right.count(ids, scope, depth + 1)
                },
            );
            return a?.checked_add(b?).ok_or(Error::CountOverflow);
        }
        let mut total = 0u128;
        for l in [lit, -lit] {
            let mark = self.trail.len();
            self.set(l);
            let n = self.count(ids, scope, depth + 1)?;
            self.undo(mark);
            total = total.checked_add(n).ok_or(Error::CountOverflow)?;
        }
        Ok(total)
    }
}

/// Exact number of satisfying assignments over all variables of `cnf`.
pub fn count_models(cnf: &Cnf) -> Result<u128> {
    let cache = Cache::default();
    let run = || {
        let mut solver = Solver {
            clauses: &cnf.clauses,
            cache: &cache,
            assign: vec![0; cnf.num_vars as usize + 1],
            trail: Vec::new(),
        };
        let ids: Vec<u32> = (0..cnf.clauses.len() as u32).collect();
        let scope: Vec<u32> = (1..=cnf.num_vars).collect();
        solver.count(&ids, &scope, 0)
    };
    // targets without threads (wasm) count on the calling thread
    match rayon::ThreadPoolBuilder::new()
        .num_threads(rayon::current_num_threads())
        .stack_size(256 << 20)
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}
