//! Propositional knowledge over categorical variables.
//!
//! Variables are referred to by their position in the task's combined
//! variable list (concepts first, then labels). Arithmetic comparisons are
//! surface sugar: [`Formula::desugar`] rewrites them into disjunctions of
//! atom conjunctions so that the evaluated knowledge is purely propositional.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::logic::space::Variable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Connective {
    And,
    Or,
    Xor,
    Implies,
    Iff,
}

impl Connective {
    pub fn symbol(self) -> &'static str {
        match self {
            Connective::And => "&",
            Connective::Or => "|",
            Connective::Xor => "^",
            Connective::Implies => "->",
            Connective::Iff => "<->",
        }
    }

    pub fn apply(self, a: bool, b: bool) -> bool {
        match self {
            Connective::And => a && b,
            Connective::Or => a || b,
            Connective::Xor => a != b,
            Connective::Implies => !a || b,
            Connective::Iff => a == b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "==",
            Relation::Ne => "!=",
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Ge => ">=",
        }
    }

    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            Relation::Eq => a == b,
            Relation::Ne => a != b,
            Relation::Lt => a < b,
            Relation::Le => a <= b,
            Relation::Gt => a > b,
            Relation::Ge => a >= b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Factor {
    Var(usize),
    Int(i64),
}

/// A signed product of factors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub negated: bool,
    pub factors: Vec<Factor>,
}

/// Integer expression: a sum of signed products.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Expr {
    pub terms: Vec<Term>,
}

impl Expr {
    pub fn var(v: usize) -> Self {
        Self {
            terms: vec![Term {
                negated: false,
                factors: vec![Factor::Var(v)],
            }],
        }
    }

    pub fn int(i: i64) -> Self {
        Self {
            terms: vec![Term {
                negated: false,
                factors: vec![Factor::Int(i)],
            }],
        }
    }

    fn eval(&self, lookup: &dyn Fn(usize) -> Option<u32>) -> std::result::Result<i64, usize> {
        let mut total = 0i64;
        for term in &self.terms {
            let mut prod = 1i64;
            for f in &term.factors {
                prod *= match *f {
                    Factor::Var(v) => lookup(v).ok_or(v)? as i64,
                    Factor::Int(i) => i,
                };
            }
            total += if term.negated { -prod } else { prod };
        }
        Ok(total)
    }

    fn map_vars(&self, f: &dyn Fn(usize) -> usize) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    negated: t.negated,
                    factors: t
                        .factors
                        .iter()
                        .map(|x| match x {
                            Factor::Var(v) => Factor::Var(f(*v)),
                            Factor::Int(i) => Factor::Int(*i),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        for t in &self.terms {
            for f in &t.factors {
                if let Factor::Var(v) = f {
                    out.insert(*v);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    Const(bool),
    Atom {
        var: usize,
        value: u32,
    },
    Not(Box<Formula>),
    Binary {
        op: Connective,
        lhs: Box<Formula>,
        rhs: Box<Formula>,
    },
    /// Arithmetic sugar, removed by [`Formula::desugar`].
    Compare {
        op: Relation,
        lhs: Expr,
        rhs: Expr,
    },
}

impl Formula {
    pub fn atom(var: usize, value: u32) -> Self {
        Formula::Atom { var, value }
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn binary(op: Connective, lhs: Formula, rhs: Formula) -> Self {
        Formula::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Self {
        Self::binary(Connective::And, lhs, rhs)
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Self {
        Self::binary(Connective::Or, lhs, rhs)
    }

    /// Balanced fold so that long desugared disjunctions stay shallow.
    pub fn fold_balanced(op: Connective, mut items: Vec<Formula>, empty: bool) -> Formula {
        match items.len() {
            0 => Formula::Const(empty),
            1 => items.pop().unwrap(),
            n => {
                let right = items.split_off(n / 2);
                Formula::binary(
                    op,
                    Self::fold_balanced(op, items, empty),
                    Self::fold_balanced(op, right, empty),
                )
            }
        }
    }

    /// Evaluates under a (possibly partial) lookup; `Err(var)` names the first
    /// variable the lookup could not provide.
    pub fn eval(&self, lookup: &dyn Fn(usize) -> Option<u32>) -> std::result::Result<bool, usize> {
        Ok(match self {
            Formula::Const(b) => *b,
            Formula::Atom { var, value } => lookup(*var).ok_or(*var)? == *value,
            Formula::Not(f) => !f.eval(lookup)?,
            Formula::Binary { op, lhs, rhs } => {
                let a = lhs.eval(lookup)?;
                // short-circuit where the connective allows it
                match (op, a) {
                    (Connective::And, false) => false,
                    (Connective::Or, true) => true,
                    (Connective::Implies, false) => true,
                    _ => op.apply(a, rhs.eval(lookup)?),
                }
            }
            Formula::Compare { op, lhs, rhs } => op.holds(lhs.eval(lookup)?, rhs.eval(lookup)?),
        })
    }

    /// Evaluates against a dense value vector indexed by variable.
    pub fn eval_dense(&self, values: &[u32]) -> bool {
        self.eval(&|v| values.get(v).copied())
            .expect("dense assignment covers every variable")
    }

    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            Formula::Const(_) => {}
            Formula::Atom { var, .. } => {
                out.insert(*var);
            }
            Formula::Not(f) => f.collect_vars(out),
            Formula::Binary { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Formula::Compare { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
        }
    }

    /// Renumbers every variable reference.
    pub fn map_vars(&self, f: &dyn Fn(usize) -> usize) -> Formula {
        match self {
            Formula::Const(_) => self.clone(),
            Formula::Atom { var, value } => Formula::atom(f(*var), *value),
            Formula::Not(g) => Formula::not(g.map_vars(f)),
            Formula::Binary { op, lhs, rhs } => Formula::binary(*op, lhs.map_vars(f), rhs.map_vars(f)),
            Formula::Compare { op, lhs, rhs } => Formula::Compare {
                op: *op,
                lhs: lhs.map_vars(f),
                rhs: rhs.map_vars(f),
            },
        }
    }

    pub fn is_propositional(&self) -> bool {
        match self {
            Formula::Const(_) | Formula::Atom { .. } => true,
            Formula::Not(f) => f.is_propositional(),
            Formula::Binary { lhs, rhs, .. } => lhs.is_propositional() && rhs.is_propositional(),
            Formula::Compare { .. } => false,
        }
    }

    /// Rewrites every arithmetic comparison into the disjunction of the
    /// assignments (over the variables it mentions) that satisfy it.
    pub fn desugar(&self, vars: &[Variable], cap: u64) -> Result<Formula> {
        Ok(match self {
            Formula::Const(_) | Formula::Atom { .. } => self.clone(),
            Formula::Not(f) => Formula::not(f.desugar(vars, cap)?),
            Formula::Binary { op, lhs, rhs } => {
                Formula::binary(*op, lhs.desugar(vars, cap)?, rhs.desugar(vars, cap)?)
            }
            Formula::Compare { op, lhs, rhs } => {
                let mut mentioned = BTreeSet::new();
                lhs.collect_vars(&mut mentioned);
                rhs.collect_vars(&mut mentioned);
                let mentioned: Vec<usize> = mentioned.into_iter().collect();
                let cards: Vec<u32> = mentioned.iter().map(|v| vars[*v].card).collect();
                let size = cards.iter().fold(1u128, |a, c| a.saturating_mul(*c as u128));
                if size > cap as u128 {
                    return Err(Error::CapExceeded {
                        size,
                        cap: cap as u128,
                    });
                }
                let mut rows = Vec::new();
                let mut values = vec![0u32; mentioned.len()];
                for _ in 0..size {
                    let lookup = |v: usize| {
                        mentioned
                            .iter()
                            .position(|m| *m == v)
                            .map(|p| values[p])
                    };
                    let l = lhs.eval(&lookup).expect("all mentioned vars bound");
                    let r = rhs.eval(&lookup).expect("all mentioned vars bound");
                    if op.holds(l, r) {
                        let atoms = mentioned
                            .iter()
                            .zip(&values)
                            .map(|(v, x)| Formula::atom(*v, *x))
                            .collect();
                        rows.push(Formula::fold_balanced(Connective::And, atoms, true));
                    }
                    // odometer, last mentioned variable fastest
                    for p in (0..values.len()).rev() {
                        values[p] += 1;
                        if values[p] < cards[p] {
                            break;
                        }
                        values[p] = 0;
                    }
                }
                Formula::fold_balanced(Connective::Or, rows, false)
            }
        })
    }

    /// Substitutes the bound variables and folds constants.
    pub fn simplify(&self, bound: &dyn Fn(usize) -> Option<u32>) -> Formula {
        match self {
            Formula::Const(_) => self.clone(),
            Formula::Atom { var, value } => match bound(*var) {
                Some(x) => Formula::Const(x == *value),
                None => self.clone(),
            },
            Formula::Not(f) => match f.simplify(bound) {
                Formula::Const(b) => Formula::Const(!b),
                g => Formula::not(g),
            },
            Formula::Binary { op, lhs, rhs } => {
                let a = lhs.simplify(bound);
                let b = rhs.simplify(bound);
                match (op, &a, &b) {
                    (_, Formula::Const(x), Formula::Const(y)) => Formula::Const(op.apply(*x, *y)),
                    (Connective::And, Formula::Const(false), _)
                    | (Connective::And, _, Formula::Const(false)) => Formula::Const(false),
                    (Connective::And, Formula::Const(true), _) => b,
                    (Connective::And, _, Formula::Const(true)) => a,
                    (Connective::Or, Formula::Const(true), _)
                    | (Connective::Or, _, Formula::Const(true)) => Formula::Const(true),
                    (Connective::Or, Formula::Const(false), _) => b,
                    (Connective::Or, _, Formula::Const(false)) => a,
                    (Connective::Implies, Formula::Const(false), _)
                    | (Connective::Implies, _, Formula::Const(true)) => Formula::Const(true),
                    (Connective::Implies, Formula::Const(true), _) => b,
                    (Connective::Implies, _, Formula::Const(false)) => Formula::not(a),
                    (Connective::Iff, Formula::Const(true), _) => b,
                    (Connective::Iff, _, Formula::Const(true)) => a,
                    (Connective::Iff, Formula::Const(false), _) => Formula::not(b),
                    (Connective::Iff, _, Formula::Const(false)) => Formula::not(a),
                    (Connective::Xor, Formula::Const(false), _) => b,
                    (Connective::Xor, _, Formula::Const(false)) => a,
                    (Connective::Xor, Formula::Const(true), _) => Formula::not(b),
                    (Connective::Xor, _, Formula::Const(true)) => Formula::not(a),
                    _ => Formula::binary(*op, a, b),
                }
            }
            Formula::Compare { op, lhs, rhs } => match (lhs.eval(bound), rhs.eval(bound)) {
                (Ok(l), Ok(r)) => Formula::Const(op.holds(l, r)),
                _ => self.clone(),
            },
        }
    }

    /// Fully parenthesized rendering that the task parser reads back to the
    /// same tree.
    pub fn display<'a>(&'a self, names: &'a [String]) -> FormulaDisplay<'a> {
        FormulaDisplay {
            formula: self,
            names,
        }
    }
}

pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    names: &'a [String],
}

impl FormulaDisplay<'_> {
    fn expr(&self, e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in e.terms.iter().enumerate() {
            match (i, t.negated) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            for (j, factor) in t.factors.iter().enumerate() {
                if j > 0 {
                    write!(f, " * ")?;
                }
                match factor {
                    Factor::Var(v) => write!(f, "{}", self.names[*v])?,
                    Factor::Int(x) => write!(f, "{x}")?,
                }
            }
        }
        Ok(())
    }

    fn go(&self, node: &Formula, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match node {
            Formula::Const(b) => write!(f, "{b}"),
            Formula::Atom { var, value } => write!(f, "{}={}", self.names[*var], value),
            Formula::Not(inner) => {
                write!(f, "!")?;
                match inner.as_ref() {
                    Formula::Binary { .. } | Formula::Compare { .. } | Formula::Not(_) => {
                        write!(f, "(")?;
                        self.go(inner, f)?;
                        write!(f, ")")
                    }
                    _ => self.go(inner, f),
                }
            }
            Formula::Binary { op, lhs, rhs } => {
                write!(f, "(")?;
                self.go(lhs, f)?;
                write!(f, " {} ", op.symbol())?;
                self.go(rhs, f)?;
                write!(f, ")")
            }
            Formula::Compare { op, lhs, rhs } => {
                self.expr(lhs, f)?;
                write!(f, " {} ", op.symbol())?;
                self.expr(rhs, f)
            }
        }
    }
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.go(self.formula, f)
    }
}

/// Values for a subset of the declared variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    values: Vec<Option<u32>>,
}

impl Assignment {
    pub fn empty(num_vars: usize) -> Self {
        Self {
            values: vec![None; num_vars],
        }
    }

    /// Total assignment from a concept vector followed by a label vector.
    pub fn total(concepts: &[u32], labels: &[u32]) -> Self {
        Self {
            values: concepts.iter().chain(labels).map(|v| Some(*v)).collect(),
        }
    }

    pub fn set(&mut self, var: usize, value: u32) {
        if var >= self.values.len() {
            self.values.resize(var + 1, None);
        }
        self.values[var] = Some(value);
    }

    pub fn get(&self, var: usize) -> Option<u32> {
        self.values.get(var).copied().flatten()
    }
}

/// Truth of `formula` under `a`. Arithmetic comparisons, if still present,
/// are evaluated by integer semantics.
pub fn evaluate(formula: &Formula, a: &Assignment) -> Result<bool> {
    formula
        .eval(&|v| a.get(v))
        .map_err(|v| Error::MissingVariable(format!("#{v}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(n: usize) -> Vec<Variable> {
        (0..n).map(|i| Variable::new(format!("x{i}"), 2)).collect()
    }

    #[test]
    fn tautology_holds_everywhere() {
        let f = Formula::or(Formula::atom(0, 0), Formula::not(Formula::atom(0, 0)));
        for v in 0..2 {
            assert!(evaluate(&f, &Assignment::total(&[v], &[])).unwrap());
        }
    }

    #[test]
    fn missing_variable_is_reported() {
        let f = Formula::and(Formula::atom(0, 1), Formula::atom(1, 1));
        let mut a = Assignment::empty(2);
        a.set(0, 1);
        assert!(matches!(evaluate(&f, &a), Err(Error::MissingVariable(_))));
    }

    #[test]
    fn desugared_sum_matches_integer_semantics() {
        // y == a + b over bits, y in 0..3
        let mut vars = bits(2);
        vars.push(Variable::new("y", 3));
        let f = Formula::Compare {
            op: Relation::Eq,
            lhs: Expr::var(2),
            rhs: Expr {
                terms: vec![
                    Term {
                        negated: false,
                        factors: vec![Factor::Var(0)],
                    },
                    Term {
                        negated: false,
                        factors: vec![Factor::Var(1)],
                    },
                ],
            },
        };
        let d = f.desugar(&vars, 1 << 20).unwrap();
        assert!(d.is_propositional());
        for a in 0..2 {
            for b in 0..2 {
                for y in 0..3 {
                    let vals = [a, b, y];
                    assert_eq!(d.eval_dense(&vals), f.eval_dense(&vals));
                }
            }
        }
    }

    #[test]
    fn simplify_agrees_with_eval() {
        let f = Formula::binary(
            Connective::Iff,
            Formula::or(Formula::atom(0, 1), Formula::atom(1, 1)),
            Formula::binary(Connective::Xor, Formula::atom(2, 0), Formula::Const(false)),
        );
        for i in 0..8u32 {
            let vals = [i >> 2 & 1, i >> 1 & 1, i & 1];
            let partial = f.simplify(&|v| (v < 2).then(|| vals[v]));
            assert_eq!(partial.eval_dense(&vals), f.eval_dense(&vals));
        }
    }
}
