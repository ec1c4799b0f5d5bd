//! Reader for the task DSL and its JSON mirror.
//!
//! ```text
//! concept C_red : 2;
//! concept C_ped : 2;
//! label   Y     : 2;
//! support { (0,1); (1,0) @ 0.5; }      # optional, weights optional
//! knowledge { (C_ped=1 | C_red=1) <-> Y=0 }
//! ```
//!
//! Formula precedence, loosest first: `<->`, `->` (both right associative),
//! `|`, `^`, `&`, prefix `!`. Atoms are `name=int`; any other comparison
//! (`==`, `!=`, `<`, `<=`, `>`, `>=`, or `=` with a non-trivial side) over
//! sums of products is arithmetic sugar.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logic::formula::{Connective, Expr, Factor, Formula, Relation, Term};
use crate::logic::space::{Space, Variable, DEFAULT_CAP};
use crate::logic::task::TaskSpec;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Num(f64),
    Sym(&'static str),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const SYMBOLS: &[&str] = &[
    "<->", "->", "==", "!=", "<=", ">=", "<", ">", "=", "!", "&", "|", "^", "(", ")", "{", "}",
    ";", ":", ",", "+", "-", "*", "@",
];

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let (ln, col) = (lineno + 1, i + 1);
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
                break;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                out.push(Token {
                    tok: Tok::Ident(word),
                    line: ln,
                    column: col,
                });
                continue;
            }
            if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                let mut float = false;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    float = true;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        float = true;
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit: String = chars[start..i].iter().collect();
                let tok = if float {
                    Tok::Num(lit.parse().map_err(|_| syntax(ln, col, "bad number"))?)
                } else {
                    Tok::Int(lit.parse().map_err(|_| syntax(ln, col, "integer too large"))?)
                };
                out.push(Token {
                    tok,
                    line: ln,
                    column: col,
                });
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    out.push(Token {
                        tok: Tok::Sym(s),
                        line: ln,
                        column: col,
                    });
                    i += s.chars().count();
                }
                None => return Err(syntax(ln, col, format!("unexpected character `{c}`"))),
            }
        }
    }
    Ok(out)
}

/// Formula with unresolved variable names.
#[derive(Clone, Debug)]
enum Raw {
    Const(bool),
    Not(Box<Raw>),
    Binary(Connective, Box<Raw>, Box<Raw>),
    Compare(Relation, RawExpr, RawExpr, usize, usize),
}

#[derive(Clone, Debug)]
struct RawExpr(Vec<(bool, Vec<RawFactor>)>);

#[derive(Clone, Debug)]
enum RawFactor {
    Name(String, usize, usize),
    Int(i64),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    eof: (usize, usize),
}

impl Parser {
    fn new(toks: Vec<Token>, text: &str) -> Self {
        let lines = text.lines().count().max(1);
        let last = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
        Self {
            toks,
            pos: 0,
            eof: (lines, last),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn loc(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|t| (t.line, t.column))
            .unwrap_or(self.eof)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let (l, c) = self.loc();
        syntax(l, c, msg)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn eat(&mut self, sym: &str) -> bool {
        if self.peek() == Some(&Tok::Sym(SYMBOLS.iter().find(|s| **s == sym).unwrap())) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<()> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{sym}`")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn int(&mut self) -> Result<i64> {
        match self.peek() {
            Some(Tok::Int(i)) => {
                let i = *i;
                self.pos += 1;
                Ok(i)
            }
            _ => Err(self.err("expected integer")),
        }
    }

    fn number(&mut self) -> Result<f64> {
        match self.peek() {
            Some(Tok::Int(i)) => {
                let v = *i as f64;
                self.pos += 1;
                Ok(v)
            }
            Some(Tok::Num(x)) => {
                let v = *x;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("expected number")),
        }
    }

    fn formula(&mut self) -> Result<Raw> {
        self.iff()
    }

    fn iff(&mut self) -> Result<Raw> {
        let lhs = self.implies()?;
        if self.eat("<->") {
            let rhs = self.iff()?;
            return Ok(Raw::Binary(Connective::Iff, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn implies(&mut self) -> Result<Raw> {
        let lhs = self.or()?;
        if self.eat("->") {
            let rhs = self.implies()?;
            return Ok(Raw::Binary(Connective::Implies, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn left_assoc(
        &mut self,
        sym: &str,
        op: Connective,
        next: fn(&mut Self) -> Result<Raw>,
    ) -> Result<Raw> {
        let mut lhs = next(self)?;
        while self.eat(sym) {
            let rhs = next(self)?;
            lhs = Raw::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Raw> {
        self.left_assoc("|", Connective::Or, Self::xor)
    }

    fn xor(&mut self) -> Result<Raw> {
        self.left_assoc("^", Connective::Xor, Self::and)
    }

    fn and(&mut self) -> Result<Raw> {
        self.left_assoc("&", Connective::And, Self::unary)
    }

    fn unary(&mut self) -> Result<Raw> {
        if self.eat("!") {
            return Ok(Raw::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Raw> {
        if self.eat("(") {
            let f = self.formula()?;
            self.expect(")")?;
            return Ok(f);
        }
        match self.peek() {
            Some(Tok::Ident(s)) if s == "true" || s == "false" => {
                let b = s == "true";
                self.pos += 1;
                Ok(Raw::Const(b))
            }
            Some(Tok::Ident(_)) | Some(Tok::Int(_)) | Some(Tok::Sym("-")) => self.comparison(),
            _ => Err(self.err("expected formula")),
        }
    }

    fn comparison(&mut self) -> Result<Raw> {
        let (line, column) = self.loc();
        let lhs = self.expr()?;
        let rel = match self.next() {
            Some(Tok::Sym("=")) | Some(Tok::Sym("==")) => Relation::Eq,
            Some(Tok::Sym("!=")) => Relation::Ne,
            Some(Tok::Sym("<")) => Relation::Lt,
            Some(Tok::Sym("<=")) => Relation::Le,
            Some(Tok::Sym(">")) => Relation::Gt,
            Some(Tok::Sym(">=")) => Relation::Ge,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected comparison operator"));
            }
        };
        let plain_eq = self.toks[self.pos - 1].tok == Tok::Sym("=");
        let rhs = self.expr()?;
        let mut raw = Raw::Compare(rel, lhs, rhs, line, column);
        if plain_eq {
            // `name = int` is an atom; mark it by encoding as Eq with a
            // single-name lhs and single-int rhs, see `resolve`.
            if let Raw::Compare(_, l, r, ..) = &raw {
                if is_single_name(l) && is_single_int(r) {
                    raw = Raw::Compare(Relation::Eq, l.clone(), r.clone(), 0, 0);
                }
            }
        }
        Ok(raw)
    }

    fn expr(&mut self) -> Result<RawExpr> {
        let mut terms = Vec::new();
        let mut negated = self.eat("-");
        loop {
            let mut factors = vec![self.factor()?];
            while self.eat("*") {
                factors.push(self.factor()?);
            }
            terms.push((negated, factors));
            if self.eat("+") {
                negated = false;
            } else if self.eat("-") {
                negated = true;
            } else {
                break;
            }
        }
        Ok(RawExpr(terms))
    }

    fn factor(&mut self) -> Result<RawFactor> {
        let (l, c) = self.loc();
        match self.next() {
            Some(Tok::Ident(s)) if s != "true" && s != "false" => Ok(RawFactor::Name(s, l, c)),
            Some(Tok::Int(i)) => Ok(RawFactor::Int(i)),
            _ => {
                self.pos -= 1;
                Err(self.err("expected variable or integer"))
            }
        }
    }
}

fn is_single_name(e: &RawExpr) -> bool {
    e.0.len() == 1 && !e.0[0].0 && e.0[0].1.len() == 1 && matches!(e.0[0].1[0], RawFactor::Name(..))
}

fn is_single_int(e: &RawExpr) -> bool {
    e.0.len() == 1 && !e.0[0].0 && e.0[0].1.len() == 1 && matches!(e.0[0].1[0], RawFactor::Int(_))
}

struct Resolver<'a> {
    vars: &'a [Variable],
}

impl Resolver<'_> {
    fn lookup(&self, name: &str, line: usize, column: usize) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UndeclaredVariable(format!("{name} (at {line}:{column})")))
    }

    fn expr(&self, e: &RawExpr) -> Result<Expr> {
        let terms = e
            .0
            .iter()
            .map(|(neg, fs)| {
                let factors = fs
                    .iter()
                    .map(|f| match f {
                        RawFactor::Name(n, l, c) => self.lookup(n, *l, *c).map(Factor::Var),
                        RawFactor::Int(i) => Ok(Factor::Int(*i)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Term {
                    negated: *neg,
                    factors,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Expr { terms })
    }

    fn formula(&self, raw: &Raw) -> Result<Formula> {
        Ok(match raw {
            Raw::Const(b) => Formula::Const(*b),
            Raw::Not(f) => Formula::not(self.formula(f)?),
            Raw::Binary(op, l, r) => Formula::binary(*op, self.formula(l)?, self.formula(r)?),
            // line 0 marks a plain `name = int` atom
            Raw::Compare(Relation::Eq, l, r, 0, 0) => {
                let (name, nl, nc) = match &l.0[0].1[0] {
                    RawFactor::Name(n, a, b) => (n, *a, *b),
                    RawFactor::Int(_) => unreachable!(),
                };
                let value = match r.0[0].1[0] {
                    RawFactor::Int(i) => i,
                    RawFactor::Name(..) => unreachable!(),
                };
                let var = self.lookup(name, nl, nc)?;
                let card = self.vars[var].card;
                if value < 0 || value >= card as i64 {
                    return Err(Error::OutOfRange {
                        variable: name.clone(),
                        value,
                        card,
                    });
                }
                Formula::atom(var, value as u32)
            }
            Raw::Compare(op, l, r, ..) => Formula::Compare {
                op: *op,
                lhs: self.expr(l)?,
                rhs: self.expr(r)?,
            },
        })
    }
}

/// Parses a standalone formula against the given variable list.
pub fn parse_formula(text: &str, vars: &[Variable]) -> Result<Formula> {
    let toks = lex(text)?;
    let mut p = Parser::new(toks, text);
    let raw = p.formula()?;
    if p.pos < p.toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Resolver { vars }.formula(&raw)
}

/// JSON mirror of the task DSL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub concepts: Vec<Variable>,
    pub labels: Vec<Variable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<Vec<u32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_dist: Option<Vec<f64>>,
    pub knowledge: String,
}

pub fn parse_task(text: &str) -> Result<TaskSpec> {
    parse_task_with_cap(text, DEFAULT_CAP)
}

/// Accepts either the DSL or its JSON mirror (detected by a leading `{`).
pub fn parse_task_with_cap(text: &str, cap: u64) -> Result<TaskSpec> {
    if text.trim_start().starts_with('{') {
        let file: TaskFile = serde_json::from_str(text).map_err(|e| Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        return task_from_file(file, cap);
    }

    let toks = lex(text)?;
    let mut p = Parser::new(toks, text);
    let mut concepts = Vec::new();
    let mut labels = Vec::new();
    let mut support: Option<Vec<(Vec<i64>, Option<f64>, usize, usize)>> = None;
    let mut knowledge: Option<Raw> = None;

    while p.pos < p.toks.len() {
        let kw = p.ident()?;
        match kw.as_str() {
            "concept" | "label" => {
                let name = p.ident()?;
                p.expect(":")?;
                let (l, c) = p.loc();
                let card = p.int()?;
                if !(0..=u32::MAX as i64).contains(&card) {
                    return Err(syntax(l, c, "cardinality out of range"));
                }
                p.expect(";")?;
                let var = Variable::new(name, card as u32);
                if kw == "concept" {
                    concepts.push(var);
                } else {
                    labels.push(var);
                }
            }
            "support" => {
                if support.is_some() {
                    return Err(p.err("duplicate support block"));
                }
                p.expect("{")?;
                let mut rows = Vec::new();
                while !p.eat("}") {
                    let (l, c) = p.loc();
                    p.expect("(")?;
                    let mut tuple = vec![p.int()?];
                    while p.eat(",") {
                        tuple.push(p.int()?);
                    }
                    p.expect(")")?;
                    let weight = if p.eat("@") { Some(p.number()?) } else { None };
                    p.expect(";")?;
                    rows.push((tuple, weight, l, c));
                }
                support = Some(rows);
            }
            "knowledge" => {
                p.expect("{")?;
                let f = p.formula()?;
                p.expect("}")?;
                knowledge = Some(match knowledge {
                    None => f,
                    Some(prev) => Raw::Binary(Connective::And, Box::new(prev), Box::new(f)),
                });
            }
            other => {
                p.pos -= 1;
                return Err(p.err(format!(
                    "expected `concept`, `label`, `support` or `knowledge`, found `{other}`"
                )));
            }
        }
    }

    let concept_space = Space::new("concept", concepts, cap)?;
    let label_space = Space::new("label", labels, cap)?;
    let all_vars: Vec<Variable> = concept_space
        .vars()
        .iter()
        .chain(label_space.vars())
        .cloned()
        .collect();
    let knowledge = knowledge.ok_or_else(|| p.err("missing `knowledge` block"))?;
    let knowledge = Resolver { vars: &all_vars }.formula(&knowledge)?;

    let (support, dist) = match support {
        None => (None, None),
        Some(rows) => {
            let weighted = rows.iter().filter(|r| r.1.is_some()).count();
            if weighted != 0 && weighted != rows.len() {
                return Err(Error::InvalidTask(
                    "either every support row carries a weight or none does".into(),
                ));
            }
            let mut vectors = Vec::with_capacity(rows.len());
            for (tuple, _, l, c) in &rows {
                if tuple.len() != concept_space.len() {
                    return Err(syntax(
                        *l,
                        *c,
                        format!("support tuple has {} entries, expected {}", tuple.len(), concept_space.len()),
                    ));
                }
                let mut v = Vec::with_capacity(tuple.len());
                for (x, var) in tuple.iter().zip(concept_space.vars()) {
                    if *x < 0 || *x >= var.card as i64 {
                        return Err(Error::OutOfRange {
                            variable: var.name.clone(),
                            value: *x,
                            card: var.card,
                        });
                    }
                    v.push(*x as u32);
                }
                vectors.push(v);
            }
            let dist = (weighted > 0).then(|| rows.iter().map(|r| r.1.unwrap()).collect());
            (Some(vectors), dist)
        }
    };

    TaskSpec::new(concept_space, label_space, knowledge, support, dist, cap)
}

impl TryFrom<TaskFile> for TaskSpec {
    type Error = Error;

    fn try_from(file: TaskFile) -> Result<TaskSpec> {
        task_from_file(file, DEFAULT_CAP)
    }
}

fn task_from_file(file: TaskFile, cap: u64) -> Result<TaskSpec> {
    let concepts = Space::new("concept", file.concepts, cap)?;
    let labels = Space::new("label", file.labels, cap)?;
    let vars: Vec<Variable> = concepts.vars().iter().chain(labels.vars()).cloned().collect();
    let knowledge = parse_formula(&file.knowledge, &vars)?;
    if let Some(rows) = &file.support {
        for row in rows {
            if !concepts.contains(row) {
                return Err(Error::InvalidTask(format!(
                    "support vector {row:?} is not in the concept space"
                )));
            }
        }
    }
    TaskSpec::new(concepts, labels, knowledge, file.support, file.ground_truth_dist, cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOIA: &str = "concept C_red : 2;\nconcept C_ped : 2;\nlabel Y : 2;\nknowledge { (C_ped=1 | C_red=1) <-> (Y = 0) }\n";

    #[test]
    fn parses_boia() {
        let t = parse_task(BOIA).unwrap();
        assert_eq!(t.concepts().size(), 4);
        assert_eq!(t.labels().size(), 2);
        assert!(t.knowledge().is_propositional());
    }

    #[test]
    fn sum_sugar_desugars_to_hundred_rows() {
        let text = "concept C1 : 10; concept C2 : 10; label Y : 19;\nknowledge { Y == C1 + C2 }";
        let t = parse_task(text).unwrap();
        assert!(!t.knowledge().is_propositional());
        let mut disjuncts = 0;
        fn count(f: &Formula, n: &mut usize) {
            match f {
                Formula::Binary {
                    op: Connective::Or,
                    lhs,
                    rhs,
                } => {
                    count(lhs, n);
                    count(rhs, n);
                }
                _ => *n += 1,
            }
        }
        count(t.desugared(), &mut disjuncts);
        assert_eq!(disjuncts, 100);
    }

    #[test]
    fn reports_syntax_location() {
        let err = parse_task("concept A : 2;\nlabel Y : 2;\nknowledge { A=1 & }").unwrap_err();
        match err {
            Error::Syntax { line, column, .. } => assert_eq!((line, column), (3, 19)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_undeclared_and_out_of_range() {
        let undeclared = parse_task("concept A : 2; label Y : 2; knowledge { B=1 <-> Y=1 }");
        assert!(matches!(undeclared, Err(Error::UndeclaredVariable(_))));
        let range = parse_task("concept A : 2; label Y : 2; knowledge { A=2 <-> Y=1 }");
        assert!(matches!(range, Err(Error::OutOfRange { .. })));
        let support = parse_task("concept A : 2; label Y : 2; support { (3); } knowledge { A=1 <-> Y=1 }");
        assert!(matches!(support, Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn empty_concept_list_is_rejected() {
        let err = parse_task("label Y : 2; knowledge { Y=1 }").unwrap_err();
        assert!(err.to_string().contains("at least one concept required"));
    }

    #[test]
    fn cap_is_enforced() {
        let text = "concept A : 64; concept B : 64; label Y : 2; knowledge { Y=1 }";
        assert!(matches!(
            parse_task_with_cap(text, 1000),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn json_mirror_matches_dsl() {
        let json = r#"{"concepts":[{"name":"C_red","card":2},{"name":"C_ped","card":2}],
                       "labels":[{"name":"Y","card":2}],
                       "knowledge":"(C_ped=1 | C_red=1) <-> (Y = 0)"}"#;
        assert_eq!(parse_task(json).unwrap(), parse_task(BOIA).unwrap());
    }

    #[test]
    fn precedence_and_associativity() {
        let vars: Vec<Variable> = ["a", "b", "c"].iter().map(|n| Variable::new(*n, 2)).collect();
        let f = parse_formula("a=1 | b=1 & c=1", &vars).unwrap();
        assert!(matches!(f, Formula::Binary { op: Connective::Or, .. }));
        let g = parse_formula("a=1 -> b=1 -> c=1", &vars).unwrap();
        match g {
            Formula::Binary {
                op: Connective::Implies,
                rhs,
                ..
            } => assert!(matches!(*rhs, Formula::Binary { op: Connective::Implies, .. })),
            _ => panic!(),
        }
    }
}
