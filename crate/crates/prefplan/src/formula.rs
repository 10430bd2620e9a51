//! Preference formulas over finite-trace temporal goals: abstract syntax,
//! parsing, and the definition-level semantics (optionality, satisfaction
//! degree, dissatisfaction score). The semantics here are computed directly
//! from the recursive definitions, without automata, and serve as the
//! reference oracle for the automaton pipeline.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

/// A preference formula. Temporal and Boolean connectives form the
/// "plain" fragment; [`Ast::OrderedDisj`] and [`Ast::PrioConj`] are the
/// preference connectives and may only appear above the plain fragment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ast {
    Atom(String),
    True,
    False,
    Not(Box<Ast>),
    And(Box<Ast>, Box<Ast>),
    Or(Box<Ast>, Box<Ast>),
    Next(Box<Ast>),
    Until(Box<Ast>, Box<Ast>),
    Eventually(Box<Ast>),
    Always(Box<Ast>),
    /// `lhs *> rhs`: if possible the left operand, otherwise the right.
    OrderedDisj(Box<Ast>, Box<Ast>),
    /// `lhs & rhs`: lexicographic combination, left dominates.
    PrioConj(Box<Ast>, Box<Ast>),
}

impl Ast {
    /// True if the formula contains no preference connective.
    pub fn is_plain(&self) -> bool {
        match self {
            Ast::Atom(_) | Ast::True | Ast::False => true,
            Ast::Not(a) | Ast::Next(a) | Ast::Eventually(a) | Ast::Always(a) => a.is_plain(),
            Ast::And(a, b) | Ast::Or(a, b) | Ast::Until(a, b) => a.is_plain() && b.is_plain(),
            Ast::OrderedDisj(_, _) | Ast::PrioConj(_, _) => false,
        }
    }

    /// The set of atomic proposition names occurring in the formula.
    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            Ast::Atom(name) => {
                out.insert(name.clone());
            }
            Ast::True | Ast::False => {}
            Ast::Not(a) | Ast::Next(a) | Ast::Eventually(a) | Ast::Always(a) => {
                a.collect_atoms(out)
            }
            Ast::And(a, b)
            | Ast::Or(a, b)
            | Ast::Until(a, b)
            | Ast::OrderedDisj(a, b)
            | Ast::PrioConj(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ast::Atom(name) => write!(f, "{name}"),
            Ast::True => write!(f, "true"),
            Ast::False => write!(f, "false"),
            Ast::Not(a) => write!(f, "!({a})"),
            Ast::And(a, b) => write!(f, "({a} && {b})"),
            Ast::Or(a, b) => write!(f, "({a} || {b})"),
            Ast::Next(a) => write!(f, "X ({a})"),
            Ast::Until(a, b) => write!(f, "({a} U {b})"),
            Ast::Eventually(a) => write!(f, "F ({a})"),
            Ast::Always(a) => write!(f, "G ({a})"),
            Ast::OrderedDisj(a, b) => write!(f, "({a} *> {b})"),
            Ast::PrioConj(a, b) => write!(f, "({a} & {b})"),
        }
    }
}

/// A finite word over `2^AP`: a non-empty sequence of atom sets. The end
/// marker is implicit and never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace(pub Vec<BTreeSet<String>>);

impl Trace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Translate each symbol into a bitmask index over `atoms` (bit i set
    /// iff `atoms[i]` holds). Fails on atoms outside the universe.
    pub fn symbol_ids(&self, atoms: &[String]) -> Result<Vec<usize>, FormulaError> {
        self.0
            .iter()
            .map(|sym| {
                let mut id = 0usize;
                for name in sym {
                    let i = atoms.iter().position(|a| a == name).ok_or_else(|| {
                        FormulaError::UnknownAtom {
                            atom: name.clone(),
                        }
                    })?;
                    id |= 1 << i;
                }
                Ok(id)
            })
            .collect()
    }
}

/// Degree at which a trace satisfies a preference formula: rank 1 is best.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Degree {
    Unsatisfied,
    Satisfied(u64),
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degree::Unsatisfied => write!(f, "unsat"),
            Degree::Satisfied(k) => write!(f, "{k}"),
        }
    }
}

/// Exact dissatisfaction score in (0, 1].
pub type Score = Ratio<u64>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormulaError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("preference operator under temporal/Boolean operator")]
    PreferenceUnderPlain,
    #[error("empty trace")]
    EmptyTrace,
    #[error("malformed atom `{atom}`")]
    MalformedAtom { atom: String },
    #[error("atom `{atom}` not in the declared universe")]
    UnknownAtom { atom: String },
    #[error("degree {degree} out of range for optionality {opt}")]
    DegreeOutOfRange { degree: u64, opt: u64 },
    #[error("preference connective has no direct trace semantics here")]
    NotPlain,
}

impl From<crate::ltlf::LtlfError> for FormulaError {
    fn from(e: crate::ltlf::LtlfError) -> Self {
        use crate::ltlf::LtlfError;
        match e {
            LtlfError::EmptyTrace => FormulaError::EmptyTrace,
            LtlfError::AtomNotDeclared(atom) => FormulaError::UnknownAtom { atom },
            _ => FormulaError::NotPlain,
        }
    }
}

fn is_atom_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Ident(String),
    True,
    False,
    Not,
    AndAnd,
    OrOr,
    Amp,
    OrdDisj,
    Until,
    Next,
    Eventually,
    Always,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, FormulaError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                out.push((Token::LParen, i));
                i += 1;
            }
            ')' => {
                out.push((Token::RParen, i));
                i += 1;
            }
            '!' => {
                out.push((Token::Not, i));
                i += 1;
            }
            '&' => {
                if bytes.get(i + 1) == Some(&b'&') {
                    out.push((Token::AndAnd, i));
                    i += 2;
                } else {
                    out.push((Token::Amp, i));
                    i += 1;
                }
            }
            '|' => {
                if bytes.get(i + 1) == Some(&b'|') {
                    out.push((Token::OrOr, i));
                    i += 2;
                } else {
                    return Err(FormulaError::Syntax {
                        pos: i,
                        msg: "expected `||`".into(),
                    });
                }
            }
            '*' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    out.push((Token::OrdDisj, i));
                    i += 2;
                } else {
                    return Err(FormulaError::Syntax {
                        pos: i,
                        msg: "expected `*>`".into(),
                    });
                }
            }
            'U' => {
                out.push((Token::Until, i));
                i += 1;
            }
            'X' => {
                out.push((Token::Next, i));
                i += 1;
            }
            'F' => {
                out.push((Token::Eventually, i));
                i += 1;
            }
            'G' => {
                out.push((Token::Always, i));
                i += 1;
            }
            c if c.is_ascii_lowercase() => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_lowercase()
                        || (bytes[i] as char).is_ascii_digit()
                        || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &text[start..i];
                out.push((
                    match word {
                        "true" => Token::True,
                        "false" => Token::False,
                        _ => Token::Ident(word.to_string()),
                    },
                    start,
                ));
            }
            _ => {
                return Err(FormulaError::Syntax {
                    pos: i,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|&(_, p)| p)
            .unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn err(&self, msg: impl Into<String>) -> FormulaError {
        FormulaError::Syntax {
            pos: self.here(),
            msg: msg.into(),
        }
    }

    // `&` binds loosest, left-associative.
    fn prio(&mut self) -> Result<Ast, FormulaError> {
        let mut lhs = self.ord()?;
        while self.peek() == Some(&Token::Amp) {
            self.bump();
            let rhs = self.ord()?;
            lhs = Ast::PrioConj(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // `*>` groups right.
    fn ord(&mut self) -> Result<Ast, FormulaError> {
        let lhs = self.or()?;
        if self.peek() == Some(&Token::OrdDisj) {
            self.bump();
            let rhs = self.ord()?;
            Ok(Ast::OrderedDisj(Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn or(&mut self) -> Result<Ast, FormulaError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Token::OrOr) {
            self.bump();
            let rhs = self.and()?;
            lhs = Ast::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Ast, FormulaError> {
        let mut lhs = self.until()?;
        while self.peek() == Some(&Token::AndAnd) {
            self.bump();
            let rhs = self.until()?;
            lhs = Ast::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Ast, FormulaError> {
        let lhs = self.unary()?;
        if self.peek() == Some(&Token::Until) {
            self.bump();
            let rhs = self.until()?;
            Ok(Ast::Until(Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn unary(&mut self) -> Result<Ast, FormulaError> {
        match self.peek() {
            Some(Token::Not) => {
                self.bump();
                Ok(Ast::Not(Box::new(self.unary()?)))
            }
            Some(Token::Next) => {
                self.bump();
                Ok(Ast::Next(Box::new(self.unary()?)))
            }
            Some(Token::Eventually) => {
                self.bump();
                Ok(Ast::Eventually(Box::new(self.unary()?)))
            }
            Some(Token::Always) => {
                self.bump();
                Ok(Ast::Always(Box::new(self.unary()?)))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Ast, FormulaError> {
        match self.peek().cloned() {
            Some(Token::Ident(name)) => {
                self.bump();
                Ok(Ast::Atom(name))
            }
            Some(Token::True) => {
                self.bump();
                Ok(Ast::True)
            }
            Some(Token::False) => {
                self.bump();
                Ok(Ast::False)
            }
            Some(Token::LParen) => {
                self.bump();
                let inner = self.prio()?;
                if self.bump() != Some(Token::RParen) {
                    return Err(self.err("expected `)`"));
                }
                Ok(inner)
            }
            _ => Err(self.err("expected an atom, constant, or `(`")),
        }
    }
}

/// Check that preference connectives never appear below a plain connective.
fn validate(ast: &Ast, under_plain: bool) -> Result<(), FormulaError> {
    match ast {
        Ast::Atom(_) | Ast::True | Ast::False => Ok(()),
        Ast::Not(a) | Ast::Next(a) | Ast::Eventually(a) | Ast::Always(a) => validate(a, true),
        Ast::And(a, b) | Ast::Or(a, b) | Ast::Until(a, b) => {
            validate(a, true)?;
            validate(b, true)
        }
        Ast::OrderedDisj(a, b) | Ast::PrioConj(a, b) => {
            if under_plain {
                Err(FormulaError::PreferenceUnderPlain)
            } else {
                validate(a, false)?;
                validate(b, false)
            }
        }
    }
}

/// Parse a preference formula from its textual form.
pub fn parse_formula(text: &str) -> Result<Ast, FormulaError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(FormulaError::Syntax {
            pos: 0,
            msg: "empty formula".into(),
        });
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let ast = parser.prio()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.err("trailing input"));
    }
    validate(&ast, false)?;
    Ok(ast)
}

/// Parse a trace written as `symbol(;symbol)*` where a symbol is `-` for
/// the empty set or a comma-separated list of atoms.
pub fn parse_trace(text: &str) -> Result<Trace, FormulaError> {
    if text.trim().is_empty() {
        return Err(FormulaError::EmptyTrace);
    }
    let mut symbols = Vec::new();
    for segment in text.split(';') {
        let segment = segment.trim();
        let mut sym = BTreeSet::new();
        if segment != "-" {
            for atom in segment.split(',') {
                let atom = atom.trim();
                if !is_atom_name(atom) {
                    return Err(FormulaError::MalformedAtom {
                        atom: atom.to_string(),
                    });
                }
                sym.insert(atom.to_string());
            }
        }
        symbols.push(sym);
    }
    Ok(Trace(symbols))
}

/// The number of ways a formula can be satisfied: 1 for plain formulas,
/// sum over ordered disjunction, product over prioritized conjunction.
pub fn optionality(ast: &Ast) -> u64 {
    match ast {
        Ast::OrderedDisj(a, b) => optionality(a) + optionality(b),
        Ast::PrioConj(a, b) => optionality(a) * optionality(b),
        _ => 1,
    }
}

/// Satisfaction degree of `trace` against `ast`, computed straight from
/// the recursive definition with plain leaves decided by trace evaluation.
pub fn satisfaction_degree_oracle(trace: &Trace, ast: &Ast) -> Result<Degree, FormulaError> {
    match ast {
        Ast::OrderedDisj(a, b) => match satisfaction_degree_oracle(trace, a)? {
            Degree::Satisfied(k) => Ok(Degree::Satisfied(k)),
            Degree::Unsatisfied => match satisfaction_degree_oracle(trace, b)? {
                Degree::Satisfied(n) => Ok(Degree::Satisfied(n + optionality(a))),
                Degree::Unsatisfied => Ok(Degree::Unsatisfied),
            },
        },
        Ast::PrioConj(a, b) => {
            let da = satisfaction_degree_oracle(trace, a)?;
            let db = satisfaction_degree_oracle(trace, b)?;
            match (da, db) {
                (Degree::Satisfied(i), Degree::Satisfied(j)) => {
                    Ok(Degree::Satisfied(optionality(b) * (i - 1) + j))
                }
                _ => Ok(Degree::Unsatisfied),
            }
        }
        plain => {
            if crate::ltlf::holds(trace, plain)? {
                Ok(Degree::Satisfied(1))
            } else {
                Ok(Degree::Unsatisfied)
            }
        }
    }
}

/// Dissatisfaction score: 1 when unsatisfied, otherwise `k / (opt + 1)`.
pub fn dissatisfaction_score(degree: Degree, opt: u64) -> Result<Score, FormulaError> {
    match degree {
        Degree::Unsatisfied => Ok(Ratio::from_integer(1)),
        Degree::Satisfied(k) => {
            if k == 0 || k > opt {
                Err(FormulaError::DegreeOutOfRange { degree: k, opt })
            } else {
                Ok(Ratio::new(k, opt + 1))
            }
        }
    }
}

/// Compare two traces under the preference model of `ast`. Lower
/// dissatisfaction score means more preferred; `Less` means `w` is better.
pub fn prefer(w: &Trace, w2: &Trace, ast: &Ast) -> Result<std::cmp::Ordering, FormulaError> {
    let opt = optionality(ast);
    let s1 = dissatisfaction_score(satisfaction_degree_oracle(w, ast)?, opt)?;
    let s2 = dissatisfaction_score(satisfaction_degree_oracle(w2, ast)?, opt)?;
    Ok(s1.cmp(&s2))
}
