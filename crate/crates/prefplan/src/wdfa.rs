//! Weighted deterministic finite automata over `2^atoms` plus an end
//! marker. Every ordinary transition carries weight 0; reading the end
//! marker moves into a sink, and only those transitions may carry positive
//! weight. The weight of an accepting run equals the satisfaction degree of
//! its word, so composing automata for ordered disjunction and prioritized
//! conjunction mirrors the degree arithmetic of the preference connectives.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::formula::{Ast, Degree, FormulaError, Trace};
use crate::ltlf::{self, symbol_key, Dfa, LtlfError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WdfaError {
    #[error("operand alphabets differ")]
    AlphabetMismatch,
    #[error(transparent)]
    Ltlf(#[from] LtlfError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// A weighted automaton. The sink is implicit: every state reaches it on
/// the end marker with weight `end_weight[state]`, and the sink loops to
/// itself with weight 0 on every symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct Wdfa {
    pub atoms: Vec<String>,
    /// Ordinary states, sink excluded. All reachable from `initial`.
    pub n_states: usize,
    pub initial: usize,
    /// Row-major: `trans[state * n_symbols + symbol]`.
    pub trans: Vec<usize>,
    /// Weight of the end-marker transition into the sink, per state.
    pub end_weight: Vec<u64>,
    /// Optionality of the formula this automaton encodes.
    pub opt: u64,
    /// Maximal weight over all transitions of the recursive construction,
    /// before any reachability pruning. Tracked compositionally so pruning
    /// the state space cannot change it.
    pub max_w: u64,
    /// Whether the unpruned construction has a zero-weight end transition
    /// (i.e. the encoded language is not universal).
    pub has_zero: bool,
}

impl Wdfa {
    pub fn n_symbols(&self) -> usize {
        1usize << self.atoms.len()
    }

    pub fn step(&self, state: usize, symbol: usize) -> usize {
        self.trans[state * self.n_symbols() + symbol]
    }

    /// The state reached after reading a word of symbol bitmasks.
    pub fn run(&self, word: &[usize]) -> usize {
        let mut q = self.initial;
        for &sym in word {
            q = self.step(q, sym);
        }
        q
    }

    /// Total weight of the run on `word` followed by the end marker.
    pub fn run_weight_ids(&self, word: &[usize]) -> u64 {
        self.end_weight[self.run(word)]
    }

    pub fn run_weight(&self, trace: &Trace) -> Result<u64, WdfaError> {
        Ok(self.run_weight_ids(&trace.symbol_ids(&self.atoms)?))
    }

    /// Recover the satisfaction degree from the run weight.
    pub fn degree(&self, trace: &Trace) -> Result<Degree, WdfaError> {
        Ok(match self.run_weight(trace)? {
            0 => Degree::Unsatisfied,
            k => Degree::Satisfied(k),
        })
    }

    /// Maximum weight over all transitions of the construction. Equals the
    /// optionality whenever every plain component is both satisfiable and
    /// refutable.
    pub fn max_weight(&self) -> u64 {
        self.max_w
    }

    /// False when no positive-weight end transition is reachable, i.e. the
    /// preference language is empty.
    pub fn is_satisfiable(&self) -> bool {
        self.end_weight.iter().any(|&w| w > 0)
    }

    /// GraphViz DOT rendering with edges labeled `symbol:weight`. Output is
    /// deterministic: states by index, symbols lexicographically by label.
    pub fn export_dot(&self) -> String {
        let mut out = String::new();
        out.push_str("digraph wdfa {\n  rankdir=LR;\n  init [shape=point];\n");
        for q in 0..self.n_states {
            let _ = writeln!(out, "  q{q} [shape=circle,label=\"{q}\"];");
        }
        out.push_str("  sink [shape=doublecircle];\n");
        let _ = writeln!(out, "  init -> q{};", self.initial);
        for q in 0..self.n_states {
            let mut edges: Vec<(String, usize)> = (0..self.n_symbols())
                .map(|sym| (symbol_key(sym, &self.atoms), self.step(q, sym)))
                .collect();
            edges.sort();
            for (label, target) in edges {
                let _ = writeln!(out, "  q{q} -> q{target} [label=\"{label}:0\"];");
            }
            let _ = writeln!(out, "  q{q} -> sink [label=\"end:{}\"];", self.end_weight[q]);
        }
        out.push_str("}\n");
        out
    }

    /// JSON export mirroring the DFA schema plus weights and optionality.
    pub fn to_json(&self) -> serde_json::Value {
        let mut transitions = serde_json::Map::new();
        for q in 0..self.n_states {
            let mut row = serde_json::Map::new();
            for sym in 0..self.n_symbols() {
                row.insert(symbol_key(sym, &self.atoms), self.step(q, sym).into());
            }
            transitions.insert(q.to_string(), row.into());
        }
        serde_json::json!({
            "atoms": self.atoms,
            "states": self.n_states,
            "initial": self.initial,
            "transitions": transitions,
            "end_weights": self.end_weight,
            "opt": self.opt,
        })
    }
}

/// Lift a DFA to a weighted automaton: weight 1 on the end marker from
/// accepting states, 0 elsewhere, optionality 1.
pub fn lift(dfa: &Dfa) -> Wdfa {
    Wdfa {
        atoms: dfa.atoms.clone(),
        n_states: dfa.n_states,
        initial: dfa.initial,
        trans: dfa.trans.clone(),
        end_weight: dfa
            .accepting
            .iter()
            .map(|&acc| if acc { 1 } else { 0 })
            .collect(),
        opt: 1,
        max_w: if dfa.accepting.iter().any(|&acc| acc) {
            1
        } else {
            0
        },
        has_zero: dfa.accepting.iter().any(|&acc| !acc),
    }
}

/// The pairwise product over reachable state pairs; callers supply the
/// end-weight combination rule and the composed optionality.
fn product_with(
    a1: &Wdfa,
    a2: &Wdfa,
    opt: u64,
    max_w: u64,
    has_zero: bool,
    combine: impl Fn(u64, u64) -> u64,
) -> Result<Wdfa, WdfaError> {
    if a1.atoms != a2.atoms {
        return Err(WdfaError::AlphabetMismatch);
    }
    let n_symbols = a1.n_symbols();
    let start = (a1.initial, a2.initial);
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut pairs = vec![start];
    index.insert(start, 0);
    let mut trans = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let (q1, q2) = pairs[i];
        for sym in 0..n_symbols {
            let next = (a1.step(q1, sym), a2.step(q2, sym));
            let id = *index.entry(next).or_insert_with(|| {
                pairs.push(next);
                pairs.len() - 1
            });
            trans.push(id);
        }
        i += 1;
    }
    let end_weight = pairs
        .iter()
        .map(|&(q1, q2)| combine(a1.end_weight[q1], a2.end_weight[q2]))
        .collect();
    Ok(Wdfa {
        atoms: a1.atoms.clone(),
        n_states: pairs.len(),
        initial: 0,
        trans,
        end_weight,
        opt,
        max_w,
        has_zero,
    })
}

/// Product automaton for `a1 *> a2`: the left weight wins when positive,
/// otherwise the right weight shifted up by the left optionality.
pub fn ordered_disjunction(a1: &Wdfa, a2: &Wdfa) -> Result<Wdfa, WdfaError> {
    let opt1 = a1.opt;
    // maximum over all state pairs of the unpruned construction
    let mut max_w = a1.max_w;
    if a1.has_zero && a2.max_w > 0 {
        max_w = max_w.max(a2.max_w + opt1);
    }
    let has_zero = a1.has_zero && a2.has_zero;
    product_with(a1, a2, a1.opt + a2.opt, max_w, has_zero, move |w1, w2| {
        if w1 > 0 {
            w1
        } else if w2 > 0 {
            w2 + opt1
        } else {
            0
        }
    })
}

/// Product automaton for `a1 & a2`: lexicographic combination
/// `w2 + opt2 * (w1 - 1)` when both components are satisfied.
pub fn prioritized_conjunction(a1: &Wdfa, a2: &Wdfa) -> Result<Wdfa, WdfaError> {
    let opt2 = a2.opt;
    let max_w = if a1.max_w > 0 && a2.max_w > 0 {
        a2.max_w + opt2 * (a1.max_w - 1)
    } else {
        0
    };
    let has_zero = a1.has_zero || a2.has_zero;
    product_with(a1, a2, a1.opt * a2.opt, max_w, has_zero, move |w1, w2| {
        if w1 > 0 && w2 > 0 {
            w2 + opt2 * (w1 - 1)
        } else {
            0
        }
    })
}

/// Recursively compile a preference formula: plain leaves become lifted
/// minimized DFAs, preference connectives become weighted products.
pub fn compile(ast: &Ast, atoms: &[String]) -> Result<Wdfa, WdfaError> {
    match ast {
        Ast::OrderedDisj(a, b) => ordered_disjunction(&compile(a, atoms)?, &compile(b, atoms)?),
        Ast::PrioConj(a, b) => prioritized_conjunction(&compile(a, atoms)?, &compile(b, atoms)?),
        plain => {
            let dfa = ltlf::minimize(&ltlf::build_dfa(plain, atoms)?);
            Ok(lift(&dfa))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, parse_trace, satisfaction_degree_oracle};

    fn atoms(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn compile_text(text: &str, al: &[&str]) -> Wdfa {
        compile(&parse_formula(text).unwrap(), &atoms(al)).unwrap()
    }

    #[test]
    fn lift_weights_accepting_end_only() {
        let a = compile_text("F b", &["b"]);
        assert_eq!(a.opt, 1);
        assert_eq!(a.run_weight(&parse_trace("b").unwrap()).unwrap(), 1);
        assert_eq!(a.run_weight(&parse_trace("-").unwrap()).unwrap(), 0);
        assert_eq!(a.max_weight(), 1);
    }

    #[test]
    fn ordered_disjunction_reference_weights() {
        let a = compile_text("F b *> (F a || F c)", &["a", "b", "c"]);
        assert_eq!(a.opt, 2);
        assert_eq!(a.max_weight(), 2);
        // the four representative words: b-then-a, a-only, b-only, neither
        let cases = [("b;a", 1), ("-;-;a", 2), ("b", 1), ("-;-", 0)];
        for (text, weight) in cases {
            let trace = parse_trace(text).unwrap();
            assert_eq!(a.run_weight(&trace).unwrap(), weight, "word {text}");
        }
    }

    #[test]
    fn prioritized_conjunction_weights() {
        let fa = compile_text("F a", &["a", "b"]);
        let fb = compile_text("F b", &["a", "b"]);
        let both = prioritized_conjunction(&fa, &fb).unwrap();
        assert_eq!(both.opt, 1);
        assert_eq!(both.run_weight(&parse_trace("a,b").unwrap()).unwrap(), 1);
        assert_eq!(both.run_weight(&parse_trace("a").unwrap()).unwrap(), 0);

        // combined weight from component weights (2, 1) with opt(right) = 2
        let phi1 = compile_text("F a *> F b", &["a", "b", "c"]);
        let phi2 = compile_text("F b *> F c", &["a", "b", "c"]);
        let conj = prioritized_conjunction(&phi1, &phi2).unwrap();
        assert_eq!(conj.opt, 4);
        assert_eq!(conj.max_weight(), 4);
        // word satisfying phi1 at degree 2 (b, not a) and phi2 at degree 1:
        // weight = 1 + 2 * (2 - 1) = 3
        let w = conj.run_weight(&parse_trace("b").unwrap()).unwrap();
        assert_eq!(w, 3);
    }

    #[test]
    fn alphabet_mismatch_is_rejected() {
        let fa = compile_text("F a", &["a"]);
        let fb = compile_text("F b", &["b"]);
        assert_eq!(
            ordered_disjunction(&fa, &fb),
            Err(WdfaError::AlphabetMismatch)
        );
    }

    #[test]
    fn degree_matches_oracle_exhaustively() {
        let al = atoms(&["a", "b", "c"]);
        let phi = parse_formula("F b *> (F a || F c)").unwrap();
        let a = compile(&phi, &al).unwrap();
        let mut count = 0;
        let mut words: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..3 {
            let mut next = Vec::new();
            for w in &words {
                for sym in 0..8 {
                    let mut w2 = w.clone();
                    w2.push(sym);
                    next.push(w2);
                }
            }
            for w in &next {
                let trace = Trace(
                    w.iter()
                        .map(|&sym| {
                            al.iter()
                                .enumerate()
                                .filter(|(i, _)| (sym >> i) & 1 == 1)
                                .map(|(_, x)| x.clone())
                                .collect()
                        })
                        .collect(),
                );
                assert_eq!(
                    a.degree(&trace).unwrap(),
                    satisfaction_degree_oracle(&trace, &phi).unwrap(),
                    "word {w:?}"
                );
                count += 1;
            }
            words = next;
        }
        assert_eq!(count, 8 + 64 + 512);
    }

    #[test]
    fn positive_weight_only_on_end_transitions() {
        // structural by representation: ordinary transitions carry no weight
        // field at all, so check the composition keeps end weights in range
        let a = compile_text("(F a *> F b) & (F c *> F a)", &["a", "b", "c"]);
        for &w in &a.end_weight {
            assert!(w <= a.opt);
        }
        assert!(a.n_states <= 9 * 9 + 1);
    }

    #[test]
    fn dot_export_is_deterministic() {
        let a = compile_text("F b", &["b"]);
        let dot = a.export_dot();
        assert_eq!(dot, a.export_dot());
        // two ordinary states plus the sink
        assert_eq!(a.n_states, 2);
        assert!(dot.contains("sink [shape=doublecircle]"));
        assert!(dot.contains("end:1"));
    }

    #[test]
    fn unsatisfiable_formula_has_no_positive_weight() {
        let a = compile_text("a && !a", &["a"]);
        assert!(!a.is_satisfiable());
        assert_eq!(a.max_weight(), 0);
        assert!(!a.export_dot().contains("end:1"));
    }
}
