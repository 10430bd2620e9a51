//! Finite-trace temporal logic: a direct semantic evaluator over traces and
//! a compiler to deterministic finite automata via formula progression.
//!
//! Automaton states are canonical Boolean functions over "closure atoms" —
//! the temporal/atomic subformulas of the input plus a special `end` marker.
//! Progression rewrites each closure atom against one input symbol; the
//! `end` marker makes Next strong (`X p` is false on the last position).

use std::collections::HashMap;

use thiserror::Error;

use crate::formula::{Ast, Trace};

/// Hard limit on the number of closure atoms (truth tables have `2^n` bits).
pub const CLOSURE_CAP: usize = 16;

/// Default limit on explored automaton states.
pub const DEFAULT_STATE_CAP: usize = 100_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LtlfError {
    #[error("preference connective encountered in a plain temporal formula")]
    NotPlain,
    #[error("formula closure has {0} atoms, exceeding the cap of {CLOSURE_CAP}")]
    ClosureOverflow(usize),
    #[error("state cap of {0} exceeded during automaton construction")]
    StateCapExceeded(usize),
    #[error("atom `{0}` not in the declared atom list")]
    AtomNotDeclared(String),
    #[error("empty trace")]
    EmptyTrace,
}

/// Direct recursive evaluation of a plain formula on a finite trace.
/// Next is strong: it requires a successor position.
pub fn holds(trace: &Trace, ast: &Ast) -> Result<bool, LtlfError> {
    if trace.is_empty() {
        return Err(LtlfError::EmptyTrace);
    }
    holds_at(trace, 0, ast)
}

fn holds_at(trace: &Trace, pos: usize, ast: &Ast) -> Result<bool, LtlfError> {
    match ast {
        Ast::Atom(name) => Ok(trace.0[pos].contains(name)),
        Ast::True => Ok(true),
        Ast::False => Ok(false),
        Ast::Not(a) => Ok(!holds_at(trace, pos, a)?),
        Ast::And(a, b) => Ok(holds_at(trace, pos, a)? && holds_at(trace, pos, b)?),
        Ast::Or(a, b) => Ok(holds_at(trace, pos, a)? || holds_at(trace, pos, b)?),
        Ast::Next(a) => {
            if pos + 1 < trace.len() {
                holds_at(trace, pos + 1, a)
            } else {
                Ok(false)
            }
        }
        Ast::Until(a, b) => {
            for j in pos..trace.len() {
                if holds_at(trace, j, b)? {
                    return Ok(true);
                }
                if !holds_at(trace, j, a)? {
                    return Ok(false);
                }
            }
            Ok(false)
        }
        Ast::Eventually(a) => {
            for j in pos..trace.len() {
                if holds_at(trace, j, a)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Ast::Always(a) => {
            for j in pos..trace.len() {
                if !holds_at(trace, j, a)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Ast::OrderedDisj(_, _) | Ast::PrioConj(_, _) => Err(LtlfError::NotPlain),
    }
}

/// Rewrite `F`/`G` sugar into `Until`/`Not` form.
fn normalize(ast: &Ast) -> Result<Ast, LtlfError> {
    Ok(match ast {
        Ast::Atom(_) | Ast::True | Ast::False => ast.clone(),
        Ast::Not(a) => Ast::Not(Box::new(normalize(a)?)),
        Ast::And(a, b) => Ast::And(Box::new(normalize(a)?), Box::new(normalize(b)?)),
        Ast::Or(a, b) => Ast::Or(Box::new(normalize(a)?), Box::new(normalize(b)?)),
        Ast::Next(a) => Ast::Next(Box::new(normalize(a)?)),
        Ast::Until(a, b) => Ast::Until(Box::new(normalize(a)?), Box::new(normalize(b)?)),
        Ast::Eventually(a) => Ast::Until(Box::new(Ast::True), Box::new(normalize(a)?)),
        Ast::Always(a) => Ast::Not(Box::new(Ast::Until(
            Box::new(Ast::True),
            Box::new(Ast::Not(Box::new(normalize(a)?))),
        ))),
        Ast::OrderedDisj(_, _) | Ast::PrioConj(_, _) => return Err(LtlfError::NotPlain),
    })
}

/// An atomic building block of automaton states: an atomic proposition,
/// the end marker, or a temporal subformula treated opaquely.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum ClosureAtom {
    Prop(String),
    End,
    Next(Ast),
    Until(Ast, Ast),
}

/// A Boolean function over the closure atoms, stored as a truth table over
/// all `2^n` assignments. Equality of tables is state identity.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateFormula {
    bits: Vec<u64>,
}

impl StateFormula {
    fn n_points(n_vars: usize) -> usize {
        1usize << n_vars
    }

    fn falsum(n_vars: usize) -> Self {
        let words = Self::n_points(n_vars).div_ceil(64);
        StateFormula {
            bits: vec![0; words],
        }
    }

    fn verum(n_vars: usize) -> Self {
        let mut t = Self::falsum(n_vars);
        let points = Self::n_points(n_vars);
        for w in &mut t.bits {
            *w = u64::MAX;
        }
        // clear padding above the last valid point
        let rem = points % 64;
        if rem != 0 {
            *t.bits.last_mut().unwrap() &= (1u64 << rem) - 1;
        }
        t
    }

    fn constant(n_vars: usize, value: bool) -> Self {
        if value {
            Self::verum(n_vars)
        } else {
            Self::falsum(n_vars)
        }
    }

    /// The projection function of variable `i`.
    fn var(n_vars: usize, i: usize) -> Self {
        let mut t = Self::falsum(n_vars);
        for m in 0..Self::n_points(n_vars) {
            if (m >> i) & 1 == 1 {
                t.set(m);
            }
        }
        t
    }

    fn get(&self, point: usize) -> bool {
        (self.bits[point / 64] >> (point % 64)) & 1 == 1
    }

    fn set(&mut self, point: usize) {
        self.bits[point / 64] |= 1 << (point % 64);
    }

    fn not(&self, n_vars: usize) -> Self {
        let mut out = StateFormula {
            bits: self.bits.iter().map(|w| !w).collect(),
        };
        let rem = Self::n_points(n_vars) % 64;
        if rem != 0 {
            *out.bits.last_mut().unwrap() &= (1u64 << rem) - 1;
        }
        out
    }

    fn and(&self, other: &Self) -> Self {
        StateFormula {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    fn or(&self, other: &Self) -> Self {
        StateFormula {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }
}

/// The progression context for one formula: its closure atoms and, per input
/// symbol, the table each closure atom rewrites to.
struct Progressor {
    n_vars: usize,
    end_idx: usize,
    /// subst[symbol][closure_atom] = progressed Boolean function
    subst: Vec<Vec<StateFormula>>,
}

impl Progressor {
    /// Apply one progression step to a state.
    fn progress(&self, state: &StateFormula, symbol: usize) -> StateFormula {
        let subst = &self.subst[symbol];
        let mut out = StateFormula::falsum(self.n_vars);
        for m in 0..StateFormula::n_points(self.n_vars) {
            let mut point = 0usize;
            for (i, table) in subst.iter().enumerate() {
                if table.get(m) {
                    point |= 1 << i;
                }
            }
            if state.get(point) {
                out.set(m);
            }
        }
        out
    }

    /// Does the residual obligation hold on the empty continuation?
    /// Evaluated with `end` true and everything else false.
    fn eval_empty(&self, state: &StateFormula) -> bool {
        state.get(1 << self.end_idx)
    }
}

fn collect_closure(ast: &Ast, out: &mut Vec<ClosureAtom>) {
    let push = |out: &mut Vec<ClosureAtom>, atom: ClosureAtom| {
        if !out.contains(&atom) {
            out.push(atom);
        }
    };
    match ast {
        Ast::Atom(name) => push(out, ClosureAtom::Prop(name.clone())),
        Ast::True | Ast::False => {}
        Ast::Not(a) => collect_closure(a, out),
        Ast::And(a, b) | Ast::Or(a, b) => {
            collect_closure(a, out);
            collect_closure(b, out);
        }
        Ast::Next(a) => {
            collect_closure(a, out);
            push(out, ClosureAtom::Next((**a).clone()));
        }
        Ast::Until(a, b) => {
            collect_closure(a, out);
            collect_closure(b, out);
            push(out, ClosureAtom::Until((**a).clone(), (**b).clone()));
        }
        Ast::Eventually(_) | Ast::Always(_) | Ast::OrderedDisj(_, _) | Ast::PrioConj(_, _) => {
            unreachable!("closure is collected after normalization")
        }
    }
}

/// Represent a normalized formula as a Boolean function over closure atoms.
fn repr(ast: &Ast, closure: &[ClosureAtom], n_vars: usize) -> StateFormula {
    let var_of = |atom: &ClosureAtom| {
        StateFormula::var(
            n_vars,
            closure.iter().position(|c| c == atom).expect("in closure"),
        )
    };
    match ast {
        Ast::Atom(name) => var_of(&ClosureAtom::Prop(name.clone())),
        Ast::True => StateFormula::verum(n_vars),
        Ast::False => StateFormula::falsum(n_vars),
        Ast::Not(a) => repr(a, closure, n_vars).not(n_vars),
        Ast::And(a, b) => repr(a, closure, n_vars).and(&repr(b, closure, n_vars)),
        Ast::Or(a, b) => repr(a, closure, n_vars).or(&repr(b, closure, n_vars)),
        Ast::Next(a) => var_of(&ClosureAtom::Next((**a).clone())),
        Ast::Until(a, b) => var_of(&ClosureAtom::Until((**a).clone(), (**b).clone())),
        _ => unreachable!("normalized"),
    }
}

/// Progression of a normalized subformula against one symbol, expressed as a
/// Boolean function over the closure atoms (the pre-step variables).
fn progress_syntax(
    ast: &Ast,
    symbol: usize,
    atoms: &[String],
    closure: &[ClosureAtom],
    n_vars: usize,
    end_idx: usize,
) -> StateFormula {
    match ast {
        Ast::Atom(name) => {
            let i = atoms.iter().position(|a| a == name).expect("declared");
            StateFormula::constant(n_vars, (symbol >> i) & 1 == 1)
        }
        Ast::True => StateFormula::verum(n_vars),
        Ast::False => StateFormula::falsum(n_vars),
        Ast::Not(a) => progress_syntax(a, symbol, atoms, closure, n_vars, end_idx).not(n_vars),
        Ast::And(a, b) => progress_syntax(a, symbol, atoms, closure, n_vars, end_idx)
            .and(&progress_syntax(b, symbol, atoms, closure, n_vars, end_idx)),
        Ast::Or(a, b) => progress_syntax(a, symbol, atoms, closure, n_vars, end_idx)
            .or(&progress_syntax(b, symbol, atoms, closure, n_vars, end_idx)),
        // X psi  ->  psi && !end
        Ast::Next(a) => {
            repr(a, closure, n_vars).and(&StateFormula::var(n_vars, end_idx).not(n_vars))
        }
        // a U b  ->  progress(b) || (progress(a) && (a U b))
        Ast::Until(a, b) => {
            let self_var = repr(ast, closure, n_vars);
            progress_syntax(b, symbol, atoms, closure, n_vars, end_idx).or(&progress_syntax(
                a, symbol, atoms, closure, n_vars, end_idx,
            )
            .and(&self_var))
        }
        _ => unreachable!("normalized"),
    }
}

fn build_progressor(
    normalized: &Ast,
    atoms: &[String],
) -> Result<(Progressor, StateFormula), LtlfError> {
    let mut closure = Vec::new();
    collect_closure(normalized, &mut closure);
    closure.push(ClosureAtom::End);
    let n_vars = closure.len();
    if n_vars > CLOSURE_CAP {
        return Err(LtlfError::ClosureOverflow(n_vars));
    }
    let end_idx = n_vars - 1;

    let n_symbols = 1usize << atoms.len();
    let mut subst = Vec::with_capacity(n_symbols);
    for symbol in 0..n_symbols {
        let tables = closure
            .iter()
            .map(|atom| match atom {
                ClosureAtom::Prop(name) => {
                    let i = atoms.iter().position(|a| a == name).expect("declared");
                    StateFormula::constant(n_vars, (symbol >> i) & 1 == 1)
                }
                ClosureAtom::End => StateFormula::falsum(n_vars),
                ClosureAtom::Next(a) => repr(a, &closure, n_vars)
                    .and(&StateFormula::var(n_vars, end_idx).not(n_vars)),
                ClosureAtom::Until(a, b) => {
                    let ast = Ast::Until(Box::new(a.clone()), Box::new(b.clone()));
                    progress_syntax(&ast, symbol, atoms, &closure, n_vars, end_idx)
                }
            })
            .collect();
        subst.push(tables);
    }

    let initial = repr(normalized, &closure, n_vars);
    Ok((
        Progressor {
            n_vars,
            end_idx,
            subst,
        },
        initial,
    ))
}

/// A complete deterministic finite automaton over the explicit alphabet
/// `2^atoms`. Symbols are bitmasks over the atom list; every state is
/// reachable from the initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct Dfa {
    pub atoms: Vec<String>,
    pub n_states: usize,
    pub initial: usize,
    pub accepting: Vec<bool>,
    /// Row-major: `trans[state * n_symbols + symbol]`.
    pub trans: Vec<usize>,
}

impl Dfa {
    pub fn n_symbols(&self) -> usize {
        1usize << self.atoms.len()
    }

    pub fn step(&self, state: usize, symbol: usize) -> usize {
        self.trans[state * self.n_symbols() + symbol]
    }

    /// Run the automaton on a word of symbol bitmasks.
    pub fn accepts(&self, word: &[usize]) -> bool {
        let mut q = self.initial;
        for &sym in word {
            q = self.step(q, sym);
        }
        self.accepting[q]
    }

    /// Debug-oriented JSON export with transitions keyed by the sorted atom
    /// list of each symbol (`-` for the empty symbol).
    pub fn to_json(&self) -> serde_json::Value {
        let mut transitions = serde_json::Map::new();
        for q in 0..self.n_states {
            let mut row = serde_json::Map::new();
            for sym in 0..self.n_symbols() {
                row.insert(symbol_key(sym, &self.atoms), (self.step(q, sym)).into());
            }
            transitions.insert(q.to_string(), row.into());
        }
        serde_json::json!({
            "atoms": self.atoms,
            "states": self.n_states,
            "initial": self.initial,
            "accepting": (0..self.n_states).filter(|&q| self.accepting[q]).collect::<Vec<_>>(),
            "transitions": transitions,
        })
    }
}

/// Render a symbol bitmask as a sorted comma-joined atom list, `-` if empty.
pub fn symbol_key(symbol: usize, atoms: &[String]) -> String {
    let mut names: Vec<&str> = atoms
        .iter()
        .enumerate()
        .filter(|(i, _)| (symbol >> i) & 1 == 1)
        .map(|(_, a)| a.as_str())
        .collect();
    names.sort_unstable();
    if names.is_empty() {
        "-".to_string()
    } else {
        names.join(",")
    }
}

/// Compile a plain formula to a DFA by breadth-first progression over the
/// explicit alphabet of `atoms`.
pub fn build_dfa(ast: &Ast, atoms: &[String]) -> Result<Dfa, LtlfError> {
    build_dfa_capped(ast, atoms, DEFAULT_STATE_CAP)
}

pub fn build_dfa_capped(ast: &Ast, atoms: &[String], state_cap: usize) -> Result<Dfa, LtlfError> {
    for name in ast.atoms() {
        if !atoms.contains(&name) {
            return Err(LtlfError::AtomNotDeclared(name));
        }
    }
    let normalized = normalize(ast)?;
    let (progressor, initial) = build_progressor(&normalized, atoms)?;
    let n_symbols = 1usize << atoms.len();

    let mut index: HashMap<StateFormula, usize> = HashMap::new();
    let mut states = vec![initial.clone()];
    index.insert(initial, 0);
    let mut trans: Vec<usize> = Vec::new();
    let mut frontier = 0;
    while frontier < states.len() {
        let state = states[frontier].clone();
        for symbol in 0..n_symbols {
            let next = progressor.progress(&state, symbol);
            let id = match index.get(&next) {
                Some(&id) => id,
                None => {
                    let id = states.len();
                    if id >= state_cap {
                        return Err(LtlfError::StateCapExceeded(state_cap));
                    }
                    index.insert(next.clone(), id);
                    states.push(next);
                    id
                }
            };
            trans.push(id);
        }
        frontier += 1;
    }

    let accepting = states.iter().map(|s| progressor.eval_empty(s)).collect();
    Ok(Dfa {
        atoms: atoms.to_vec(),
        n_states: states.len(),
        initial: 0,
        accepting,
        trans,
    })
}

/// Hopcroft partition refinement. Returns the language-equivalent minimal
/// DFA with states renumbered by breadth-first order from the initial state.
pub fn minimize(dfa: &Dfa) -> Dfa {
    let n = dfa.n_states;
    let n_symbols = dfa.n_symbols();

    // predecessor lists per symbol
    let mut preds: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); n]; n_symbols];
    for q in 0..n {
        for sym in 0..n_symbols {
            preds[sym][dfa.step(q, sym)].push(q);
        }
    }

    let mut block_of = vec![0usize; n];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    {
        let accepting: Vec<usize> = (0..n).filter(|&q| dfa.accepting[q]).collect();
        let rejecting: Vec<usize> = (0..n).filter(|&q| !dfa.accepting[q]).collect();
        for group in [accepting, rejecting] {
            if group.is_empty() {
                continue;
            }
            let id = blocks.len();
            for &q in &group {
                block_of[q] = id;
            }
            blocks.push(group);
        }
    }

    let mut worklist: Vec<usize> = (0..blocks.len()).collect();
    let mut on_worklist = vec![true; blocks.len()];

    while let Some(splitter) = worklist.pop() {
        on_worklist[splitter] = false;
        let splitter_states = blocks[splitter].clone();
        for sym in 0..n_symbols {
            // states with a `sym`-transition into the splitter
            let mut touched: Vec<usize> = Vec::new();
            for &q in &splitter_states {
                touched.extend(preds[sym][q].iter().copied());
            }
            touched.sort_unstable();
            touched.dedup();

            // group touched states by their current block
            let mut by_block: HashMap<usize, Vec<usize>> = HashMap::new();
            for &q in &touched {
                by_block.entry(block_of[q]).or_default().push(q);
            }
            for (b, inside) in by_block {
                if inside.len() == blocks[b].len() {
                    continue; // no split
                }
                let outside: Vec<usize> = blocks[b]
                    .iter()
                    .copied()
                    .filter(|q| !inside.contains(q))
                    .collect();
                let new_id = blocks.len();
                for &q in &inside {
                    block_of[q] = new_id;
                }
                blocks[b] = outside;
                blocks.push(inside);
                on_worklist.push(false);
                if on_worklist[b] {
                    worklist.push(new_id);
                    on_worklist[new_id] = true;
                } else {
                    // enqueue the smaller half
                    let smaller = if blocks[b].len() <= blocks[new_id].len() {
                        b
                    } else {
                        new_id
                    };
                    worklist.push(smaller);
                    on_worklist[smaller] = true;
                }
            }
        }
    }

    // renumber blocks by BFS from the initial block
    let mut order: Vec<usize> = Vec::with_capacity(blocks.len());
    let mut new_id = vec![usize::MAX; blocks.len()];
    let start = block_of[dfa.initial];
    new_id[start] = 0;
    order.push(start);
    let mut i = 0;
    while i < order.len() {
        let rep = blocks[order[i]][0];
        for sym in 0..n_symbols {
            let target = block_of[dfa.step(rep, sym)];
            if new_id[target] == usize::MAX {
                new_id[target] = order.len();
                order.push(target);
            }
        }
        i += 1;
    }

    let m = order.len();
    let mut trans = vec![0usize; m * n_symbols];
    let mut accepting = vec![false; m];
    for (idx, &b) in order.iter().enumerate() {
        let rep = blocks[b][0];
        accepting[idx] = dfa.accepting[rep];
        for sym in 0..n_symbols {
            trans[idx * n_symbols + sym] = new_id[block_of[dfa.step(rep, sym)]];
        }
    }

    Dfa {
        atoms: dfa.atoms.clone(),
        n_states: m,
        initial: 0,
        accepting,
        trans,
    }
}
