//! Product of a labeled MDP with a weighted automaton, total-reward value
//! iteration, policy extraction and exact evaluation, satisfaction
//! probabilities, and Monte-Carlo simulation.
//!
//! The only reward in the product is collected when the terminating action
//! fires from a product state whose automaton component would end with
//! positive weight: `opt - weight + 1`. Maximizing total reward therefore
//! minimizes the expected dissatisfaction score, and the optimum is
//! attained by a proper deterministic Markovian policy.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::Score;
use crate::ltlf::Dfa;
use crate::mdp::{LabeledMdp, TERMINATE_ACTION};
use crate::wdfa::Wdfa;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_ITERATION_CAP: usize = 1_000_000;
pub const DEFAULT_STEP_CAP: usize = 1_000_000;
/// Termination is preferred whenever it is within this margin of the best.
pub const TERMINATION_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("model atoms do not match the automaton alphabet")]
    AtomMismatch,
    #[error("value iteration exceeded {0} iterations")]
    IterationCapExceeded(usize),
    #[error("policy is improper: the terminating sink is not reached surely")]
    ImproperPolicy,
    #[error("simulation episode exceeded {0} steps; the policy looks improper")]
    StepCapExceeded(usize),
    #[error("value {0} outside [0, opt]")]
    ValueOutOfRange(f64),
    #[error("policy does not match the compiled automaton: {0}")]
    AutomatonMismatch(String),
    #[error("unknown action `{0}` in policy document")]
    UnknownAction(String),
}

/// Synchronization of an MDP with a weighted automaton. States reachable
/// from any entry point `(s, step(q0, L(s)))` are materialized, so policies
/// and heatmaps are defined for every possible start cell.
#[derive(Clone, Debug)]
pub struct ProductMdp {
    pub opt: u64,
    pub n_actions: usize,
    /// `(mdp_state, automaton_state)` per product state.
    pub states: Vec<(usize, usize)>,
    pub index: HashMap<(usize, usize), usize>,
    /// Product id of the entry point of each ordinary MDP state.
    pub entry: Vec<usize>,
    /// Entry point of the MDP's initial state.
    pub initial: usize,
    /// `trans[v][a]`: successor distribution; empty means unavailable.
    pub trans: Vec<Vec<Vec<(usize, f64)>>>,
    /// Reward collected by the terminating action at each product state.
    pub term_reward: Vec<f64>,
}

impl ProductMdp {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn available(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.trans[v]
            .iter()
            .enumerate()
            .filter(|(_, d)| !d.is_empty())
            .map(|(a, _)| a)
    }
}

/// Build the product MDP. Entry points consume the label of the state they
/// start in, and the terminating transition pays `opt - w + 1` wherever the
/// automaton would end with weight `w > 0`.
pub fn product(m: &LabeledMdp, automaton: &Wdfa) -> Result<ProductMdp, PlannerError> {
    if m.atoms != automaton.atoms {
        return Err(PlannerError::AtomMismatch);
    }
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut states: Vec<(usize, usize)> = Vec::new();
    let intern = |pair: (usize, usize),
                      states: &mut Vec<(usize, usize)>,
                      index: &mut HashMap<(usize, usize), usize>| {
        *index.entry(pair).or_insert_with(|| {
            states.push(pair);
            states.len() - 1
        })
    };

    let mut entry = Vec::with_capacity(m.n_ordinary());
    for s in 0..m.n_ordinary() {
        let q = automaton.step(automaton.initial, m.label(s));
        entry.push(intern((s, q), &mut states, &mut index));
    }

    let mut trans: Vec<Vec<Vec<(usize, f64)>>> = Vec::new();
    let mut frontier = 0;
    while frontier < states.len() {
        let (s, q) = states[frontier];
        let mut rows = vec![Vec::new(); m.actions.len()];
        for (a, dist) in m.transitions[s].iter().enumerate() {
            for &(s2, p) in dist {
                let q2 = automaton.step(q, m.label(s2));
                let id = intern((s2, q2), &mut states, &mut index);
                rows[a].push((id, p));
            }
        }
        trans.push(rows);
        frontier += 1;
    }

    let term_reward = states
        .iter()
        .map(|&(_, q)| {
            let w = automaton.end_weight[q];
            if w > 0 {
                (automaton.opt - w + 1) as f64
            } else {
                0.0
            }
        })
        .collect();

    Ok(ProductMdp {
        opt: automaton.opt,
        n_actions: m.actions.len(),
        initial: entry[m.initial],
        states,
        index,
        entry,
        trans,
        term_reward,
    })
}

/// Total-reward value iteration from the zero vector. Iterates are monotone
/// non-decreasing and bounded by the optionality, so this converges.
/// Returns the value vector and the number of sweeps.
pub fn value_iteration(
    p: &ProductMdp,
    tol: f64,
    iteration_cap: usize,
) -> Result<(Vec<f64>, usize), PlannerError> {
    let n = p.n_states();
    let mut values = vec![0.0f64; n];
    for sweep in 1..=iteration_cap {
        let mut next = vec![0.0f64; n];
        let mut delta = 0.0f64;
        for v in 0..n {
            let mut best = p.term_reward[v];
            for dist in p.trans[v].iter().filter(|d| !d.is_empty()) {
                let q: f64 = dist.iter().map(|&(v2, prob)| prob * values[v2]).sum();
                if q > best {
                    best = q;
                }
            }
            delta = delta.max((best - values[v]).abs());
            // iterates from 0 are monotone non-decreasing (rewards >= 0)
            debug_assert!(best >= values[v] - 1e-12);
            next[v] = best;
        }
        values = next;
        if delta < tol {
            let bound = p.opt as f64 + 1e-9;
            assert!(
                values.iter().all(|&j| (0.0..=bound).contains(&j)),
                "value iterate escaped the [0, opt] bound"
            );
            return Ok((values, sweep));
        }
    }
    Err(PlannerError::IterationCapExceeded(iteration_cap))
}

/// A deterministic Markovian policy on the product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    Terminate,
    Act(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    pub choices: Vec<Choice>,
}

/// Tolerance for grouping one-step lookahead values into a tie set.
const ACTION_TIE_EPS: f64 = 1e-9;

/// Greedy extraction with two tie-breaks. Terminating is preferred whenever
/// it is within `TERMINATION_TIE_EPS` of the best one-step lookahead.
/// Otherwise the choice falls to the tie set of near-maximizing actions,
/// resolved by minimizing the expected number of steps to termination: on a
/// value plateau (e.g. a region from which the goal is reachable surely)
/// every action is greedy, and picking an arbitrary one yields policies
/// that wander the plateau and terminate only through unlikely slips.
pub fn extract_policy(p: &ProductMdp, values: &[f64]) -> Policy {
    let n = p.n_states();
    let mut terminate = vec![false; n];
    let mut tied: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        let q_term = p.term_reward[v];
        let qs: Vec<(usize, f64)> = p
            .available(v)
            .map(|a| {
                let q: f64 = p.trans[v][a].iter().map(|&(v2, prob)| prob * values[v2]).sum();
                (a, q)
            })
            .collect();
        let best = qs
            .iter()
            .map(|&(_, q)| q)
            .fold(q_term, f64::max);
        if q_term >= best - TERMINATION_TIE_EPS {
            terminate[v] = true;
        } else {
            tied[v] = qs
                .iter()
                .filter(|&&(_, q)| q >= best - ACTION_TIE_EPS)
                .map(|&(a, _)| a)
                .collect();
        }
    }

    // shortest expected time to termination, restricted to tied actions
    let expected_steps = |v: usize, a: usize, t: &[f64]| {
        let mut acc = 1.0;
        let mut self_mass = 0.0;
        for &(v2, prob) in &p.trans[v][a] {
            if v2 == v {
                self_mass += prob;
            } else {
                acc += prob * t[v2];
            }
        }
        if self_mass >= 1.0 - 1e-15 {
            f64::INFINITY
        } else {
            acc / (1.0 - self_mass)
        }
    };
    let mut t = vec![0.0f64; n];
    for _ in 0..100_000 {
        let mut delta = 0.0f64;
        for v in 0..n {
            if terminate[v] {
                continue;
            }
            let best = tied[v]
                .iter()
                .map(|&a| expected_steps(v, a, &t))
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() {
                delta = delta.max(best - t[v]);
                t[v] = best;
            }
        }
        if delta < 1e-9 {
            break;
        }
    }

    let choices = (0..n)
        .map(|v| {
            if terminate[v] {
                return Choice::Terminate;
            }
            let mut best_a = tied[v][0];
            let mut best_t = expected_steps(v, best_a, &t);
            for &a in &tied[v][1..] {
                let ta = expected_steps(v, a, &t);
                if ta < best_t {
                    best_t = ta;
                    best_a = a;
                }
            }
            Choice::Act(best_a)
        })
        .collect();
    Policy { choices }
}

/// Exact properness check by graph reachability: every state must be able
/// to reach a terminating choice along policy edges.
pub fn is_proper(p: &ProductMdp, policy: &Policy) -> bool {
    let n = p.n_states();
    // backward reachability from terminating states
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut can_reach = vec![false; n];
    let mut queue = Vec::new();
    for v in 0..n {
        match policy.choices[v] {
            Choice::Terminate => {
                can_reach[v] = true;
                queue.push(v);
            }
            Choice::Act(a) => {
                for &(v2, prob) in &p.trans[v][a] {
                    if prob > 0.0 {
                        preds[v2].push(v);
                    }
                }
            }
        }
    }
    while let Some(v) = queue.pop() {
        for &u in &preds[v] {
            if !can_reach[u] {
                can_reach[u] = true;
                queue.push(u);
            }
        }
    }
    can_reach.into_iter().all(|b| b)
}

/// Gauss-Seidel solve of `x = base + P_pi x` with per-state self-loop
/// elimination, iterated to sup-norm stability below `tol`.
fn policy_fixed_point(
    p: &ProductMdp,
    policy: &Policy,
    terminate_value: impl Fn(usize) -> f64,
    tol: f64,
) -> Result<Vec<f64>, PlannerError> {
    let n = p.n_states();
    let mut x = vec![0.0f64; n];
    for _ in 0..DEFAULT_ITERATION_CAP {
        let mut delta = 0.0f64;
        for v in 0..n {
            let new = match policy.choices[v] {
                Choice::Terminate => terminate_value(v),
                Choice::Act(a) => {
                    let mut acc = 0.0;
                    let mut self_mass = 0.0;
                    for &(v2, prob) in &p.trans[v][a] {
                        if v2 == v {
                            self_mass += prob;
                        } else {
                            acc += prob * x[v2];
                        }
                    }
                    if self_mass >= 1.0 - 1e-15 {
                        // absorbing non-terminating state; improper policies
                        // are rejected before reaching this solver
                        0.0
                    } else {
                        acc / (1.0 - self_mass)
                    }
                }
            };
            delta = delta.max((new - x[v]).abs());
            x[v] = new;
        }
        if delta < tol {
            return Ok(x);
        }
    }
    Err(PlannerError::IterationCapExceeded(DEFAULT_ITERATION_CAP))
}

/// Exact total-reward value of a proper policy, solved to 1e-12.
pub fn policy_evaluate(p: &ProductMdp, policy: &Policy) -> Result<Vec<f64>, PlannerError> {
    if !is_proper(p, policy) {
        return Err(PlannerError::ImproperPolicy);
    }
    policy_fixed_point(p, policy, |v| p.term_reward[v], 1e-12)
}

/// Probability of being absorbed into the terminating sink, per product
/// state. Equals one everywhere for a proper policy.
pub fn absorption_probability(p: &ProductMdp, policy: &Policy) -> Result<Vec<f64>, PlannerError> {
    policy_fixed_point(p, policy, |_| 1.0, 1e-13)
}

/// Convert a total-reward value at the entry state to
/// an expected dissatisfaction score: `d = 1 - J / (opt + 1)`.
pub fn expected_dissatisfaction(value_at_initial: f64, opt: u64) -> Result<f64, PlannerError> {
    if !(-1e-9..=opt as f64 + 1e-9).contains(&value_at_initial) {
        return Err(PlannerError::ValueOutOfRange(value_at_initial));
    }
    Ok(1.0 - value_at_initial / (opt + 1) as f64)
}

/// Per-MDP-state probability that the trace generated under `policy`
/// satisfies the plain formula whose minimized DFA is `psi`. The policy
/// runs on the product with the preference automaton; `psi` is tracked on
/// the side and checked at the moment of termination.
pub fn satisfaction_probability(
    m: &LabeledMdp,
    p: &ProductMdp,
    policy: &Policy,
    psi: &Dfa,
) -> Result<Vec<f64>, PlannerError> {
    if m.atoms != psi.atoms {
        return Err(PlannerError::AtomMismatch);
    }
    if !is_proper(p, policy) {
        return Err(PlannerError::ImproperPolicy);
    }

    // chain over (product state, psi state)
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut nodes: Vec<(usize, usize)> = Vec::new();
    let intern = |pair: (usize, usize),
                      nodes: &mut Vec<(usize, usize)>,
                      index: &mut HashMap<(usize, usize), usize>| {
        *index.entry(pair).or_insert_with(|| {
            nodes.push(pair);
            nodes.len() - 1
        })
    };
    let mut starts = Vec::with_capacity(m.n_ordinary());
    for s in 0..m.n_ordinary() {
        let qpsi = psi.step(psi.initial, m.label(s));
        starts.push(intern((p.entry[s], qpsi), &mut nodes, &mut index));
    }
    let mut edges: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut frontier = 0;
    while frontier < nodes.len() {
        let (v, qpsi) = nodes[frontier];
        let mut row = Vec::new();
        if let Choice::Act(a) = policy.choices[v] {
            for &(v2, prob) in &p.trans[v][a] {
                let s2 = p.states[v2].0;
                let q2 = psi.step(qpsi, m.label(s2));
                let id = intern((v2, q2), &mut nodes, &mut index);
                row.push((id, prob));
            }
        }
        edges.push(row);
        frontier += 1;
    }

    // Gauss-Seidel on the absorbing chain
    let n = nodes.len();
    let mut x = vec![0.0f64; n];
    let mut converged = false;
    for _ in 0..DEFAULT_ITERATION_CAP {
        let mut delta = 0.0f64;
        for i in 0..n {
            let (v, qpsi) = nodes[i];
            let new = match policy.choices[v] {
                Choice::Terminate => {
                    if psi.accepting[qpsi] {
                        1.0
                    } else {
                        0.0
                    }
                }
                Choice::Act(_) => {
                    let mut acc = 0.0;
                    let mut self_mass = 0.0;
                    for &(j, prob) in &edges[i] {
                        if j == i {
                            self_mass += prob;
                        } else {
                            acc += prob * x[j];
                        }
                    }
                    if self_mass >= 1.0 - 1e-15 {
                        0.0
                    } else {
                        acc / (1.0 - self_mass)
                    }
                }
            };
            delta = delta.max((new - x[i]).abs());
            x[i] = new;
        }
        if delta < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(PlannerError::IterationCapExceeded(DEFAULT_ITERATION_CAP));
    }
    Ok(starts.into_iter().map(|i| x[i]).collect())
}

#[derive(Clone, Copy, Debug)]
pub struct SimReport {
    pub episodes: usize,
    pub mean: f64,
    pub std_err: f64,
}

/// Seeded Monte-Carlo estimate of the expected dissatisfaction score of a
/// policy, starting at the product's initial state. Each episode asserts
/// the reward/score identity `d = 1 - r/(opt+1)` on its own path.
pub fn simulate(
    p: &ProductMdp,
    automaton: &Wdfa,
    policy: &Policy,
    episodes: usize,
    seed: u64,
    step_cap: usize,
) -> Result<SimReport, PlannerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = (p.opt + 1) as f64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for _ in 0..episodes {
        let mut v = p.initial;
        let mut steps = 0usize;
        let score: f64 = loop {
            match policy.choices[v] {
                Choice::Terminate => {
                    let weight = automaton.end_weight[p.states[v].1];
                    let reward = p.term_reward[v];
                    let score = if weight > 0 {
                        let s = Score::new(weight, p.opt + 1);
                        let s = *s.numer() as f64 / *s.denom() as f64;
                        debug_assert!((s - (1.0 - reward / k)).abs() < 1e-12);
                        s
                    } else {
                        debug_assert_eq!(reward, 0.0);
                        1.0
                    };
                    break score;
                }
                Choice::Act(a) => {
                    steps += 1;
                    if steps > step_cap {
                        return Err(PlannerError::StepCapExceeded(step_cap));
                    }
                    let draw: f64 = rng.gen();
                    let dist = &p.trans[v][a];
                    let mut acc = 0.0;
                    let mut next = dist.last().map(|&(v2, _)| v2).expect("nonempty");
                    for &(v2, prob) in dist {
                        acc += prob;
                        if draw < acc {
                            next = v2;
                            break;
                        }
                    }
                    v = next;
                }
            }
        };
        sum += score;
        sum_sq += score * score;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let std_err = if episodes > 1 {
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(SimReport {
        episodes,
        mean,
        std_err,
    })
}

/// On-disk policy document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyDoc {
    pub formula: String,
    pub opt: u64,
    pub value_at_initial: f64,
    pub choices: Vec<ChoiceDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChoiceDoc {
    pub state: String,
    pub automaton_state: usize,
    pub action: String,
}

pub fn policy_to_doc(
    m: &LabeledMdp,
    p: &ProductMdp,
    policy: &Policy,
    formula: &str,
    value_at_initial: f64,
) -> PolicyDoc {
    let choices = (0..p.n_states())
        .map(|v| {
            let (s, q) = p.states[v];
            ChoiceDoc {
                state: m.states[s].clone(),
                automaton_state: q,
                action: match policy.choices[v] {
                    Choice::Terminate => TERMINATE_ACTION.to_string(),
                    Choice::Act(a) => m.actions[a].clone(),
                },
            }
        })
        .collect();
    PolicyDoc {
        formula: formula.to_string(),
        opt: p.opt,
        value_at_initial,
        choices,
    }
}

/// Bind a policy document to a freshly built product. Every product state
/// must be covered and every referenced pair must exist in the product.
pub fn policy_from_doc(
    m: &LabeledMdp,
    p: &ProductMdp,
    doc: &PolicyDoc,
) -> Result<Policy, PlannerError> {
    if doc.opt != p.opt {
        return Err(PlannerError::AutomatonMismatch(format!(
            "policy optionality {} differs from the automaton's {}",
            doc.opt, p.opt
        )));
    }
    let mut choices = vec![None; p.n_states()];
    for c in &doc.choices {
        let s = m
            .states
            .iter()
            .position(|n| n == &c.state)
            .ok_or_else(|| PlannerError::AutomatonMismatch(format!("unknown state `{}`", c.state)))?;
        let v = *p.index.get(&(s, c.automaton_state)).ok_or_else(|| {
            PlannerError::AutomatonMismatch(format!(
                "pair ({}, {}) not in the product",
                c.state, c.automaton_state
            ))
        })?;
        let choice = if c.action == TERMINATE_ACTION {
            Choice::Terminate
        } else {
            let a = m
                .actions
                .iter()
                .position(|x| x == &c.action)
                .ok_or_else(|| PlannerError::UnknownAction(c.action.clone()))?;
            Choice::Act(a)
        };
        choices[v] = Some(choice);
    }
    choices
        .into_iter()
        .enumerate()
        .map(|(v, c)| {
            c.ok_or_else(|| {
                let (s, q) = p.states[v];
                PlannerError::AutomatonMismatch(format!(
                    "no choice for product state ({}, {q})",
                    m.states[s]
                ))
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|choices| Policy { choices })
}
