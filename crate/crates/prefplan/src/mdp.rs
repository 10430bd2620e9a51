//! Labeled Markov decision processes with a terminating state, JSON
//! ingestion and validation, and the stochastic gridworld generator.
//!
//! Users never declare the terminating machinery: loading or generating a
//! model synthesizes a unique absorbing terminating state, and the
//! terminating action is implicit — it is available at every state and
//! moves there surely.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probability rows must sum to one within this tolerance.
pub const PROB_TOL: f64 = 1e-9;

/// Name given to the synthesized terminating state.
pub const TERMINAL_STATE: &str = "terminal";

/// Name used for the terminating action in policy files and reports.
pub const TERMINATE_ACTION: &str = "terminate";

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid model document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("probability row for state `{state}` action `{action}` sums to {sum}")]
    RowSum {
        state: String,
        action: String,
        sum: f64,
    },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown atom `{0}`")]
    UnknownAtom(String),
    #[error("duplicate transition ({state}, {action}, {to})")]
    DuplicateTransition {
        state: String,
        action: String,
        to: String,
    },
    #[error("name `{0}` is reserved")]
    ReservedName(String),
    #[error("duplicate state name `{0}`")]
    DuplicateState(String),
    #[error("transition probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("invalid grid config: {0}")]
    BadGridConfig(String),
    #[error("initial cell is a hole")]
    InitialIsHole,
}

/// A labeled terminating MDP. Ordinary states come first; the synthesized
/// terminating state is last and has no ordinary actions. The terminating
/// action is implicit and available everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMdp {
    pub atoms: Vec<String>,
    /// All states including the terminating state (always last).
    pub states: Vec<String>,
    pub initial: usize,
    /// Ordinary actions only.
    pub actions: Vec<String>,
    /// Label bitmask over `atoms`, per ordinary state.
    pub labels: Vec<usize>,
    pub term_state: usize,
    /// `transitions[s][a]`: successor distribution; empty means the action
    /// is unavailable at `s`. Indexed over ordinary states and actions.
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
}

impl LabeledMdp {
    pub fn n_ordinary(&self) -> usize {
        self.states.len() - 1
    }

    pub fn label(&self, state: usize) -> usize {
        self.labels[state]
    }

    /// Ordinary actions available at a state.
    pub fn available(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        self.transitions[state]
            .iter()
            .enumerate()
            .filter(|(_, dist)| !dist.is_empty())
            .map(|(a, _)| a)
    }

    /// Structural diagnostics; an empty list means the model is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.term_state != self.states.len() - 1 || self.states.last().map(String::as_str) != Some(TERMINAL_STATE)
        {
            out.push("terminating state was not synthesized as the last state".to_string());
        }
        if self.transitions.len() != self.n_ordinary() {
            out.push(format!(
                "expected {} ordinary transition rows, found {}",
                self.n_ordinary(),
                self.transitions.len()
            ));
        }
        if self.labels.len() != self.n_ordinary() {
            out.push("label table does not cover every ordinary state".to_string());
        }
        let universe = 1usize << self.atoms.len();
        for (s, &mask) in self.labels.iter().enumerate() {
            if mask >= universe {
                out.push(format!(
                    "state `{}` is labeled with an undeclared atom",
                    self.states[s]
                ));
            }
        }
        for (s, rows) in self.transitions.iter().enumerate() {
            for (a, dist) in rows.iter().enumerate() {
                if dist.is_empty() {
                    continue;
                }
                let sum: f64 = dist.iter().map(|&(_, p)| p).sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    out.push(format!(
                        "distribution for state `{}` action `{}` sums to {sum}",
                        self.states[s], self.actions[a]
                    ));
                }
                for &(to, p) in dist {
                    if to >= self.n_ordinary() {
                        out.push(format!(
                            "state `{}` action `{}` targets a non-ordinary state",
                            self.states[s], self.actions[a]
                        ));
                    }
                    if !(0.0..=1.0).contains(&p) {
                        out.push(format!("probability {p} outside [0, 1]"));
                    }
                }
            }
        }
        if self.initial >= self.n_ordinary() {
            out.push("initial state is not an ordinary state".to_string());
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TransitionDoc {
    from: String,
    action: String,
    to: String,
    prob: f64,
}

/// On-disk model document. The terminating state and action never appear.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpDoc {
    atoms: Vec<String>,
    states: Vec<String>,
    initial: String,
    actions: Vec<String>,
    labels: BTreeMap<String, Vec<String>>,
    transitions: Vec<TransitionDoc>,
}

/// Parse and validate a model document, synthesizing the terminating state.
pub fn load_mdp(document: &str) -> Result<LabeledMdp, MdpError> {
    let doc: MdpDoc = serde_json::from_str(document)?;
    from_doc(&doc)
}

fn from_doc(doc: &MdpDoc) -> Result<LabeledMdp, MdpError> {
    for name in &doc.states {
        if name == TERMINAL_STATE {
            return Err(MdpError::ReservedName(name.clone()));
        }
    }
    for name in &doc.actions {
        if name == TERMINATE_ACTION {
            return Err(MdpError::ReservedName(name.clone()));
        }
    }
    let mut seen = HashSet::new();
    for name in &doc.states {
        if !seen.insert(name) {
            return Err(MdpError::DuplicateState(name.clone()));
        }
    }

    let state_idx = |name: &str| {
        doc.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| MdpError::UnknownState(name.to_string()))
    };
    let initial = state_idx(&doc.initial)?;

    let mut labels = vec![0usize; doc.states.len()];
    for (state, atoms) in &doc.labels {
        let s = state_idx(state)?;
        for atom in atoms {
            let i = doc
                .atoms
                .iter()
                .position(|a| a == atom)
                .ok_or_else(|| MdpError::UnknownAtom(atom.clone()))?;
            labels[s] |= 1 << i;
        }
    }

    let n = doc.states.len();
    let mut transitions = vec![vec![Vec::new(); doc.actions.len()]; n];
    let mut seen_edges = HashSet::new();
    for t in &doc.transitions {
        let from = state_idx(&t.from)?;
        let to = state_idx(&t.to)?;
        let a = doc
            .actions
            .iter()
            .position(|x| x == &t.action)
            .ok_or_else(|| MdpError::UnknownAction(t.action.clone()))?;
        if !seen_edges.insert((from, a, to)) {
            return Err(MdpError::DuplicateTransition {
                state: t.from.clone(),
                action: t.action.clone(),
                to: t.to.clone(),
            });
        }
        if !(0.0..=1.0).contains(&t.prob) {
            return Err(MdpError::BadProbability(t.prob));
        }
        transitions[from][a].push((to, t.prob));
    }

    for (s, rows) in transitions.iter().enumerate() {
        for (a, dist) in rows.iter().enumerate() {
            if dist.is_empty() {
                continue;
            }
            let sum: f64 = dist.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(MdpError::RowSum {
                    state: doc.states[s].clone(),
                    action: doc.actions[a].clone(),
                    sum,
                });
            }
        }
    }

    let mut states = doc.states.clone();
    states.push(TERMINAL_STATE.to_string());
    Ok(LabeledMdp {
        atoms: doc.atoms.clone(),
        term_state: states.len() - 1,
        states,
        initial,
        actions: doc.actions.clone(),
        labels,
        transitions,
    })
}

/// Serialize a model back to its document form (terminating state omitted).
pub fn save_mdp(m: &LabeledMdp) -> String {
    let mut labels = BTreeMap::new();
    for s in 0..m.n_ordinary() {
        let names: Vec<String> = m
            .atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| (m.labels[s] >> i) & 1 == 1)
            .map(|(_, a)| a.clone())
            .collect();
        if !names.is_empty() {
            labels.insert(m.states[s].clone(), names);
        }
    }
    let mut transitions = Vec::new();
    for s in 0..m.n_ordinary() {
        for (a, dist) in m.transitions[s].iter().enumerate() {
            for &(to, prob) in dist {
                transitions.push(TransitionDoc {
                    from: m.states[s].clone(),
                    action: m.actions[a].clone(),
                    to: m.states[to].clone(),
                    prob,
                });
            }
        }
    }
    let doc = MdpDoc {
        atoms: m.atoms.clone(),
        states: m.states[..m.n_ordinary()].to_vec(),
        initial: m.states[m.initial].clone(),
        actions: m.actions.clone(),
        labels,
        transitions,
    };
    serde_json::to_string_pretty(&doc).expect("document serialization")
}

fn default_intended() -> f64 {
    0.8
}

fn default_slip() -> f64 {
    0.1
}

/// Configuration of a stochastic gridworld. Cells are `(col, row)`,
/// 1-indexed, origin at the bottom-left.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridConfig {
    pub rows: u32,
    pub cols: u32,
    pub initial: (u32, u32),
    #[serde(default = "default_intended")]
    pub intended: f64,
    #[serde(default = "default_slip")]
    pub slip: f64,
    #[serde(default)]
    pub holes: Vec<(u32, u32)>,
    #[serde(default)]
    pub regions: BTreeMap<String, Vec<(u32, u32)>>,
}

impl GridConfig {
    pub fn from_json(text: &str) -> Result<Self, MdpError> {
        let config: GridConfig = serde_json::from_str(text)?;
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<(), MdpError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(MdpError::BadGridConfig("empty grid".to_string()));
        }
        if (self.intended + 2.0 * self.slip - 1.0).abs() > PROB_TOL {
            return Err(MdpError::BadGridConfig(format!(
                "intended + 2*slip = {} must be 1",
                self.intended + 2.0 * self.slip
            )));
        }
        let in_range =
            |&(c, r): &(u32, u32)| c >= 1 && c <= self.cols && r >= 1 && r <= self.rows;
        if !in_range(&self.initial) {
            return Err(MdpError::BadGridConfig("initial cell out of range".into()));
        }
        let holes: BTreeSet<(u32, u32)> = self.holes.iter().copied().collect();
        for cell in &self.holes {
            if !in_range(cell) {
                return Err(MdpError::BadGridConfig(format!(
                    "hole {cell:?} out of range"
                )));
            }
        }
        for (atom, cells) in &self.regions {
            for cell in cells {
                if !in_range(cell) {
                    return Err(MdpError::BadGridConfig(format!(
                        "region `{atom}` cell {cell:?} out of range"
                    )));
                }
                if holes.contains(cell) {
                    return Err(MdpError::BadGridConfig(format!(
                        "region `{atom}` overlaps hole {cell:?}"
                    )));
                }
            }
        }
        if holes.contains(&self.initial) {
            return Err(MdpError::InitialIsHole);
        }
        Ok(())
    }
}

/// State name of a grid cell.
pub fn cell_name(col: u32, row: u32) -> String {
    format!("{col}_{row}")
}

/// Recover the cell coordinates from a gridworld state name.
pub fn parse_cell_name(name: &str) -> Option<(u32, u32)> {
    let (c, r) = name.split_once('_')?;
    Some((c.parse().ok()?, r.parse().ok()?))
}

const DIRECTIONS: [(&str, (i64, i64)); 4] =
    [("N", (0, 1)), ("W", (-1, 0)), ("S", (0, -1)), ("E", (1, 0))];

/// Generate the gridworld MDP: intended moves with lateral slips, boundary
/// moves redirected to the current cell, hole cells absorbing.
pub fn gridworld(config: &GridConfig) -> Result<LabeledMdp, MdpError> {
    config.check()?;
    let holes: BTreeSet<(u32, u32)> = config.holes.iter().copied().collect();
    let atoms: Vec<String> = config.regions.keys().cloned().collect();

    let mut cells = Vec::new();
    for row in 1..=config.rows {
        for col in 1..=config.cols {
            cells.push((col, row));
        }
    }
    let idx_of = |col: u32, row: u32| ((row - 1) * config.cols + (col - 1)) as usize;

    let mut labels = vec![0usize; cells.len()];
    for (i, atom) in atoms.iter().enumerate() {
        for &(col, row) in &config.regions[atom] {
            labels[idx_of(col, row)] |= 1 << i;
        }
    }

    let mut transitions = vec![vec![Vec::new(); 4]; cells.len()];
    for (s, &(col, row)) in cells.iter().enumerate() {
        if holes.contains(&(col, row)) {
            for a in 0..4 {
                transitions[s][a] = vec![(s, 1.0)];
            }
            continue;
        }
        for (a, &(_, intended_delta)) in DIRECTIONS.iter().enumerate() {
            // intended component plus the two perpendicular slips
            let components = [
                (intended_delta, config.intended),
                ((intended_delta.1, intended_delta.0), config.slip),
                ((-intended_delta.1, -intended_delta.0), config.slip),
            ];
            let mut mass: BTreeMap<usize, f64> = BTreeMap::new();
            for ((dc, dr), p) in components {
                let nc = col as i64 + dc;
                let nr = row as i64 + dr;
                let target = if nc >= 1 && nc <= config.cols as i64 && nr >= 1 && nr <= config.rows as i64
                {
                    idx_of(nc as u32, nr as u32)
                } else {
                    s // boundary redirect: stay in place
                };
                *mass.entry(target).or_insert(0.0) += p;
            }
            transitions[s][a] = mass.into_iter().collect();
        }
    }

    let mut states: Vec<String> = cells.iter().map(|&(c, r)| cell_name(c, r)).collect();
    states.push(TERMINAL_STATE.to_string());
    Ok(LabeledMdp {
        atoms,
        term_state: states.len() - 1,
        states,
        initial: idx_of(config.initial.0, config.initial.1),
        actions: DIRECTIONS.iter().map(|(n, _)| n.to_string()).collect(),
        labels,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_doc() -> String {
        serde_json::json!({
            "atoms": ["b"],
            "states": ["s0", "s1"],
            "initial": "s0",
            "actions": ["go"],
            "labels": {"s1": ["b"]},
            "transitions": [{"from": "s0", "action": "go", "to": "s1", "prob": 1.0}],
        })
        .to_string()
    }

    #[test]
    fn loads_two_state_chain_with_synthesis() {
        let m = load_mdp(&two_state_doc()).unwrap();
        assert_eq!(m.states.len(), 3);
        assert_eq!(m.states[m.term_state], TERMINAL_STATE);
        assert_eq!(m.labels[1], 1);
        assert!(m.validate().is_empty());
    }

    #[test]
    fn rejects_bad_probability_row() {
        let doc = serde_json::json!({
            "atoms": [],
            "states": ["s0", "s1"],
            "initial": "s0",
            "actions": ["go"],
            "labels": {},
            "transitions": [{"from": "s0", "action": "go", "to": "s1", "prob": 0.9}],
        })
        .to_string();
        match load_mdp(&doc) {
            Err(MdpError::RowSum { state, action, .. }) => {
                assert_eq!(state, "s0");
                assert_eq!(action, "go");
            }
            other => panic!("expected row-sum error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_references_and_duplicates() {
        let doc = serde_json::json!({
            "atoms": [], "states": ["s0"], "initial": "s0", "actions": ["go"],
            "labels": {}, "transitions": [
                {"from": "s0", "action": "go", "to": "s0", "prob": 0.5},
                {"from": "s0", "action": "go", "to": "s0", "prob": 0.5}
            ],
        })
        .to_string();
        assert!(matches!(
            load_mdp(&doc),
            Err(MdpError::DuplicateTransition { .. })
        ));

        let doc = serde_json::json!({
            "atoms": [], "states": ["s0"], "initial": "s0", "actions": [],
            "labels": {"s0": ["x"]}, "transitions": [],
        })
        .to_string();
        assert!(matches!(load_mdp(&doc), Err(MdpError::UnknownAtom(_))));
    }

    #[test]
    fn roundtrip_preserves_model() {
        let m = load_mdp(&two_state_doc()).unwrap();
        let m2 = load_mdp(&save_mdp(&m)).unwrap();
        assert_eq!(m, m2);
    }

    fn small_grid() -> GridConfig {
        GridConfig {
            rows: 3,
            cols: 3,
            initial: (2, 2),
            intended: 0.8,
            slip: 0.1,
            holes: vec![(3, 3)],
            regions: BTreeMap::from([("b".to_string(), vec![(1, 3)])]),
        }
    }

    #[test]
    fn interior_cell_moves_with_slips() {
        let m = gridworld(&small_grid()).unwrap();
        // action N at the interior cell (2,2): north 0.8, west 0.1, east 0.1
        let s = m.states.iter().position(|n| n == "2_2").unwrap();
        let north = m.states.iter().position(|n| n == "2_3").unwrap();
        let west = m.states.iter().position(|n| n == "1_2").unwrap();
        let east = m.states.iter().position(|n| n == "3_2").unwrap();
        let dist: BTreeMap<usize, f64> = m.transitions[s][0].iter().copied().collect();
        assert_eq!(dist.len(), 3);
        assert!((dist[&north] - 0.8).abs() < 1e-12);
        assert!((dist[&west] - 0.1).abs() < 1e-12);
        assert!((dist[&east] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn corner_redirects_to_stay() {
        let m = gridworld(&small_grid()).unwrap();
        // northwest corner (1,3): action N redirects north and west to stay
        let s = m.states.iter().position(|n| n == "1_3").unwrap();
        let east = m.states.iter().position(|n| n == "2_3").unwrap();
        let dist: BTreeMap<usize, f64> = m.transitions[s][0].iter().copied().collect();
        assert!((dist[&s] - 0.9).abs() < 1e-12);
        assert!((dist[&east] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn holes_absorb() {
        let m = gridworld(&small_grid()).unwrap();
        let s = m.states.iter().position(|n| n == "3_3").unwrap();
        for a in 0..4 {
            assert_eq!(m.transitions[s][a], vec![(s, 1.0)]);
        }
    }

    #[test]
    fn grid_mass_conservation() {
        let m = gridworld(&small_grid()).unwrap();
        for s in 0..m.n_ordinary() {
            for a in 0..4 {
                let sum: f64 = m.transitions[s][a].iter().map(|&(_, p)| p).sum();
                assert!((sum - 1.0).abs() < 1e-12, "state {s} action {a}");
            }
        }
        assert!(m.validate().is_empty());
    }

    #[test]
    fn initial_in_hole_is_rejected() {
        let mut config = small_grid();
        config.holes.push((2, 2));
        assert!(matches!(gridworld(&config), Err(MdpError::InitialIsHole)));
    }

    #[test]
    fn grid_roundtrips_through_document_form() {
        let m = gridworld(&small_grid()).unwrap();
        let m2 = load_mdp(&save_mdp(&m)).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn validate_flags_missing_synthesis() {
        let mut m = load_mdp(&two_state_doc()).unwrap();
        m.states.pop();
        m.term_state = 5;
        assert!(!m.validate().is_empty());
    }
}
