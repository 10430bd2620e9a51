//! Preference-based temporal planning over finite traces.
//!
//! The pipeline: parse a preference formula ([`formula`]), compile its plain
//! temporal leaves to minimized deterministic automata ([`ltlf`]), compose
//! them into a weighted automaton whose run weights are satisfaction degrees
//! ([`wdfa`]), synchronize with a labeled terminating MDP ([`mdp`]), and
//! solve the product for the policy minimizing expected dissatisfaction
//! ([`planner`]).

pub mod formula;
pub mod ltlf;
pub mod mdp;
pub mod planner;
pub mod wdfa;
