//! Cross-check of the linear-solve satisfaction probabilities against a
//! seeded Monte-Carlo simulation on the bundled gridworld.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use prefplan::formula::parse_formula;
use prefplan::ltlf;
use prefplan::mdp;
use prefplan::planner::{self, Choice};
use prefplan::wdfa;

#[test]
fn satisfaction_probability_matches_monte_carlo() {
    let cfg = mdp::GridConfig::from_json(
        &std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/g1.json"))
            .unwrap(),
    )
    .unwrap();
    let m = mdp::gridworld(&cfg).unwrap();
    let ast = parse_formula("F b *> (F a || F c)").unwrap();
    let a = wdfa::compile(&ast, &m.atoms).unwrap();
    let p = planner::product(&m, &a).unwrap();
    let (values, _) = planner::value_iteration(&p, 1e-10, 1_000_000).unwrap();
    let policy = planner::extract_policy(&p, &values);

    let psi = ltlf::minimize(&ltlf::build_dfa(&parse_formula("F b").unwrap(), &m.atoms).unwrap());
    let exact = planner::satisfaction_probability(&m, &p, &policy, &psi).unwrap();

    // Monte-Carlo from the initial state: roll out the policy while feeding
    // the psi automaton the labels of visited states, count acceptance at
    // the moment of termination.
    let episodes = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut hits = 0usize;
    for _ in 0..episodes {
        let mut v = p.initial;
        let mut q = psi.step(psi.initial, m.label(p.states[v].0));
        loop {
            match policy.choices[v] {
                Choice::Terminate => {
                    if psi.accepting[q] {
                        hits += 1;
                    }
                    break;
                }
                Choice::Act(act) => {
                    let mut roll: f64 = rng.gen();
                    let dist = &p.trans[v][act];
                    let mut next = dist[dist.len() - 1].0;
                    for &(v2, prob) in dist {
                        if roll < prob {
                            next = v2;
                            break;
                        }
                        roll -= prob;
                    }
                    v = next;
                    q = psi.step(q, m.label(p.states[v].0));
                }
            }
        }
    }
    let mean = hits as f64 / episodes as f64;
    let se = (mean * (1.0 - mean) / episodes as f64).sqrt();
    let p0 = exact[m.initial];
    assert!(
        (p0 - mean).abs() <= 3.0 * se + 1e-9,
        "exact {p0} vs Monte-Carlo {mean} (se {se})"
    );
}
