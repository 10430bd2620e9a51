//! Acceptance suite: one test (and one pass/fail line) per criterion.
//! Criteria 1–9 are gating; criterion 10 is informational and prints its
//! outcome without failing the build.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use prefplan::formula::{
    dissatisfaction_score, optionality, parse_formula, parse_trace, satisfaction_degree_oracle,
    Ast, Degree, Score, Trace,
};
use prefplan::ltlf;
use prefplan::mdp::{self, LabeledMdp};
use prefplan::planner::{self, Choice, Policy, ProductMdp};
use prefplan::wdfa::{self, Wdfa};

const PHI1: &str = "F b *> (F a || F c)";
const PHI2: &str = "F (a && F (b && F c)) *> (F (a && F c) || F (b && F c))";
const PHI3: &str = "(F b *> (F a || F c)) & (F (a && F (b && F c)) *> (F (a && F c) || F (b && F c)))";

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn load_fixture_mdp(name: &str) -> LabeledMdp {
    let m = mdp::load_mdp(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
    assert!(m.validate().is_empty());
    m
}

fn grid_model(name: &str) -> LabeledMdp {
    let cfg = mdp::GridConfig::from_json(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
    mdp::gridworld(&cfg).unwrap()
}

fn abc() -> Vec<String> {
    vec!["a".into(), "b".into(), "c".into()]
}

fn compile(text: &str, atoms: &[String]) -> Wdfa {
    wdfa::compile(&parse_formula(text).unwrap(), atoms).unwrap()
}

/// All traces of length 1..=max_len over `n_atoms` atoms, as symbol-id words.
fn all_words(n_atoms: usize, max_len: usize) -> Vec<Vec<usize>> {
    let n_symbols = 1usize << n_atoms;
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for word in &frontier {
            for sym in 0..n_symbols {
                let mut w = word.clone();
                w.push(sym);
                out.push(w.clone());
                next.push(w);
            }
        }
        frontier = next;
    }
    out
}

fn word_to_trace(word: &[usize], atoms: &[String]) -> Trace {
    Trace(
        word.iter()
            .map(|&sym| {
                atoms
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| (sym >> i) & 1 == 1)
                    .map(|(_, a)| a.clone())
                    .collect::<BTreeSet<String>>()
            })
            .collect(),
    )
}

#[test]
fn criterion_1_reference_scores_golden() {
    let ast = parse_formula(PHI1).unwrap();
    let opt = optionality(&ast);
    assert_eq!(opt, 2);
    let cases = [
        ("b;a", Degree::Satisfied(1), Score::new(1, 3)),
        ("-;-;a", Degree::Satisfied(2), Score::new(2, 3)),
        ("-;-", Degree::Unsatisfied, Score::new(1, 1)),
    ];
    for (text, degree, score) in cases {
        let trace = parse_trace(text).unwrap();
        let got = satisfaction_degree_oracle(&trace, &ast).unwrap();
        assert_eq!(got, degree, "degree of {text}");
        assert_eq!(dissatisfaction_score(got, opt).unwrap(), score, "score of {text}");
    }
    println!("criterion 1 (reference trace degrees and exact scores): PASS");
}

#[test]
fn criterion_2_weighted_automaton_behavior() {
    let a = compile(PHI1, &abc());
    let cases = [("b;a", 1u64), ("-;-;a", 2), ("b", 1), ("-;-", 0)];
    for (text, weight) in cases {
        let got = a.run_weight(&parse_trace(text).unwrap()).unwrap();
        assert_eq!(got, weight, "run weight of {text}");
    }
    println!("criterion 2 (representative run weights 1, 2, 1, 0): PASS");
}

#[test]
fn criterion_3_oracle_equivalence() {
    let start = Instant::now();
    let atoms = abc();
    let words = all_words(3, 3);
    assert_eq!(words.len(), 584);
    for text in [PHI1, PHI2, PHI3] {
        let ast = parse_formula(text).unwrap();
        let a = wdfa::compile(&ast, &atoms).unwrap();
        for word in &words {
            let trace = word_to_trace(word, &atoms);
            let via_wdfa = match a.run_weight_ids(word) {
                0 => Degree::Unsatisfied,
                k => Degree::Satisfied(k),
            };
            let via_oracle = satisfaction_degree_oracle(&trace, &ast).unwrap();
            assert_eq!(via_wdfa, via_oracle, "{text} on {trace:?}");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "criterion 3 (automaton degree == oracle on 584 traces x 3 formulas, {:.2}s): PASS",
        elapsed.as_secs_f64()
    );
}

/// Random plain formula of bounded depth over the given atoms.
fn random_plain(rng: &mut ChaCha8Rng, atoms: &[String], depth: usize) -> Ast {
    if depth == 0 {
        return match rng.gen_range(0..4) {
            0 => Ast::True,
            1 => Ast::False,
            _ => Ast::Atom(atoms[rng.gen_range(0..atoms.len())].clone()),
        };
    }
    match rng.gen_range(0..8) {
        0 => Ast::Atom(atoms[rng.gen_range(0..atoms.len())].clone()),
        1 => Ast::Not(Box::new(random_plain(rng, atoms, depth - 1))),
        2 => Ast::And(
            Box::new(random_plain(rng, atoms, depth - 1)),
            Box::new(random_plain(rng, atoms, depth - 1)),
        ),
        3 => Ast::Or(
            Box::new(random_plain(rng, atoms, depth - 1)),
            Box::new(random_plain(rng, atoms, depth - 1)),
        ),
        4 => Ast::Next(Box::new(random_plain(rng, atoms, depth - 1))),
        5 => Ast::Until(
            Box::new(random_plain(rng, atoms, depth - 1)),
            Box::new(random_plain(rng, atoms, depth - 1)),
        ),
        6 => Ast::Eventually(Box::new(random_plain(rng, atoms, depth - 1))),
        _ => Ast::Always(Box::new(random_plain(rng, atoms, depth - 1))),
    }
}

#[test]
fn criterion_4_random_ltlf_vs_semantics() {
    let start = Instant::now();
    let atoms: Vec<String> = vec!["a".into(), "b".into()];
    let words = all_words(2, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(0x4c544c66);
    for i in 0..200 {
        let ast = random_plain(&mut rng, &atoms, 4);
        let dfa = ltlf::minimize(&ltlf::build_dfa(&ast, &atoms).unwrap());
        for word in &words {
            let trace = word_to_trace(word, &atoms);
            let expected = ltlf::holds(&trace, &ast).unwrap();
            assert_eq!(dfa.accepts(word), expected, "formula #{i}: {ast} on {trace:?}");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "criterion 4 (200 random LTLf DFAs == semantic evaluator on traces <= 4, {:.2}s): PASS",
        elapsed.as_secs_f64()
    );
}

/// Random preference tree whose plain leaves are drawn from a pool of
/// contingent (satisfiable and refutable) temporal formulas.
fn random_preference(rng: &mut ChaCha8Rng, depth: usize) -> Ast {
    let leaves = [
        "F a", "F b", "G a", "G b", "a", "b", "!a", "X b", "a U b", "F (a && b)", "G (a || b)",
        "X X a", "F (a && X b)",
    ];
    if depth == 0 || rng.gen_range(0..3) == 0 {
        return parse_formula(leaves[rng.gen_range(0..leaves.len())]).unwrap();
    }
    let left = Box::new(random_preference(rng, depth - 1));
    let right = Box::new(random_preference(rng, depth - 1));
    if rng.gen_bool(0.5) {
        Ast::OrderedDisj(left, right)
    } else {
        Ast::PrioConj(left, right)
    }
}

#[test]
fn criterion_5_max_weight_equals_optionality() {
    let atoms: Vec<String> = vec!["a".into(), "b".into()];
    let words = all_words(2, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6f707431);
    let mut checked = 0;
    while checked < 50 {
        let ast = random_preference(&mut rng, 3);
        // keep only formulas with an accepting witness of length <= 4
        let satisfiable = words.iter().any(|word| {
            satisfaction_degree_oracle(&word_to_trace(word, &atoms), &ast).unwrap()
                != Degree::Unsatisfied
        });
        if !satisfiable {
            continue;
        }
        let a = wdfa::compile(&ast, &atoms).unwrap();
        assert!(a.is_satisfiable(), "{ast}");
        assert_eq!(a.max_weight(), optionality(&ast), "{ast}");
        checked += 1;
    }
    println!("criterion 5 (max weight == optionality on 50 random satisfiable formulas): PASS");
}

/// Independent dense policy evaluation by Gaussian elimination, used as the
/// brute-force oracle. Terminate states are fixed to their reward; acting
/// states solve `(I - P) x = 0` with substituted boundary values.
fn dense_evaluate(p: &ProductMdp, policy: &Policy) -> Vec<f64> {
    let n = p.n_states();
    let vars: Vec<usize> = (0..n)
        .filter(|&v| matches!(policy.choices[v], Choice::Act(_)))
        .collect();
    let col_of: Vec<Option<usize>> = {
        let mut c = vec![None; n];
        for (i, &v) in vars.iter().enumerate() {
            c[v] = Some(i);
        }
        c
    };
    let k = vars.len();
    // rows: x_v - sum_{u var} P[v,u] x_u = sum_{u term} P[v,u] * reward(u)
    let mut a = vec![vec![0.0f64; k + 1]; k];
    for (i, &v) in vars.iter().enumerate() {
        a[i][i] = 1.0;
        let Choice::Act(act) = policy.choices[v] else { unreachable!() };
        for &(u, prob) in &p.trans[v][act] {
            match col_of[u] {
                Some(j) => a[i][j] -= prob,
                None => a[i][k] += prob * p.term_reward[u],
            }
        }
    }
    // Gaussian elimination with partial pivoting
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag.abs() > 1e-12, "singular system: improper policy slipped through");
        for row in 0..k {
            if row == col {
                continue;
            }
            let factor = a[row][col] / diag;
            if factor != 0.0 {
                for j in col..=k {
                    let v = a[col][j];
                    a[row][j] -= factor * v;
                }
            }
        }
    }
    let mut x = vec![0.0f64; n];
    for v in 0..n {
        x[v] = match col_of[v] {
            Some(i) => a[i][k] / a[i][i],
            None => p.term_reward[v],
        };
    }
    x
}

/// Simple properness check written independently of the library: can every
/// state reach a Terminate choice along policy edges?
fn brute_proper(p: &ProductMdp, policy: &Policy) -> bool {
    let n = p.n_states();
    (0..n).all(|start| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            match policy.choices[v] {
                Choice::Terminate => return true,
                Choice::Act(a) => {
                    for &(u, prob) in &p.trans[v][a] {
                        if prob > 0.0 {
                            stack.push(u);
                        }
                    }
                }
            }
        }
        false
    })
}

fn brute_force_best(p: &ProductMdp) -> f64 {
    // enumerate every deterministic Markovian product policy
    let option_sets: Vec<Vec<Choice>> = (0..p.n_states())
        .map(|v| {
            let mut opts = vec![Choice::Terminate];
            opts.extend(p.available(v).map(Choice::Act));
            opts
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut counters = vec![0usize; p.n_states()];
    loop {
        let policy = Policy {
            choices: counters
                .iter()
                .zip(&option_sets)
                .map(|(&i, opts)| opts[i])
                .collect(),
        };
        // improper policies collect zero on their non-terminating runs and
        // are dominated by proper ones; skipping them is sound
        if brute_proper(p, &policy) {
            best = best.max(dense_evaluate(p, &policy)[p.initial]);
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == counters.len() {
                return best;
            }
            counters[pos] += 1;
            if counters[pos] < option_sets[pos].len() {
                break;
            }
            counters[pos] = 0;
            pos += 1;
        }
    }
}

#[test]
fn criterion_6_brute_force_optimality() {
    let cases = [
        ("toy_chain.json", "F b"),
        ("toy_split.json", "F b *> F a"),
        ("toy_risk.json", "F a *> F b"),
    ];
    for (model, formula) in cases {
        let m = load_fixture_mdp(model);
        let a = compile(formula, &m.atoms);
        let p = planner::product(&m, &a).unwrap();
        assert!(p.n_states() <= 8, "{model}: {} product states", p.n_states());
        let (values, _) = planner::value_iteration(&p, 1e-12, 1_000_000).unwrap();
        let policy = planner::extract_policy(&p, &values);
        let extracted = planner::policy_evaluate(&p, &policy).unwrap()[p.initial];
        let best = brute_force_best(&p);
        assert!(
            (values[p.initial] - best).abs() <= 1e-8,
            "{model}: VI {} vs brute force {best}",
            values[p.initial]
        );
        assert!(
            (extracted - best).abs() <= 1e-8,
            "{model}: extracted policy {extracted} vs brute force {best}"
        );
    }
    println!("criterion 6 (VI + extraction == brute-force enumeration on 3 toy models): PASS");
}

#[test]
fn criterion_7_value_score_identity() {
    let m = grid_model("g1.json");
    let a = compile(PHI1, &m.atoms);
    let p = planner::product(&m, &a).unwrap();
    let (values, _) = planner::value_iteration(&p, 1e-10, 1_000_000).unwrap();
    let policy = planner::extract_policy(&p, &values);
    let j0 = values[p.initial];
    let k = (p.opt + 1) as f64;

    // statistical identity against a seeded simulation
    let report = planner::simulate(&p, &a, &policy, 100_000, 2024, 1_000_000).unwrap();
    let lhs = (j0 - k * (1.0 - report.mean)).abs();
    let bound = 3.0 * k * report.std_err;
    assert!(lhs <= bound, "|J* - K(1 - d_hat)| = {lhs} > {bound}");

    // exact relation between planned value and evaluated dissatisfaction
    let evaluated = planner::policy_evaluate(&p, &policy).unwrap()[p.initial];
    let d = planner::expected_dissatisfaction(evaluated, p.opt).unwrap();
    assert!((d - (1.0 - j0 / k)).abs() <= 1e-8, "d = {d} vs 1 - J*/K = {}", 1.0 - j0 / k);
    println!(
        "criterion 7 (value-score identity: |J* - K(1 - d_hat)| = {lhs:.2e} <= {bound:.2e}; d == 1 - J*/K): PASS"
    );
}

#[test]
fn criterion_8_properness() {
    let toy_cases = [
        ("toy_chain.json", "F b"),
        ("toy_split.json", "F b *> F a"),
        ("toy_risk.json", "F a *> F b"),
    ];
    let mut combos: Vec<(LabeledMdp, String)> = toy_cases
        .iter()
        .map(|(model, f)| (load_fixture_mdp(model), f.to_string()))
        .collect();
    combos.push((grid_model("g1.json"), PHI1.to_string()));
    combos.push((grid_model("g1.json"), PHI3.to_string()));
    combos.push((grid_model("g2.json"), PHI3.to_string()));
    for (m, formula) in &combos {
        let a = compile(formula, &m.atoms);
        let p = planner::product(m, &a).unwrap();
        let (values, _) = planner::value_iteration(&p, 1e-10, 1_000_000).unwrap();
        let policy = planner::extract_policy(&p, &values);
        let absorption = planner::absorption_probability(&p, &policy).unwrap();
        for (v, &prob) in absorption.iter().enumerate() {
            assert!(
                prob >= 1.0 - 1e-9,
                "{formula}: absorption {prob} at product state {v}"
            );
        }
        // no simulated episode may exceed the step cap
        planner::simulate(&p, &a, &policy, 2_000, 7, 1_000_000).unwrap();
    }
    println!("criterion 8 (absorption probability >= 1 - 1e-9 on all bundled fixtures): PASS");
}

#[test]
fn criterion_9_runtime() {
    let m = grid_model("g1.json");
    let mut timings = Vec::new();
    for formula in [PHI1, PHI3] {
        let start = Instant::now();
        let a = compile(formula, &m.atoms);
        let p = planner::product(&m, &a).unwrap();
        let (values, _) = planner::value_iteration(&p, 1e-10, 1_000_000).unwrap();
        let _policy = planner::extract_policy(&p, &values);
        let elapsed = start.elapsed().as_secs_f64();
        assert!(elapsed <= 5.0, "{formula}: took {elapsed:.2}s");
        timings.push(elapsed);
    }
    println!(
        "criterion 9 (8x8 planning in {:.2}s with phi1, {:.2}s with phi3, bound 5s): PASS",
        timings[0], timings[1]
    );
}

#[test]
fn criterion_10_qualitative_reproduction() {
    // part 1: the preference policy gravitates towards b
    let m = grid_model("g1.json");
    let mean_prob_b = |formula: &str| {
        let a = compile(formula, &m.atoms);
        let p = planner::product(&m, &a).unwrap();
        let (values, _) = planner::value_iteration(&p, 1e-10, 1_000_000).unwrap();
        let policy = planner::extract_policy(&p, &values);
        let psi = ltlf::minimize(&ltlf::build_dfa(&parse_formula("F b").unwrap(), &m.atoms).unwrap());
        let probs = planner::satisfaction_probability(&m, &p, &policy, &psi).unwrap();
        let free: Vec<f64> = (0..m.n_ordinary())
            .filter(|&s| m.available(s).any(|a| m.transitions[s][a] != vec![(s, 1.0)]))
            .map(|s| probs[s])
            .collect();
        free.iter().sum::<f64>() / free.len() as f64
    };
    let pref = mean_prob_b(PHI1);
    let disj = mean_prob_b("F b || F a || F c");
    let part1 = pref >= disj;

    // part 2: with the extra hole, the sealed upper-left pocket cannot
    // reach region c, so phi3 values there are zero
    let m2 = grid_model("g2.json");
    let a3 = compile(PHI3, &m2.atoms);
    let p3 = planner::product(&m2, &a3).unwrap();
    let (v3, _) = planner::value_iteration(&p3, 1e-10, 1_000_000).unwrap();
    let pocket: Vec<String> = (1..=2)
        .flat_map(|col| (6..=8).map(move |row| mdp::cell_name(col, row)))
        .collect();
    let part2 = pocket.iter().all(|name| {
        let s = m2.states.iter().position(|n| n == name).unwrap();
        v3[p3.entry[s]].abs() <= 1e-9
    });

    let verdict = if part1 && part2 { "PASS" } else { "DIVERGES" };
    println!(
        "criterion 10 (informational: mean Pr(F b) {pref:.3} vs {disj:.3} under plain disjunction; \
         sealed-pocket values zero: {part2}): {verdict}"
    );
}
