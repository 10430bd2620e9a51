//! Command-line front end: compile preference formulas, score traces, plan
//! in labeled MDPs, evaluate policies, generate gridworlds, and emit
//! heatmap data.
//!
//! Exit codes: 0 success, 1 usage/parse errors, 2 validation errors,
//! 3 solver/numeric errors.

use std::fmt::Write as _;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use prefplan::formula::{
    dissatisfaction_score, optionality, parse_formula, parse_trace, satisfaction_degree_oracle,
    Ast, FormulaError,
};
use prefplan::ltlf::{self, LtlfError};
use prefplan::mdp::{self, LabeledMdp, MdpError};
use prefplan::planner::{self, PlannerError, Policy, ProductMdp};
use prefplan::wdfa::{self, Wdfa, WdfaError};

#[derive(Parser)]
#[command(name = "prefplan", version, about = "Preference-based temporal planning")]
struct Cli {
    /// Output format for summaries.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a preference formula to a weighted automaton.
    Compile(CompileArgs),
    /// Score a trace against a preference formula.
    Score(ScoreArgs),
    /// Compute the policy minimizing expected dissatisfaction.
    Plan(PlanArgs),
    /// Evaluate a stored policy.
    Eval(EvalArgs),
    /// Generate a gridworld model from a config.
    Gridworld(GridworldArgs),
    /// Emit per-cell values or satisfaction probabilities as CSV.
    Heatmap(HeatmapArgs),
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    formula: String,
    /// Comma-separated ordered atom list fixing the alphabet.
    #[arg(long)]
    atoms: String,
    /// Write a GraphViz DOT rendering here.
    #[arg(long)]
    dot: Option<String>,
    /// Write the automaton as JSON here.
    #[arg(long)]
    json: Option<String>,
    /// Minimize component automata before composition (this is the
    /// default; the flag is accepted for explicitness).
    #[arg(long)]
    minimize: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    formula: String,
    #[arg(long)]
    atoms: String,
    /// Trace as `symbol(;symbol)*`, each symbol `-` or comma-joined atoms.
    #[arg(long, allow_hyphen_values = true)]
    trace: String,
}

#[derive(Args)]
struct PlanArgs {
    /// Model JSON file.
    #[arg(long)]
    mdp: String,
    #[arg(long)]
    formula: String,
    #[arg(long)]
    out_policy: Option<String>,
    #[arg(long)]
    out_values: Option<String>,
    /// Value-iteration stopping tolerance.
    #[arg(long, default_value_t = planner::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    mdp: String,
    /// Policy JSON produced by `plan`.
    #[arg(long)]
    policy: String,
    #[arg(long)]
    formula: String,
    /// Plain temporal formula to compute per-state satisfaction
    /// probabilities for.
    #[arg(long)]
    against: Option<String>,
    /// Monte-Carlo episode count.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GridworldArgs {
    /// Grid config JSON file.
    #[arg(long)]
    config: String,
    /// Output model JSON file.
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    mdp: String,
    #[arg(long)]
    formula: String,
    /// Output CSV file (`col,row,value`).
    #[arg(long)]
    out: String,
    /// Evaluate this stored policy instead of planning.
    #[arg(long)]
    policy: Option<String>,
    /// Plain formula whose satisfaction probability is reported per cell
    /// (requires --policy).
    #[arg(long)]
    against: Option<String>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
    fn solver(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<FormulaError> for Failure {
    fn from(e: FormulaError) -> Self {
        match e {
            FormulaError::Syntax { .. }
            | FormulaError::EmptyTrace
            | FormulaError::MalformedAtom { .. } => Failure::usage(e.to_string()),
            _ => Failure::validation(e.to_string()),
        }
    }
}

impl From<LtlfError> for Failure {
    fn from(e: LtlfError) -> Self {
        Failure::validation(e.to_string())
    }
}

impl From<WdfaError> for Failure {
    fn from(e: WdfaError) -> Self {
        match e {
            WdfaError::Formula(inner) => inner.into(),
            WdfaError::Ltlf(inner) => inner.into(),
            WdfaError::AlphabetMismatch => Failure::validation(e.to_string()),
        }
    }
}

impl From<MdpError> for Failure {
    fn from(e: MdpError) -> Self {
        match e {
            MdpError::Json(_) => Failure::usage(e.to_string()),
            _ => Failure::validation(e.to_string()),
        }
    }
}

impl From<PlannerError> for Failure {
    fn from(e: PlannerError) -> Self {
        match e {
            PlannerError::AtomMismatch
            | PlannerError::AutomatonMismatch(_)
            | PlannerError::UnknownAction(_) => Failure::validation(e.to_string()),
            _ => Failure::solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(format!("io error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let format = cli.format;
    let result = match cli.command {
        Command::Compile(args) => cmd_compile(args, format),
        Command::Score(args) => cmd_score(args, format),
        Command::Plan(args) => cmd_plan(args, format),
        Command::Eval(args) => cmd_eval(args, format),
        Command::Gridworld(args) => cmd_gridworld(args, format),
        Command::Heatmap(args) => cmd_heatmap(args, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn parse_atom_list(text: &str) -> Result<Vec<String>, Failure> {
    let atoms: Vec<String> = text
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if atoms.is_empty() {
        return Err(Failure::usage("empty atom list"));
    }
    Ok(atoms)
}

fn compile_formula(text: &str, atoms: &[String]) -> Result<(Ast, Wdfa), Failure> {
    let ast = parse_formula(text)?;
    let automaton = wdfa::compile(&ast, atoms)?;
    Ok((ast, automaton))
}

fn emit(format: Format, fields: &[(&str, serde_json::Value)]) {
    match format {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = fields
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect();
            println!("{}", serde_json::Value::Object(map));
        }
        Format::Text => {
            let line = fields
                .iter()
                .map(|(k, v)| match v {
                    serde_json::Value::String(s) => format!("{k}={s}"),
                    other => format!("{k}={other}"),
                })
                .collect::<Vec<_>>()
                .join(" ");
            println!("{line}");
        }
    }
}

fn cmd_compile(args: CompileArgs, format: Format) -> Result<(), Failure> {
    let atoms = parse_atom_list(&args.atoms)?;
    let (_, automaton) = compile_formula(&args.formula, &atoms)?;
    if !automaton.is_satisfiable() {
        eprintln!("warning: empty preference language");
    }
    if let Some(path) = &args.dot {
        fs::write(path, automaton.export_dot())?;
    }
    if let Some(path) = &args.json {
        fs::write(path, serde_json::to_string_pretty(&automaton.to_json()).unwrap())?;
    }
    emit(
        format,
        &[
            ("states", automaton.n_states.into()),
            ("opt", automaton.opt.into()),
            ("max_weight", automaton.max_weight().into()),
        ],
    );
    Ok(())
}

fn cmd_score(args: ScoreArgs, format: Format) -> Result<(), Failure> {
    let atoms = parse_atom_list(&args.atoms)?;
    let (ast, automaton) = compile_formula(&args.formula, &atoms)?;
    let trace = parse_trace(&args.trace)?;
    let opt = optionality(&ast);

    let oracle_degree = satisfaction_degree_oracle(&trace, &ast)?;
    let wdfa_degree = automaton.degree(&trace)?;
    if oracle_degree != wdfa_degree {
        return Err(Failure::solver(format!(
            "automaton degree {wdfa_degree} disagrees with the semantic oracle {oracle_degree}"
        )));
    }
    let score = dissatisfaction_score(oracle_degree, opt)?;
    let decimal = *score.numer() as f64 / *score.denom() as f64;
    let fraction = if *score.denom() == 1 {
        format!("{}", score.numer())
    } else {
        format!("{}/{}", score.numer(), score.denom())
    };
    emit(
        format,
        &[
            ("degree", oracle_degree.to_string().into()),
            ("score", fraction.into()),
            ("decimal", decimal.into()),
        ],
    );
    Ok(())
}

struct PlanOutcome {
    product: ProductMdp,
    values: Vec<f64>,
    policy: Policy,
    iterations: usize,
}

fn solve(m: &LabeledMdp, formula: &str, tol: f64) -> Result<PlanOutcome, Failure> {
    let (_, automaton) = compile_formula(formula, &m.atoms)?;
    if !automaton.is_satisfiable() {
        eprintln!("warning: empty preference language");
    }
    let product = planner::product(m, &automaton)?;
    let (values, iterations) =
        planner::value_iteration(&product, tol, planner::DEFAULT_ITERATION_CAP)?;
    let policy = planner::extract_policy(&product, &values);
    Ok(PlanOutcome {
        product,
        values,
        policy,
        iterations,
    })
}

fn load_model(path: &str) -> Result<LabeledMdp, Failure> {
    let text = fs::read_to_string(path)?;
    let m = mdp::load_mdp(&text)?;
    let diagnostics = m.validate();
    if !diagnostics.is_empty() {
        return Err(Failure::validation(diagnostics.join("; ")));
    }
    Ok(m)
}

fn cmd_plan(args: PlanArgs, format: Format) -> Result<(), Failure> {
    let start = Instant::now();
    let m = load_model(&args.mdp)?;
    let outcome = solve(&m, &args.formula, args.tol)?;
    let j0 = outcome.values[outcome.product.initial];
    let d = planner::expected_dissatisfaction(j0, outcome.product.opt)?;

    if let Some(path) = &args.out_policy {
        let doc = planner::policy_to_doc(&m, &outcome.product, &outcome.policy, &args.formula, j0);
        fs::write(path, serde_json::to_string_pretty(&doc).unwrap())?;
    }
    if let Some(path) = &args.out_values {
        let mut csv = String::from("state,automaton_state,value\n");
        for (v, &(s, q)) in outcome.product.states.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{}", m.states[s], q, outcome.values[v]);
        }
        fs::write(path, csv)?;
    }
    emit(
        format,
        &[
            ("value_at_initial", j0.into()),
            ("dissatisfaction", d.into()),
            ("opt", outcome.product.opt.into()),
            ("product_states", outcome.product.n_states().into()),
            ("iterations", outcome.iterations.into()),
            ("wall_time_s", start.elapsed().as_secs_f64().into()),
        ],
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs, format: Format) -> Result<(), Failure> {
    let m = load_model(&args.mdp)?;
    let (_, automaton) = compile_formula(&args.formula, &m.atoms)?;
    let product = planner::product(&m, &automaton)?;
    let doc: planner::PolicyDoc = serde_json::from_str(&fs::read_to_string(&args.policy)?)
        .map_err(|e| Failure::usage(format!("invalid policy document: {e}")))?;
    let policy = planner::policy_from_doc(&m, &product, &doc)?;

    let values = planner::policy_evaluate(&product, &policy)?;
    let j0 = values[product.initial];
    let d = planner::expected_dissatisfaction(j0, product.opt)?;
    let mut fields: Vec<(&str, serde_json::Value)> = vec![
        ("value_at_initial", j0.into()),
        ("dissatisfaction", d.into()),
        ("opt", product.opt.into()),
    ];

    let mut prob_lines = Vec::new();
    if let Some(against) = &args.against {
        let psi = parse_formula(against)?;
        if !psi.is_plain() {
            return Err(Failure::validation(
                "--against requires a plain temporal formula",
            ));
        }
        let dfa = ltlf::minimize(&ltlf::build_dfa(&psi, &m.atoms)?);
        let probs = planner::satisfaction_probability(&m, &product, &policy, &dfa)?;
        for (s, p) in probs.iter().enumerate() {
            prob_lines.push(serde_json::json!({"state": m.states[s], "probability": p}));
        }
        fields.push(("probability_at_initial", probs[m.initial].into()));
    }

    if let Some(episodes) = args.mc {
        let report = planner::simulate(
            &product,
            &automaton,
            &policy,
            episodes,
            args.seed,
            planner::DEFAULT_STEP_CAP,
        )?;
        fields.push(("mc_mean", report.mean.into()));
        fields.push(("mc_std_err", report.std_err.into()));
        fields.push(("mc_episodes", report.episodes.into()));
    }

    match format {
        Format::Json => {
            let mut map: serde_json::Map<String, serde_json::Value> = fields
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect();
            if !prob_lines.is_empty() {
                map.insert("satisfaction_probabilities".into(), prob_lines.into());
            }
            println!("{}", serde_json::Value::Object(map));
        }
        Format::Text => {
            emit(Format::Text, &fields);
            for line in &prob_lines {
                println!(
                    "prob {} {}",
                    line["state"].as_str().unwrap(),
                    line["probability"]
                );
            }
        }
    }
    Ok(())
}

fn cmd_gridworld(args: GridworldArgs, format: Format) -> Result<(), Failure> {
    let config = mdp::GridConfig::from_json(&fs::read_to_string(&args.config)?)?;
    let m = mdp::gridworld(&config)?;
    fs::write(&args.out, mdp::save_mdp(&m))?;
    emit(
        format,
        &[
            ("cells", (m.n_ordinary()).into()),
            ("holes", config.holes.len().into()),
            ("regions", config.regions.len().into()),
        ],
    );
    Ok(())
}

/// Cells of a grid model with the holes (absorbing cells) split out.
fn grid_cells(m: &LabeledMdp) -> Result<Vec<(u32, u32, usize, bool)>, Failure> {
    let mut out = Vec::new();
    for s in 0..m.n_ordinary() {
        let (col, row) = mdp::parse_cell_name(&m.states[s])
            .ok_or_else(|| Failure::validation("model is not a generated gridworld"))?;
        let mut is_hole = m.available(s).count() > 0;
        for a in m.available(s) {
            if m.transitions[s][a] != vec![(s, 1.0)] {
                is_hole = false;
            }
        }
        out.push((col, row, s, is_hole));
    }
    Ok(out)
}

fn cmd_heatmap(args: HeatmapArgs, format: Format) -> Result<(), Failure> {
    let m = load_model(&args.mdp)?;
    let cells = grid_cells(&m)?;
    let mut csv = String::from("col,row,value\n");
    let mut rows = 0usize;

    if let Some(policy_path) = &args.policy {
        let against = args.against.as_ref().ok_or_else(|| {
            Failure::usage("--policy requires --against to choose the reported quantity")
        })?;
        let (_, automaton) = compile_formula(&args.formula, &m.atoms)?;
        let product = planner::product(&m, &automaton)?;
        let doc: planner::PolicyDoc = serde_json::from_str(&fs::read_to_string(policy_path)?)
            .map_err(|e| Failure::usage(format!("invalid policy document: {e}")))?;
        let policy = planner::policy_from_doc(&m, &product, &doc)?;
        let psi = parse_formula(against)?;
        if !psi.is_plain() {
            return Err(Failure::validation(
                "--against requires a plain temporal formula",
            ));
        }
        let dfa = ltlf::minimize(&ltlf::build_dfa(&psi, &m.atoms)?);
        let probs = planner::satisfaction_probability(&m, &product, &policy, &dfa)?;
        for &(col, row, s, is_hole) in &cells {
            if is_hole {
                continue;
            }
            let _ = writeln!(csv, "{col},{row},{}", probs[s]);
            rows += 1;
        }
    } else {
        let outcome = solve(&m, &args.formula, planner::DEFAULT_TOL)?;
        for &(col, row, s, is_hole) in &cells {
            if is_hole {
                continue;
            }
            let _ = writeln!(csv, "{col},{row},{}", outcome.values[outcome.product.entry[s]]);
            rows += 1;
        }
    }

    fs::write(&args.out, csv)?;
    emit(format, &[("rows", rows.into()), ("out", args.out.clone().into())]);
    Ok(())
}
