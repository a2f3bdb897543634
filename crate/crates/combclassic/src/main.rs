//! combclassic: decide classicality of multi-time quantum processes and
//! quantify non-classicality via the distinguishing-game LP.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use combclassic::json as schema;
use combclassic::scenario::{self, Scenario, ScenarioParams};
use combclassic::{parse_instrument_spec, write_atomic};
use combclassic_core::classicality::{
    kolmogorov_check_comb, markov_check, ncgd_check, ndgd_check, zero_discord_check,
};
use combclassic_core::comb::comb_from_dilation;
use combclassic_core::instrument::projective_instrument;
use combclassic_core::measure::{nonclassicality_measure_full, upper_bound_two_time, MeasureError};
use combclassic_core::models::{bloch_grid, sweep_comb, TauE};

#[derive(Parser)]
#[command(name = "combclassic", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a joint outcome table for a comb and instruments (CSV).
    Probe(ProbeArgs),
    /// Run a classicality check and emit a report JSON.
    Check(CheckArgs),
    /// Solve the non-classicality LP for a comb.
    Measure(MeasureArgs),
    /// Build a named scenario; optionally check it.
    Scenario(ScenarioArgs),
    /// Sweep Bloch POVMs over the genuinely quantum process (CSV).
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ProbeArgs {
    /// Comb JSON path, dilation JSON path, or scenario name.
    input: String,
    /// Instrument spec per slot, repeatable: "projective", "dephasing",
    /// "identity", "bloch:r0,rx,ry,rz", or an instrument JSON path. A
    /// single spec is broadcast to every slot.
    #[arg(long, default_values_t = [String::from("projective")])]
    instruments: Vec<String>,
    /// Output CSV path (stdout if omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct CheckArgs {
    /// Input document or scenario name.
    input: String,
    #[arg(long, value_enum, default_value_t = CheckVerb::Kolmogorov)]
    verb: CheckVerb,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Output report path (stdout if omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CheckVerb {
    Kolmogorov,
    Markov,
    Ncgd,
    Ndgd,
    Discord,
}

#[derive(Args)]
struct MeasureArgs {
    /// Comb JSON path, dilation JSON path, or scenario name.
    input: String,
    /// Also solve the dual and report the gap.
    #[arg(long)]
    dual: bool,
    /// Also report the two-time upper bound (K = 2 only).
    #[arg(long)]
    upper_bound: bool,
    /// Testing-sequence enumeration cap (overridden by COMBCLASSIC_CAP).
    #[arg(long)]
    cap: Option<usize>,
    /// Simplex pivot cap.
    #[arg(long, default_value_t = combclassic_core::lp::DEFAULT_PIVOT_CAP)]
    pivot_cap: usize,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct ScenarioArgs {
    /// example1 | appendix-d | appendix-g | genuinely-quantum
    name: String,
    /// Run the scenario's checks and print a report.
    #[arg(long)]
    check: bool,
    /// Write the comb JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the report JSON here (stdout otherwise).
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 6)]
    r0_steps: usize,
    #[arg(long, default_value_t = 10)]
    dir_steps: usize,
    #[arg(long, default_value_t = 2)]
    radius_steps: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = TauEArg::Mixed)]
    tau_e: TauEArg,
    /// Output CSV path (stdout if omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Optional summary report JSON path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Lorentzian width for example1.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Initial sigma_x population weight for example1.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Slot times, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    times: Vec<f64>,
    /// Preparation time for example1 (defaults to the first slot time).
    #[arg(long)]
    t0: Option<f64>,
    /// Environment grid points for the example1 joint-state discord
    /// check.
    #[arg(long, default_value_t = 2048)]
    grid: usize,
    /// Environment output state for genuinely-quantum.
    #[arg(long, value_enum, default_value_t = TauEArg::Mixed)]
    tau_e: TauEArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TauEArg {
    /// I/2
    Mixed,
    /// |0><0|
    Ground,
}

impl From<TauEArg> for TauE {
    fn from(t: TauEArg) -> TauE {
        match t {
            TauEArg::Mixed => TauE::MaximallyMixed,
            TauEArg::Ground => TauE::Ground,
        }
    }
}

impl ParamArgs {
    fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams {
            gamma: self.gamma,
            alpha: self.alpha,
            times: self.times.clone(),
            t0: self.t0,
            tau_e: self.tau_e.into(),
        }
    }
}

// ---------------------------------------------------------------------

enum CliError {
    /// exit 2: malformed comb/instrument/schema
    Validation(String),
    /// exit 3: LP solver failure
    Solver(String),
    /// exit 1: IO and everything else
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Solver(m) | CliError::Other(m) => m,
        }
    }
}

impl From<schema::SchemaError> for CliError {
    fn from(e: schema::SchemaError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::Solver(_) => CliError::Solver(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn read_document(path: &str) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Other(format!("cannot read {:?}: {}", path, e)))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: invalid JSON: {}", path, e)))
}

/// Resolve an input argument: scenario name or document path.
fn load_scenario_or_comb(input: &str, params: &ScenarioParams) -> Result<Scenario, CliError> {
    if scenario::SCENARIO_NAMES.contains(&input) {
        return scenario::build(input, params).map_err(CliError::Validation);
    }
    if !Path::new(input).exists() {
        return Err(CliError::Other(format!(
            "{:?} is neither a file nor a scenario name ({})",
            input,
            scenario::SCENARIO_NAMES.join(", ")
        )));
    }
    let doc = read_document(input)?;
    match schema::document_kind(&doc)?.as_str() {
        "comb" => Ok(Scenario::CombOnly(schema::comb_from_json(&doc)?)),
        "dilation" => {
            let d = schema::dilation_from_json(&doc)?;
            let c = comb_from_dilation(&d)
                .map_err(|e| CliError::Validation(format!("invalid dilation: {}", e)))?;
            Ok(Scenario::WithDilation(c, d))
        }
        other => Err(CliError::Validation(format!(
            "expected a comb or dilation document, found kind {:?}",
            other
        ))),
    }
}

fn emit(output: &Option<PathBuf>, contents: &str) -> Result<(), CliError> {
    match output {
        Some(path) => write_atomic(path, contents)
            .map_err(|e| CliError::Other(format!("cannot write {:?}: {}", path, e))),
        None => {
            if contents.ends_with('\n') {
                print!("{}", contents);
            } else {
                println!("{}", contents);
            }
            Ok(())
        }
    }
}

fn cmd_probe(args: &ProbeArgs) -> Result<(), CliError> {
    let scenario = load_scenario_or_comb(&args.input, &args.params.scenario_params())?;
    let comb = scenario.comb();
    let k = comb.slots();
    let specs: Vec<&str> = args.instruments.iter().map(|s| s.as_str()).collect();
    let specs: Vec<&str> = if specs.len() == 1 { vec![specs[0]; k] } else { specs };
    if specs.len() != k {
        return Err(CliError::Validation(format!(
            "{} instruments supplied for {} slots",
            specs.len(),
            k
        )));
    }
    let instruments: Vec<_> = specs
        .iter()
        .map(|s| parse_instrument_spec(s, comb.system_dim).map_err(CliError::Validation))
        .collect::<Result<_, _>>()?;
    let table = comb
        .joint_table(&instruments)
        .map_err(|e| CliError::Validation(format!("probe failed: {}", e)))?;
    let mut csv = String::new();
    for s in &table.slots {
        csv.push_str(&format!("x{},", s));
    }
    csv.push_str("probability\n");
    for tuple in table.tuples() {
        for x in &tuple {
            csv.push_str(&format!("{},", x));
        }
        csv.push_str(&format!("{}\n", table.get(&tuple)));
    }
    emit(&args.output, &csv)
}

fn cmd_check(args: &CheckArgs) -> Result<(), CliError> {
    let tol = args.tol;
    if tol <= 0.0 {
        return Err(CliError::Validation("tolerance must be positive".to_string()));
    }
    let report: Value = match args.verb {
        CheckVerb::Kolmogorov => {
            let scenario = load_scenario_or_comb(&args.input, &args.params.scenario_params())?;
            let report = kolmogorov_check_comb(scenario.comb(), tol)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            serde_json::to_value(schema::ClassicalityReportJson::from(&report)).unwrap()
        }
        CheckVerb::Markov => {
            let scenario = load_scenario_or_comb(&args.input, &args.params.scenario_params())?;
            let comb = scenario.comb();
            let inst: Vec<_> =
                (0..comb.slots()).map(|_| projective_instrument(comb.system_dim)).collect();
            let table = comb
                .joint_table(&inst)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let rep = markov_check(&table, tol);
            json!({
                "pass": rep.markovian,
                "worst_violation": rep.worst_violation,
                "skipped_conditionals": rep.skipped,
                "tol": tol,
            })
        }
        CheckVerb::Ncgd => {
            let doc = read_document(&args.input)?;
            let (maps, _) = schema::propagators_from_json(&doc)?;
            let pass =
                ncgd_check(&maps, tol).map_err(|e| CliError::Validation(e.to_string()))?;
            json!({ "pass": pass, "tol": tol })
        }
        CheckVerb::Ndgd => {
            let scenario = load_scenario_or_comb(&args.input, &args.params.scenario_params())?;
            let Some(dilation) = scenario.dilation() else {
                return Err(CliError::Validation(
                    "ndgd needs a dilation document or a dilation-backed scenario".to_string(),
                ));
            };
            let pass =
                ndgd_check(dilation, tol).map_err(|e| CliError::Validation(e.to_string()))?;
            json!({ "pass": pass, "tol": tol })
        }
        CheckVerb::Discord => {
            let doc = read_document(&args.input)?;
            let (state, ds, de) = schema::state_from_json(&doc)?;
            let pass = zero_discord_check(&state, (ds, de), tol)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            json!({ "pass": pass, "tol": tol })
        }
    };
    emit(&args.output, &schema::to_pretty(&report))
}

fn lp_cap(flag: Option<usize>) -> usize {
    if let Ok(s) = std::env::var("COMBCLASSIC_CAP") {
        if let Ok(v) = s.parse::<usize>() {
            return v;
        }
    }
    flag.unwrap_or(combclassic_core::measure::DEFAULT_SEQUENCE_CAP)
}

fn cmd_measure(args: &MeasureArgs) -> Result<(), CliError> {
    let scenario = load_scenario_or_comb(&args.input, &args.params.scenario_params())?;
    let comb = scenario.comb();
    let cap = lp_cap(args.cap);
    let pivot_cap = args.pivot_cap;
    let res = nonclassicality_measure_full(comb, cap, args.dual, pivot_cap)?;
    let bound = if args.upper_bound {
        Some(upper_bound_two_time(comb)?)
    } else {
        None
    };
    let report = schema::MeasureReportJson {
        measure: res.measure,
        bob_win_probability: res.bob_win_probability,
        primal: res.primal_value,
        dual: res.dual_value,
        gap: res.dual_value.map(|d| (res.primal_value - d).abs()),
        bound,
        cap,
        pivot_cap,
    };
    let value = serde_json::to_value(&report).unwrap();
    emit(&args.output, &schema::to_pretty(&value))
}

fn cmd_scenario(args: &ScenarioArgs) -> Result<(), CliError> {
    let params = args.params.scenario_params();
    let scenario = scenario::build(&args.name, &params).map_err(CliError::Validation)?;
    let comb_json = schema::comb_to_json(scenario.comb());
    if let Some(path) = &args.output {
        write_atomic(path, &schema::to_pretty(&comb_json))
            .map_err(|e| CliError::Other(format!("cannot write {:?}: {}", path, e)))?;
    }
    if args.check {
        let kolmo = kolmogorov_check_comb(scenario.comb(), 1e-9)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let mut report = json!({
            "scenario": args.name,
            "pass": kolmo.pass,
            "classical": kolmo.pass,
            "worst_violation": kolmo.worst_violation,
            "tol": 1e-9,
        });
        if let Some(d) = scenario.dilation() {
            let ndgd =
                ndgd_check(d, 1e-9).map_err(|e| CliError::Validation(e.to_string()))?;
            report["ndgd"] = json!(ndgd);
        }
        if args.name == "example1" {
            // system-environment discord of the free state at the last
            // probing time, on the requested grid
            use combclassic_core::models::{example1_joint_state, lorentzian_kernel, GridSpec};
            let kernel = lorentzian_kernel(args.params.gamma)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let t = params.times.last().copied().unwrap_or(0.0)
                - params.t0.unwrap_or_else(|| params.times.first().copied().unwrap_or(0.0));
            let spec = GridSpec { points: args.params.grid, cutoff: 0.0 };
            let state = example1_joint_state(&kernel, t, args.params.alpha, &spec)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let n = state.dim() / 2;
            let discord_free = zero_discord_check(&state, (2, n), 1e-10)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            report["joint_state_zero_discord"] = json!(discord_free);
            report["grid_points"] = json!(args.params.grid);
        }
        emit(&args.report, &schema::to_pretty(&report))?;
    } else if args.output.is_none() {
        println!("{}", schema::to_pretty(&comb_json));
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let dilation = combclassic_core::models::genuinely_quantum_process(args.tau_e.into());
    let comb = comb_from_dilation(&dilation)
        .map_err(|e| CliError::Validation(format!("internal scenario invalid: {}", e)))?;
    let grid = bloch_grid(args.r0_steps, args.dir_steps, args.radius_steps);
    let report = sweep_comb(&comb, &grid, args.tol)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let mut csv = String::from("r0,rx,ry,rz,deviation\n");
    for p in &report.points {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            p.r0, p.r[0], p.r[1], p.r[2], p.deviation
        ));
    }
    emit(&args.output, &csv)?;
    if let Some(path) = &args.report {
        let summary = json!({
            "points": report.points.len(),
            "fitted_quadratic_coefficient": report.fitted_quadratic_coefficient,
            "max_r_with_zero_deviation": report.max_r_with_zero_deviation,
            "tol": report.tol,
        });
        write_atomic(path, &schema::to_pretty(&summary))
            .map_err(|e| CliError::Other(format!("cannot write {:?}: {}", path, e)))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Probe(a) => cmd_probe(a),
        Command::Check(a) => cmd_check(a),
        Command::Measure(a) => cmd_measure(a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
