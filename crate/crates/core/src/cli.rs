//! Command-line front end.
//!
//! Exit codes: 0 success, 1 certificate failure or subsidy violation, 2 input
//! or usage error, 3 oracle cap exceeded.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::Signed;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::graph::to_dot;
use crate::model::{
    compute_subsidies, format_decimal, format_rational, parse_instance, parse_rational, serialize_instance,
    wprop_share, Instance, IntegralAllocation, Kind, ModelError, Rational,
};
use crate::oracle::{brute_force_rounding, gen_random_instance, CostDist, GenParams, OracleError, WeightDist, DEFAULT_CAP};
use crate::round::{allocate, Method, PipelineError};

pub const THREADS_ENV: &str = "SUBSIDY_FAIRDIV_THREADS";

const EXIT_OK: i32 = 0;
const EXIT_FAILED: i32 = 1;
const EXIT_INPUT: i32 = 2;
const EXIT_CAP: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "subsidy-fairdiv", version, about = "Weighted proportional allocation with bounded subsidy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute an allocation and subsidies for an instance.
    Allocate(AllocateArgs),
    /// Check an allocation file against an instance.
    Verify(VerifyArgs),
    /// Exhaustively search for the best rounding and compare with the pipeline.
    Oracle(OracleArgs),
    /// Write a seeded random instance.
    Gen(GenArgs),
    /// Run the pipeline on seeded random instances and print CSV rows.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct AllocateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Write the allocation here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    certificate: Option<PathBuf>,
    /// Graphviz file for the item-sharing graph.
    #[arg(long)]
    emit_graph: Option<PathBuf>,
    /// Round every shared item to its largest holder instead.
    #[arg(long)]
    baseline: bool,
    /// Also render subsidies as decimals with this many digits.
    #[arg(long)]
    decimal: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    allocation: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    input: PathBuf,
    /// Largest number of roundings to enumerate.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Chores,
    Goods,
}

impl From<KindArg> for Kind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Chores => Kind::Chores,
            KindArg::Goods => Kind::Goods,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DistArg {
    Uniform,
    Correlated,
    Ido,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightArg {
    Equal,
    Integer,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    agents: usize,
    #[arg(long)]
    items: usize,
    #[arg(long, value_enum, default_value = "chores")]
    kind: KindArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "uniform")]
    dist: DistArg,
    /// Costs are multiples of 1/denominator.
    #[arg(long, default_value_t = 10)]
    denominator: u32,
    #[arg(long, value_enum, default_value = "equal")]
    weights: WeightArg,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 2)]
    min_agents: usize,
    #[arg(long, default_value_t = 10)]
    max_agents: usize,
    /// Instances per agent count.
    #[arg(long, default_value_t = 10)]
    per_size: u64,
    /// Items per agent.
    #[arg(long, default_value_t = 2)]
    items_per_agent: usize,
    #[arg(long, value_enum, default_value = "chores")]
    kind: KindArg,
    #[arg(long, value_enum, default_value = "uniform")]
    dist: DistArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn gen_params(
    n: usize,
    m: usize,
    kind: KindArg,
    dist: DistArg,
    denominator: u32,
    weights: WeightArg,
    seed: u64,
) -> GenParams {
    GenParams {
        n,
        m,
        kind: kind.into(),
        weights: match weights {
            WeightArg::Equal => WeightDist::Equal,
            WeightArg::Integer => WeightDist::Integer,
        },
        costs: match dist {
            DistArg::Uniform => CostDist::Uniform { denominator },
            DistArg::Correlated => CostDist::Correlated { denominator },
            DistArg::Ido => CostDist::Ido { denominator },
        },
        seed,
    }
}

/// A failed command: exit code plus message for stderr.
struct Failure(i32, String);

type CmdResult = Result<i32, Failure>;

fn input_error(msg: impl Into<String>) -> Failure {
    Failure(EXIT_INPUT, msg.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    parse_instance(&read(path)?).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, target: Option<&Path>, text: &str) -> Result<(), Failure> {
    match target {
        Some(path) => write_file(path, text),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| input_error(format!("stdout: {e}"))),
    }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::Model(ModelError::Invalid(report)) => input_error(format!("invalid instance: {report}")),
        other => Failure(EXIT_FAILED, format!("internal error: {other}")),
    }
}

fn rationals(values: &[Rational]) -> Value {
    values.iter().map(|v| Value::String(format_rational(v))).collect()
}

fn decimals(values: &[Rational], digits: usize) -> Value {
    values.iter().map(|v| Value::String(format_decimal(v, digits))).collect()
}

fn pretty(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("plain JSON");
    text.push('\n');
    text
}

fn cmd_allocate(args: &AllocateArgs, out: &mut dyn Write) -> CmdResult {
    let inst = load_instance(&args.input)?;
    let method = if args.baseline { Method::Baseline } else { Method::TreeSplitting };
    let outcome = allocate(&inst, method).map_err(pipeline_failure)?;
    let cert = &outcome.certificate;
    let bundles: Vec<Vec<String>> = (0..inst.n())
        .map(|i| outcome.allocation.bundle(i).into_iter().map(|e| inst.item_name(e)).collect())
        .collect();
    let mut doc = json!({
        "kind": inst.kind().to_string(),
        "method": method.to_string(),
        "owner": outcome.allocation.owner,
        "bundles": bundles,
        "subsidies": rationals(&outcome.subsidies.per_agent),
        "total_subsidy": format_rational(&outcome.subsidies.total),
        "bound": format_rational(&cert.global_bound),
        "certificate_holds": cert.holds(),
    });
    if let Some(digits) = args.decimal {
        doc["subsidies_decimal"] = decimals(&outcome.subsidies.per_agent, digits);
        doc["total_subsidy_decimal"] = Value::String(format_decimal(&outcome.subsidies.total, digits));
    }
    emit(out, args.out.as_deref(), &pretty(&doc))?;
    if let Some(path) = &args.certificate {
        write_file(path, &pretty(&cert.to_json()))?;
    }
    if let Some(path) = &args.emit_graph {
        write_file(path, &to_dot(&outcome.graph, &inst))?;
    }
    let violations = cert.violations();
    if violations.is_empty() {
        Ok(EXIT_OK)
    } else {
        Err(Failure(EXIT_FAILED, format!("certificate failed: {}", violations.join("; "))))
    }
}

#[derive(Debug, Deserialize)]
struct AllocationFile {
    owner: Vec<Option<usize>>,
    #[serde(default)]
    subsidies: Option<Vec<String>>,
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> CmdResult {
    let inst = load_instance(&args.input)?;
    let text = read(&args.allocation)?;
    let file: AllocationFile = serde_json::from_str(&text)
        .map_err(|e| input_error(format!("{}: {e}", args.allocation.display())))?;
    if file.owner.len() != inst.m() {
        return Err(input_error(format!(
            "allocation lists {} items, instance has {}",
            file.owner.len(),
            inst.m()
        )));
    }
    let owner = file
        .owner
        .iter()
        .enumerate()
        .map(|(e, o)| o.ok_or_else(|| input_error(format!("item {} is unassigned", inst.item_name(e)))))
        .collect::<Result<Vec<_>, _>>()?;
    let alloc = IntegralAllocation::new(owner);
    let minimal = compute_subsidies(&inst, &alloc).map_err(|e| input_error(e.to_string()))?;
    let given = match &file.subsidies {
        None => minimal.per_agent.clone(),
        Some(list) if list.len() == inst.n() => list
            .iter()
            .map(|t| parse_rational(t).map_err(|e| input_error(format!("subsidy {t:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?,
        Some(list) => {
            return Err(input_error(format!(
                "allocation lists {} subsidies, instance has {} agents",
                list.len(),
                inst.n()
            )))
        }
    };
    let mut report = String::new();
    let mut violations = Vec::new();
    for (i, subsidy) in given.iter().enumerate() {
        let bundle = alloc.bundle_cost(&inst, i);
        let share = wprop_share(&inst, i).expect("agent in range");
        // Room left before the agent stops being proportional.
        let slack = match inst.kind() {
            Kind::Chores => &share - (&bundle - subsidy),
            Kind::Goods => (&bundle + subsidy) - &share,
        };
        report.push_str(&format!(
            "agent {}: bundle {} share {} subsidy {} slack {}\n",
            inst.agent_name(i),
            format_rational(&bundle),
            format_rational(&share),
            format_rational(subsidy),
            format_rational(&slack)
        ));
        if slack.is_negative() || subsidy.is_negative() {
            violations.push(format!(
                "agent {} needs subsidy {}, given {}",
                inst.agent_name(i),
                format_rational(&minimal.per_agent[i]),
                format_rational(subsidy)
            ));
        }
    }
    let total: Rational = given.iter().sum();
    report.push_str(&format!("total subsidy {}\n", format_rational(&total)));
    for v in &violations {
        report.push_str(&format!("violation: {v}\n"));
    }
    emit(out, None, &report)?;
    Ok(if violations.is_empty() { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_oracle(args: &OracleArgs, out: &mut dyn Write) -> CmdResult {
    let inst = load_instance(&args.input)?;
    let outcome = allocate(&inst, Method::TreeSplitting).map_err(pipeline_failure)?;
    let best = match brute_force_rounding(&outcome.reduced, &outcome.fractional, args.cap) {
        Ok(best) => best,
        Err(e @ OracleError::CapExceeded { .. }) => return Err(Failure(EXIT_CAP, e.to_string())),
        Err(e) => return Err(Failure(EXIT_FAILED, format!("internal error: {e}"))),
    };
    let pipeline = &outcome.certificate.ido_subsidy;
    let report = format!(
        "roundings {}\noptimum {}\npipeline {}\ngap {}\n",
        best.combinations,
        format_rational(&best.subsidies.total),
        format_rational(pipeline),
        format_rational(&(pipeline - &best.subsidies.total))
    );
    emit(out, None, &report)?;
    Ok(EXIT_OK)
}

fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> CmdResult {
    let params = gen_params(
        args.agents,
        args.items,
        args.kind,
        args.dist,
        args.denominator,
        args.weights,
        args.seed,
    );
    let inst = gen_random_instance(&params).map_err(|e| input_error(e.to_string()))?;
    emit(out, args.out.as_deref(), &serialize_instance(&inst))?;
    Ok(EXIT_OK)
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> CmdResult {
    if args.min_agents == 0 || args.min_agents > args.max_agents {
        return Err(input_error("need 1 <= min-agents <= max-agents"));
    }
    let mut csv = String::from("n,seed,subsidy,bound,baseline\n");
    let mut failed = false;
    for n in args.min_agents..=args.max_agents {
        for k in 0..args.per_size {
            let seed = args.seed.wrapping_add(k);
            let params = gen_params(n, n * args.items_per_agent, args.kind, args.dist, 10, WeightArg::Integer, seed);
            let inst = gen_random_instance(&params).map_err(|e| input_error(e.to_string()))?;
            let main = allocate(&inst, Method::TreeSplitting).map_err(pipeline_failure)?;
            let base = allocate(&inst, Method::Baseline).map_err(pipeline_failure)?;
            failed |= !main.certificate.holds();
            csv.push_str(&format!(
                "{n},{seed},{},{},{}\n",
                format_rational(&main.subsidies.total),
                format_rational(&main.certificate.global_bound),
                format_rational(&base.subsidies.total)
            ));
        }
    }
    emit(out, None, &csv)?;
    if failed {
        Err(Failure(EXIT_FAILED, "certificate failed on at least one instance".into()))
    } else {
        Ok(EXIT_OK)
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> CmdResult {
    match &cli.command {
        Command::Allocate(a) => cmd_allocate(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Oracle(a) => cmd_oracle(a, out),
        Command::Gen(a) => cmd_gen(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
    // Output is buffered so the command can run inside a dedicated pool.
    let mut buffer = Vec::new();
    let result = match threads.and_then(|t| rayon::ThreadPoolBuilder::new().num_threads(t).build().ok()) {
        Some(pool) => pool.install(|| dispatch(&cli, &mut buffer)),
        None => dispatch(&cli, &mut buffer),
    };
    if out.write_all(&buffer).is_err() {
        return EXIT_INPUT;
    }
    match result {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("subsidy-fairdiv").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    fn fixture(name: &str) -> String {
        format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
    }

    fn parse_q(v: &Value) -> Rational {
        parse_rational(v.as_str().unwrap()).unwrap()
    }

    #[test]
    fn allocate_six_agents() {
        let (code, out, _) = run_args(&["allocate", "--input", &fixture("istar.json")]);
        assert_eq!(code, EXIT_OK);
        let doc: Value = serde_json::from_str(&out).unwrap();
        assert!(parse_q(&doc["total_subsidy"]) <= parse_rational("11/6").unwrap());
        assert_eq!(doc["bound"], "11/6");
        assert_eq!(doc["certificate_holds"], true);
        assert_eq!(doc["owner"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn allocate_single_agent() {
        let (code, out, _) = run_args(&["allocate", "--input", &fixture("single_agent.json")]);
        assert_eq!(code, EXIT_OK);
        let doc: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(doc["subsidies"], json!(["0"]));
        assert_eq!(doc["bundles"], json!([["e1", "e2", "e3"]]));
    }

    #[test]
    fn malformed_input_points_at_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\n  \"kind\": \"chores\",\n  \"weights\": [\"1\"],\n  \"costs\": [[\"x\"]]\n}\n").unwrap();
        let (code, _, err) = run_args(&["allocate", "--input", path.to_str().unwrap()]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("line 4"), "{err}");

        fs::write(&path, r#"{"kind": "chores", "weights": ["1/2", "1/3"], "costs": [["1"], ["1"]]}"#).unwrap();
        let (code, _, err) = run_args(&["allocate", "--input", path.to_str().unwrap()]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("invalid instance"), "{err}");
    }

    #[test]
    fn verify_round_trip_and_violations() {
        let dir = tempfile::tempdir().unwrap();
        let alloc = dir.path().join("alloc.json");
        let input = fixture("istar.json");
        let (code, _, _) = run_args(&["allocate", "--input", &input, "--out", alloc.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK);
        let (code, out, _) = run_args(&["verify", "--input", &input, "--allocation", alloc.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("total subsidy"));
        assert!(!out.contains("violation"));

        // Agent 1 holds e1 alone (0.7 against a share of 2/5) and needs 3/10.
        let edited = r#"{"owner": [0, 3, 5, 1, 4, 5], "subsidies": ["1/10", "2/5", "0", "0", "0", "0"]}"#;
        fs::write(&alloc, edited).unwrap();
        let (code, out, _) = run_args(&["verify", "--input", &input, "--allocation", alloc.to_str().unwrap()]);
        assert_eq!(code, EXIT_FAILED);
        assert!(out.contains("violation: agent 1 needs subsidy 3/10, given 1/10"), "{out}");

        fs::write(&alloc, r#"{"owner": [0, 3, null, 1, 4, 5]}"#).unwrap();
        let (code, _, err) = run_args(&["verify", "--input", &input, "--allocation", alloc.to_str().unwrap()]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("e3 is unassigned"));

        fs::write(&alloc, r#"{"owner": [0, 3]}"#).unwrap();
        let (code, _, _) = run_args(&["verify", "--input", &input, "--allocation", alloc.to_str().unwrap()]);
        assert_eq!(code, EXIT_INPUT);
    }

    #[test]
    fn oracle_against_pipeline() {
        let input = fixture("istar.json");
        let (code, out, _) = run_args(&["oracle", "--input", &input]);
        assert_eq!(code, EXIT_OK);
        let field = |name: &str| {
            let line = out.lines().find(|l| l.starts_with(name)).unwrap();
            parse_rational(line.split_whitespace().nth(1).unwrap()).unwrap()
        };
        assert!(field("optimum") <= field("pipeline"));
        assert!(!field("gap").is_negative());
        let (code, _, err) = run_args(&["oracle", "--input", &input, "--cap", "2"]);
        assert_eq!(code, EXIT_CAP);
        assert!(err.contains("cap"), "{err}");
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_args(&[]).0, EXIT_INPUT);
        assert_eq!(run_args(&["allocate"]).0, EXIT_INPUT);
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("allocate"));
    }

    #[test]
    fn gen_to_stdout_is_deterministic() {
        let a = run_args(&["gen", "--agents", "1", "--items", "3", "--seed", "7"]);
        let b = run_args(&["gen", "--agents", "1", "--items", "3", "--seed", "7"]);
        assert_eq!(a.0, EXIT_OK);
        assert_eq!(a.1, b.1);
        let inst = parse_instance(&a.1).unwrap();
        assert_eq!((inst.n(), inst.m()), (1, 3));
        let (code, _, err) = run_args(&["gen", "--agents", "0", "--items", "3"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("agent"));
    }

    #[test]
    fn bench_rows() {
        let (code, out, _) = run_args(&["bench", "--min-agents", "2", "--max-agents", "3", "--per-size", "2"]);
        assert_eq!(code, EXIT_OK);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "n,seed,subsidy,bound,baseline");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("2,0,"));
    }
}
