//! `nnse` command-line driver.
//!
//! Every command prints one JSON document on stdout with a deterministic
//! `result` and a `metadata` object holding timings, and a short summary on
//! stderr.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success (attack: found or proven robust) |
//! | 1 | internal error |
//! | 2 | usage or input error (bad flags, missing or malformed files) |
//! | 3 | attack exhausted its budget without an answer |
//! | 4 | golden parity check failed |

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use nnse::analyses::{attack, coverage, AttackResult, AttackSpec, Goal};
use nnse::config::{AnalysisConfig, SolverChoice};
use nnse::exec::{evaluate_dataset, forward, predict_batch};
use nnse::golden::{check_parity, ExportManifest, Golden};
use nnse::model::{load_model, read_csv_dir, read_labels, Model, Tensor};
use nnse::solver::smtlib::render_script;
use nnse::symexec::{
    decision_constraints_for, explore_with, symbolic_forward_concolic, ParamPosition, PathReport, SymbolicMarking,
};
use nnse::Error;

const EXIT_INTERNAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_PARITY: u8 = 4;

/// Tolerance on logits when checking golden parity.
const PARITY_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "nnse",
    version,
    about = "Concrete and symbolic execution of feed-forward networks"
)]
struct Cli {
    /// JSON analysis config; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Log level (overrides NNSE_LOG and the config).
    #[arg(long, global = true, value_name = "LEVEL")]
    log: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the network on an input, a dataset, or a golden set.
    Run(RunArgs),
    /// Search for an input that changes the label.
    Attack(AttackArgs),
    /// Enumerate the feasible paths around an input.
    Explore(ExploreArgs),
    /// Neuron coverage of a dataset.
    Coverage(CoverageArgs),
    /// Write the concrete path constraint plus the negated decision as SMT-LIB.
    ExportSmt(ExportArgs),
}

#[derive(Args)]
struct ModelArg {
    /// Model directory (`model.json` plus parameter files).
    #[arg(long, value_name = "DIR")]
    model: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct RunSource {
    /// One input CSV.
    #[arg(long, value_name = "CSV")]
    input: Option<PathBuf>,
    /// Directory of input CSVs, read in file-name order.
    #[arg(long, value_name = "DIR")]
    dataset: Option<PathBuf>,
    /// Export manifest with a golden set.
    #[arg(long, value_name = "MANIFEST")]
    golden: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    source: RunSource,
    /// Labels file (one per line) for `--dataset` accuracy.
    #[arg(long, value_name = "FILE", requires = "dataset")]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct MarkingArgs {
    /// Input position `row,col[,channel]` to make symbolic (repeatable).
    #[arg(long = "sym-pixel", value_name = "R,C[,CH]", conflicts_with = "sym_param")]
    sym_pixel: Vec<String>,
    /// Parameter `layer,offset` to make symbolic (repeatable, one layer).
    #[arg(long = "sym-param", value_name = "LAYER,OFFSET")]
    sym_param: Vec<String>,
    /// Lower bound of every symbolic value.
    #[arg(long, allow_hyphen_values = true)]
    min: Option<f64>,
    /// Upper bound of every symbolic value.
    #[arg(long, allow_hyphen_values = true)]
    max: Option<f64>,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long, value_name = "N")]
    max_paths: Option<usize>,
    #[arg(long, value_name = "N")]
    max_solver_calls: Option<u64>,
    /// Wall-clock limit of the whole search, in seconds.
    #[arg(long, value_name = "SECS")]
    timeout: Option<f64>,
    /// Limit per solver check, in seconds.
    #[arg(long, value_name = "SECS")]
    solver_timeout: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Internal,
    SmtlibExport,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, value_name = "CSV")]
    input: PathBuf,
    #[command(flatten)]
    marking: MarkingArgs,
    /// Required new label; any other label when absent.
    #[arg(long)]
    target: Option<usize>,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Directory for `attack.json` and `adversarial.csv` (or `query.smt2`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExploreArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, value_name = "CSV")]
    input: PathBuf,
    #[command(flatten)]
    marking: MarkingArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Directory for `paths.json`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, value_name = "CSV")]
    input: PathBuf,
    #[command(flatten)]
    marking: MarkingArgs,
    /// Script path; the script goes to stdout when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Failure of a command, mapped to an exit code.
enum Failure {
    Usage(String),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Engine(Error::Io(e))
    }
}

type CmdResult = std::result::Result<Outcome, Failure>;

struct Outcome {
    /// Printed to stdout; `None` when the command already wrote its output.
    document: Option<Value>,
    summary: String,
    code: u8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(p) => AnalysisConfig::load(p),
        None => Ok(AnalysisConfig::default()),
    };
    init_logging(cli.log.as_deref(), config.as_ref().ok().and_then(|c| c.log.as_deref()));
    let result = config
        .map_err(Failure::from)
        .and_then(|cfg| dispatch(&cli.command, &cfg));
    match result {
        Ok(out) => {
            if let Some(doc) = out.document {
                println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
            }
            eprintln!("{}", out.summary);
            ExitCode::from(out.code)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("UsageError: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Engine(e)) => {
            eprintln!("{e}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::StackUnderflow | Error::UnboundVariable(_) => EXIT_INTERNAL,
        _ => EXIT_USAGE,
    }
}

/// Precedence: `--log`, then `NNSE_LOG`, then the config, then `warn`.
fn init_logging(flag: Option<&str>, config: Option<&str>) {
    let env = std::env::var("NNSE_LOG").ok();
    let level = flag
        .map(str::to_owned)
        .or(env)
        .or(config.map(str::to_owned))
        .unwrap_or_else(|| "warn".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .init();
}

fn dispatch(cmd: &Command, cfg: &AnalysisConfig) -> CmdResult {
    match cmd {
        Command::Run(a) => cmd_run(a, cfg),
        Command::Attack(a) => cmd_attack(a, cfg),
        Command::Explore(a) => cmd_explore(a, cfg),
        Command::Coverage(a) => cmd_coverage(a, cfg),
        Command::ExportSmt(a) => cmd_export(a, cfg),
    }
}

fn document(command: &str, result: Value, metadata: Value) -> Value {
    json!({ "command": command, "result": result, "metadata": metadata })
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn load(arg: &ModelArg, cfg: &AnalysisConfig) -> std::result::Result<Model, Failure> {
    let dir = arg
        .model
        .as_ref()
        .or(cfg.model.as_ref())
        .ok_or_else(|| Failure::Usage("no model directory: pass --model or set \"model\" in the config".into()))?;
    Ok(load_model(dir)?)
}

fn read_input(model: &Model, path: &Path) -> std::result::Result<Tensor, Failure> {
    Ok(Tensor::read_csv(path, model.input_shape())?)
}

fn cmd_run(a: &RunArgs, cfg: &AnalysisConfig) -> CmdResult {
    let start = Instant::now();
    let model = load(&a.model, cfg)?;
    let loaded = start.elapsed();
    let src = &a.source;
    if let Some(p) = &src.input {
        let x = read_input(&model, p)?;
        let (pred, pattern) = forward(&model, &x)?;
        let result = json!({
            "label": pred.label,
            "logits": pred.logits.data(),
            "probabilities": pred.probabilities.as_ref().map(|t| t.data()),
            "active_relus": pattern.active_count(),
        });
        return Ok(Outcome {
            summary: format!("label {}", pred.label),
            document: Some(document(
                "run",
                result,
                json!({ "load_secs": secs(loaded), "elapsed_secs": secs(start.elapsed()) }),
            )),
            code: 0,
        });
    }
    if let Some(dir) = &src.dataset {
        let inputs = read_csv_dir(dir, model.input_shape())?;
        if inputs.is_empty() {
            return Err(Error::EmptyDataset.into());
        }
        let preds = predict_batch(&model, &inputs)?;
        let labels: Vec<usize> = preds.iter().map(|p| p.label).collect();
        let accuracy = match &a.labels {
            Some(f) => Some(evaluate_dataset(&model, &inputs, &read_labels(f)?)?),
            None => None,
        };
        let summary = match accuracy {
            Some(acc) => format!("{} inputs, accuracy {acc:.4}", inputs.len()),
            None => format!("{} inputs", inputs.len()),
        };
        let result = json!({ "count": inputs.len(), "labels": labels, "accuracy": accuracy });
        return Ok(Outcome {
            summary,
            document: Some(document(
                "run",
                result,
                json!({ "load_secs": secs(loaded), "elapsed_secs": secs(start.elapsed()) }),
            )),
            code: 0,
        });
    }
    let manifest_path = src.golden.as_ref().expect("clap requires one source");
    let manifest = ExportManifest::read(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.verify(dir, &model)?;
    let set = manifest
        .golden
        .as_ref()
        .ok_or_else(|| Error::MalformedInput(format!("{} has no golden set", manifest_path.display())))?;
    let golden = Golden::load(dir, set, &model)?;
    let report = check_parity(&model, &golden, PARITY_TOLERANCE)?;
    let summary = format!(
        "golden parity {}: {} inputs, {} label mismatches, max logit diff {:.3e}",
        if report.passed { "passed" } else { "FAILED" },
        report.count,
        report.label_mismatches.len(),
        report.max_logit_diff
    );
    Ok(Outcome {
        summary,
        code: if report.passed { 0 } else { EXIT_PARITY },
        document: Some(document(
            "run",
            serde_json::to_value(&report).expect("serializable"),
            json!({ "load_secs": secs(loaded), "elapsed_secs": secs(start.elapsed()) }),
        )),
    })
}

/// Parses `a,b[,c]` into indices.
fn parse_indices(s: &str, flag: &str) -> std::result::Result<Vec<usize>, Failure> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("{flag} {s:?}: expected comma-separated non-negative integers")))
}

fn build_marking(
    m: &MarkingArgs,
    model: &Model,
    cfg: &AnalysisConfig,
    allow_empty: bool,
) -> std::result::Result<SymbolicMarking, Failure> {
    let lo = m.min.unwrap_or(cfg.symbolic.min);
    let hi = m.max.unwrap_or(cfg.symbolic.max);
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(Failure::Usage(format!(
            "--min {lo} --max {hi}: need finite bounds with min <= max"
        )));
    }
    let marking = if !m.sym_param.is_empty() {
        let mut positions = Vec::new();
        for s in &m.sym_param {
            match parse_indices(s, "--sym-param")?[..] {
                [layer, offset] => positions.push(ParamPosition { layer, offset }),
                _ => return Err(Failure::Usage(format!("--sym-param {s:?}: expected LAYER,OFFSET"))),
            }
        }
        SymbolicMarking::params(positions, lo, hi)
    } else {
        let rank = model.input_shape().rank();
        let mut positions = Vec::new();
        for s in &m.sym_pixel {
            let mut idx = parse_indices(s, "--sym-pixel")?;
            // `r,c` on an `h x w x 1` image means channel 0.
            if idx.len() + 1 == rank && model.input_shape().dims()[rank - 1] == 1 {
                idx.push(0);
            }
            if idx.len() != rank {
                return Err(Failure::Usage(format!(
                    "--sym-pixel {s:?}: input shape {} needs {rank} indices",
                    model.input_shape()
                )));
            }
            positions.push(idx);
        }
        SymbolicMarking::inputs(positions, lo, hi)
    };
    if marking.is_empty() && !allow_empty {
        return Err(Failure::Usage(
            "mark at least one value with --sym-pixel or --sym-param".into(),
        ));
    }
    match marking.variables(model) {
        Ok(_) => Ok(marking),
        Err(e @ (Error::InvalidMarking(_) | Error::NonlinearTerm(_))) => Err(Failure::Usage(e.to_string())),
        Err(e) => Err(e.into()),
    }
}

fn positive(v: Option<f64>, flag: &str) -> std::result::Result<Option<f64>, Failure> {
    match v {
        Some(s) if !(s > 0.0 && s.is_finite()) => {
            Err(Failure::Usage(format!("{flag} must be a positive number of seconds")))
        }
        _ => Ok(v),
    }
}

fn apply_budget(b: &BudgetArgs, cfg: &AnalysisConfig) -> std::result::Result<AnalysisConfig, Failure> {
    let mut c = cfg.clone();
    if let Some(n) = b.max_paths {
        c.budget.max_paths = n;
    }
    if let Some(n) = b.max_solver_calls {
        c.budget.max_solver_calls = n;
    }
    if let Some(s) = positive(b.timeout, "--timeout")? {
        c.budget.wall_timeout_secs = s;
    }
    if let Some(s) = positive(b.solver_timeout, "--solver-timeout")? {
        c.solver_timeout_secs = s;
    }
    c.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(c)
}

fn var_values(names: &[String], values: &[f64]) -> Value {
    let map: serde_json::Map<String, Value> = names.iter().cloned().zip(values.iter().map(|&v| json!(v))).collect();
    Value::Object(map)
}

fn write_json(path: &Path, v: &Value) -> std::io::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v).expect("serializable") + "\n")
}

/// Path constraint of the concrete run plus "some other class wins".
fn concolic_query(
    model: &Model,
    x: &Tensor,
    marking: &SymbolicMarking,
) -> std::result::Result<(String, Value), Failure> {
    let path = symbolic_forward_concolic(model, x, marking)?;
    let label = path.label.expect("concrete path has a label");
    let vars = path.constraint.vars().to_vec();
    let asserts = path.constraint.constraints().to_vec();
    let script = if vars.is_empty() {
        // Nothing symbolic: the decision is a constant, so only the
        // (empty) bounds are written.
        render_script(&vars, &asserts, None)
    } else {
        let mut alts = Vec::new();
        for c in (0..model.num_classes()).filter(|&c| c != label) {
            alts.extend(decision_constraints_for(&path.logits, c)?);
        }
        render_script(&vars, &asserts, Some(&alts))
    };
    let info = json!({
        "label": label,
        "variables": vars.len(),
        "path_constraints": asserts.len(),
    });
    Ok((script, info))
}

fn cmd_attack(a: &AttackArgs, cfg: &AnalysisConfig) -> CmdResult {
    let start = Instant::now();
    let cfg = apply_budget(&a.budget, cfg)?;
    let model = load(&a.model, &cfg)?;
    let x = read_input(&model, &a.input)?;
    let marking = build_marking(&a.marking, &model, &cfg, false)?;
    if marking.param_layer().is_some() {
        return Err(Failure::Usage(
            "attack marks input positions; use explore for --sym-param".into(),
        ));
    }
    let out = a.out.clone().or(cfg.output_dir.clone());
    if let Some(d) = &out {
        std::fs::create_dir_all(d)?;
    }
    let solver = match a.solver {
        Some(SolverArg::Internal) => SolverChoice::Internal,
        Some(SolverArg::SmtlibExport) => SolverChoice::SmtlibExport,
        None => cfg.solver,
    };

    if solver == SolverChoice::SmtlibExport {
        let (script, info) = concolic_query(&model, &x, &marking)?;
        let dir = out.ok_or_else(|| Failure::Usage("--solver smtlib-export needs --out or output_dir".into()))?;
        let file = dir.join("query.smt2");
        std::fs::write(&file, script)?;
        let result = json!({ "solver": "smtlib-export", "script": "query.smt2", "query": info });
        let doc = document("attack", result, json!({ "elapsed_secs": secs(start.elapsed()) }));
        write_json(&dir.join("attack.json"), &doc)?;
        return Ok(Outcome {
            summary: format!("wrote {}", file.display()),
            document: Some(doc),
            code: 0,
        });
    }

    let goal = a.target.map_or(Goal::AnyMisclassification, Goal::Targeted);
    let spec = AttackSpec {
        budget: cfg.exploration_budget(),
        solver: cfg.solver_options(),
        ..AttackSpec::new(x.clone(), marking.clone(), goal)
    };
    let names: Vec<String> = marking.variables(&model)?.into_iter().map(|v| v.name).collect();
    let r = attack(&model, &spec)?;
    let mut metadata = json!({ "elapsed_secs": secs(start.elapsed()) });
    let (result, summary, code) = match &r {
        AttackResult::Found(adv) => {
            metadata["solver_secs"] = json!(secs(adv.solver_time));
            let result = json!({
                "verdict": r.variant_name(),
                "original_label": adv.original_label,
                "new_label": adv.new_label,
                "values": var_values(&names, &adv.values),
                "paths_explored": adv.paths_explored,
            });
            let summary = format!(
                "found: label {} -> {} after {} paths ({:.2}s)",
                adv.original_label,
                adv.new_label,
                adv.paths_explored,
                adv.elapsed.as_secs_f64()
            );
            (result, summary, 0)
        }
        AttackResult::ProvenRobust { paths_explored } => (
            json!({ "verdict": r.variant_name(), "paths_explored": paths_explored }),
            format!("proven robust over {paths_explored} paths"),
            0,
        ),
        AttackResult::NoneWithinBudget { paths_explored } => (
            json!({ "verdict": r.variant_name(), "paths_explored": paths_explored }),
            format!("no adversarial input within budget ({paths_explored} paths)"),
            EXIT_BUDGET,
        ),
    };
    let doc = document("attack", result, metadata);
    if let Some(d) = &out {
        write_json(&d.join("attack.json"), &doc)?;
        if let AttackResult::Found(adv) = &r {
            adv.input.write_csv(&d.join("adversarial.csv"))?;
        }
    }
    Ok(Outcome {
        document: Some(doc),
        summary,
        code,
    })
}

fn cmd_explore(a: &ExploreArgs, cfg: &AnalysisConfig) -> CmdResult {
    let start = Instant::now();
    let cfg = apply_budget(&a.budget, cfg)?;
    let model = load(&a.model, &cfg)?;
    let x = read_input(&model, &a.input)?;
    let marking = build_marking(&a.marking, &model, &cfg, true)?;
    let mut reports: Vec<PathReport> = Vec::new();
    let ex = explore_with(
        &model,
        &x,
        &marking,
        &cfg.exploration_budget(),
        &cfg.solver_options(),
        |p, _| {
            reports.push(p.report());
            Ok(std::ops::ControlFlow::Continue(()))
        },
    )?;
    let result = json!({
        "paths": reports,
        "truncated": ex.truncated,
        "complete": ex.complete,
        "stats": ex.stats,
    });
    let doc = document(
        "explore",
        result,
        json!({ "elapsed_secs": secs(start.elapsed()), "solver_secs": secs(ex.stats.solver.time) }),
    );
    if let Some(d) = a.out.as_ref().or(cfg.output_dir.as_ref()) {
        std::fs::create_dir_all(d)?;
        write_json(&d.join("paths.json"), &doc)?;
    }
    Ok(Outcome {
        summary: format!(
            "{} paths{}",
            reports.len(),
            if ex.truncated { " (truncated by budget)" } else { "" }
        ),
        document: Some(doc),
        code: 0,
    })
}

fn cmd_coverage(a: &CoverageArgs, cfg: &AnalysisConfig) -> CmdResult {
    let start = Instant::now();
    let model = load(&a.model, cfg)?;
    let data = read_csv_dir(&a.dataset, model.input_shape())?;
    let report = coverage(&model, &data)?;
    Ok(Outcome {
        summary: format!(
            "neuron coverage {:.4} ({}/{}), {} distinct patterns over {} inputs",
            report.neuron_coverage, report.covered, report.neurons, report.distinct_patterns, report.inputs
        ),
        document: Some(document(
            "coverage",
            serde_json::to_value(&report).expect("serializable"),
            json!({ "elapsed_secs": secs(start.elapsed()) }),
        )),
        code: 0,
    })
}

fn cmd_export(a: &ExportArgs, cfg: &AnalysisConfig) -> CmdResult {
    let start = Instant::now();
    let model = load(&a.model, cfg)?;
    let x = read_input(&model, &a.input)?;
    let marking = build_marking(&a.marking, &model, cfg, true)?;
    let (script, info) = concolic_query(&model, &x, &marking)?;
    let summary = format!(
        "{} variables, {} path constraints",
        info["variables"], info["path_constraints"]
    );
    match &a.out {
        Some(f) => {
            std::fs::write(f, &script)?;
            let result = json!({ "script": f.display().to_string(), "query": info });
            Ok(Outcome {
                document: Some(document(
                    "export-smt",
                    result,
                    json!({ "elapsed_secs": secs(start.elapsed()) }),
                )),
                summary,
                code: 0,
            })
        }
        None => {
            print!("{script}");
            Ok(Outcome {
                document: None,
                summary,
                code: 0,
            })
        }
    }
}
