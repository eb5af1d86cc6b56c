//! `glid`: assemble operators, recover geometry from them, run scenarios.
//!
//! Exit codes: 0 success, 1 scenario failure, 2 usage or input error,
//! 3 numerically inconsistent operator.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glid::discretization::{build_grid, normalize_density, DensitySpec};
use glid::geometry::{EmbeddingSpec, MetricSpec};
use glid::identify::{recover, rule_for, RecoveryOptions, EDGE_THRESHOLD};
use glid::matfile::{load_operator, save_operator, write_operator_csv};
use glid::operators::{assemble_continuous, KernelMode};
use glid::verify::{
    convergence_study, convergence_table, run_scenario, ScenarioConfig, ScenarioId,
};
use glid::Error;

#[derive(Parser, Debug)]
#[command(
    name = "glid",
    version,
    about = "Graph Laplace operators on compact surfaces"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON object whose keys are flag names of the subcommand; explicit
    /// flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assemble a continuous operator on a quadrature grid.
    Assemble(AssembleArgs),
    /// Recover masses, distances, metric and density from an operator file.
    Recover(RecoverArgs),
    /// Run verification scenarios.
    Verify(VerifyArgs),
    /// Convergence of sample operators to the continuous one.
    Converge(ConvergeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Intrinsic,
    Extrinsic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MatrixFormat {
    Bin,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct AssembleArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// flat | aniso:A | scaled:C | torus:E:F:G | sphere:R | induced:EMB
    #[arg(long)]
    metric: MetricSpec,
    /// clifford | donut:R:r | sphere (extrinsic mode only)
    #[arg(long)]
    embedding: Option<EmbeddingSpec>,
    /// uniform | cosine:ALPHA:u|v
    #[arg(long, default_value = "uniform")]
    density: DensitySpec,
    #[arg(long)]
    grid: usize,
    #[arg(long)]
    bandwidth: f64,
    #[arg(long, value_enum, default_value = "bin")]
    format: MatrixFormat,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RecoverArgs {
    #[arg(long)]
    operator: PathBuf,
    /// Report path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
    /// Also write kernel and distance matrices into this directory.
    #[arg(long)]
    matrices: Option<PathBuf>,
    #[arg(long, default_value_t = EDGE_THRESHOLD)]
    edge_threshold: f64,
    /// Skip least-squares refinement of the masses.
    #[arg(long)]
    no_refine: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// S1..S6 or all
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    seeds: Option<usize>,
    /// Comma-separated sample sizes for S5.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Threshold override NAME=VALUE; repeatable.
    #[arg(long = "tolerance", value_name = "NAME=VALUE", value_parser = parse_tolerance)]
    tolerances: Vec<(String, f64)>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    /// Comma-separated ascending sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    bandwidth: f64,
    #[arg(long, default_value = "cosine:0.5:u")]
    density: DensitySpec,
    #[arg(long, default_value_t = 128)]
    reference_grid: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: ReportFormat,
    /// Directory for the cached continuous reference.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let v: f64 = v.parse().map_err(|e| format!("bad value `{v}`: {e}"))?;
    Ok((k.to_string(), v))
}

/// Expand `--config` into flags placed right after the subcommand, so that
/// explicit flags appearing later override them.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("config {path}: {e}"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| format!("config {path}: expected a JSON object"))?;
    let mut flags = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            other => Err(format!("config key `{key}`: unsupported value {other}")),
        };
        match v {
            serde_json::Value::Bool(true) => flags.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
                if key == "tolerance" || key == "tolerances" {
                    for p in parts {
                        flags.extend(["--tolerance".to_string(), p]);
                    }
                } else {
                    flags.extend([flag, parts.join(",")]);
                }
            }
            serde_json::Value::Object(map) if key == "tolerance" || key == "tolerances" => {
                for (name, t) in map {
                    flags.extend(["--tolerance".to_string(), format!("{name}={}", scalar(t)?)]);
                }
            }
            other => flags.extend([flag, scalar(other)?]),
        }
    }
    let names = ["assemble", "recover", "verify", "converge"];
    let Some(at) = argv.iter().position(|a| names.contains(&a.as_str())) else {
        return Ok(argv);
    };
    let mut out = argv[..=at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[at + 1..]);
    Ok(out)
}

enum Failure {
    Usage(String),
    Library(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Library(e)
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn assemble(a: AssembleArgs) -> Result<ExitCode, Failure> {
    let mode = match (a.mode, a.embedding) {
        (Mode::Intrinsic, None) => KernelMode::Intrinsic(a.metric),
        (Mode::Intrinsic, Some(_)) => {
            return Err(Failure::Usage(
                "--embedding applies to extrinsic mode only".into(),
            ))
        }
        (Mode::Extrinsic, Some(e)) => KernelMode::Extrinsic(e),
        (Mode::Extrinsic, None) => {
            return Err(Failure::Usage("extrinsic mode requires --embedding".into()))
        }
    };
    let rule = build_grid(&a.metric, a.grid)?;
    let p = normalize_density(&a.density, &rule)?;
    let op = assemble_continuous(mode, &a.metric, &p, &rule, a.bandwidth)?;
    for w in op.warnings() {
        eprintln!("warning: {w}");
    }
    match a.format {
        MatrixFormat::Bin => {
            if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(Error::from)?;
            }
            save_operator(&a.out, &op)?
        }
        MatrixFormat::Csv => {
            let mut buf = Vec::new();
            write_operator_csv(&mut buf, &op)?;
            write_output(&a.out, &buf)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn recover_cmd(a: RecoverArgs) -> Result<ExitCode, Failure> {
    let op = load_operator(&a.operator)?;
    let rule = rule_for(&op)?;
    let opts = RecoveryOptions {
        edge_threshold: a.edge_threshold,
        refine_masses: !a.no_refine,
    };
    let mut report = recover(&op, &rule, &opts, None)?;
    if let Some(dir) = &a.matrices {
        fs::create_dir_all(dir).map_err(Error::from)?;
        let stem = a
            .operator
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "operator".into());
        report.externalize(&op, dir, &stem)?;
    }
    let text = match a.format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Csv => report.node_table(&rule).to_csv_string()?,
    };
    match &a.out {
        Some(path) => write_output(path, text.as_bytes())?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(Error::from)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(a: VerifyArgs) -> Result<ExitCode, Failure> {
    let ids: Vec<ScenarioId> = if a.scenario.eq_ignore_ascii_case("all") {
        ScenarioId::ALL.to_vec()
    } else {
        vec![a
            .scenario
            .parse()
            .map_err(|e: Error| Failure::Usage(e.to_string()))?]
    };
    if let Some((k, _)) = a.tolerances.iter().find(|(k, _)| {
        !ids.iter()
            .any(|&id| id.discrepancy_names().contains(&k.as_str()))
    }) {
        return Err(Failure::Usage(format!(
            "tolerance override `{k}` names no discrepancy"
        )));
    }
    let mut all_pass = true;
    for id in ids {
        let mut cfg = ScenarioConfig::new(id);
        if let Some(v) = a.grid {
            cfg.grid = v;
        }
        if let Some(v) = a.bandwidth {
            cfg.bandwidth = v;
        }
        if let Some(v) = a.seed {
            cfg.seed = v;
        }
        if let Some(v) = a.seeds {
            cfg.seeds = v;
        }
        if let Some(v) = &a.n {
            cfg.n_values = v.clone();
        }
        // overrides go only to the scenario that defines the name
        let overrides = a
            .tolerances
            .iter()
            .filter(|(k, _)| id.discrepancy_names().contains(&k.as_str()));
        cfg.tolerances.extend(overrides.cloned());
        cfg.cache_dir = Some(a.out.join("cache"));
        let result = run_scenario(&cfg)?;
        result.write(&a.out)?;
        println!("{id}: {}", if result.pass { "pass" } else { "FAIL" });
        for d in &result.discrepancies {
            println!(
                "  {} = {:e} {:?}{}",
                d.name,
                d.value,
                d.bound,
                if d.pass { "" } else { "  <- violated" }
            );
        }
        all_pass &= result.pass;
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn converge(a: ConvergeArgs) -> Result<ExitCode, Failure> {
    let cfg = ScenarioConfig {
        bandwidth: a.bandwidth,
        density: a.density,
        seed: a.seed,
        seeds: a.seeds,
        n_values: a.n,
        reference_grid: a.reference_grid,
        cache_dir: a.cache_dir,
        ..ScenarioConfig::new(ScenarioId::S5)
    };
    let study = convergence_study(&cfg)?;
    let name = a
        .out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let text = match a.format {
        ReportFormat::Csv => convergence_table(&study, &cfg, &name)?.to_csv_string()?,
        ReportFormat::Json => serde_json::to_string_pretty(&study).map_err(Error::from)? + "\n",
    };
    write_output(&a.out, text.as_bytes())?;
    println!("slope {}", study.slope);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let run = match cli.command {
        Command::Assemble(a) => assemble(a),
        Command::Recover(a) => recover_cmd(a),
        Command::Verify(a) => verify(a),
        Command::Converge(a) => converge(a),
    };
    match run {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Library(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
