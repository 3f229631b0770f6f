//! `steer`: scenario runner for content-aware server assignment.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use steer_core::demand::{apply_scenario_multiplier, generate_gravity_demands, split_adjustable, GravityParams};
use steer_core::lp::{build_lp, write_mps};
use steer_core::scenario::{
    apply_override, load_inputs, prepare, run_scenario, select_top_k, validate_value, write_atomic, ConfigError,
    Participants, ScenarioConfig, Violation, BUILTIN_ABILENE, DEFAULT_TOP_K,
};
use steer_core::topology::{abilene, NetworkTopology};

#[derive(Parser)]
#[command(name = "steer", version, about = "Content-aware traffic engineering scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its reports.
    Run(RunArgs),
    /// Check a scenario config and list every violation.
    Validate(ConfigArgs),
    /// Write a gravity-model demand file.
    GenDemands(GenArgs),
    /// Write one bin's LP in free MPS format.
    ExportLp(ExportArgs),
    /// Rank providers by total volume; shares are of all traffic.
    TopK(TopKArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario config (JSON).
    config: PathBuf,
    /// Override a config field by schema path, e.g. `participants.top_k=3`.
    /// Values are parsed as JSON, falling back to a plain string.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Same as `--set output.dir=DIR`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Same as `--set participants.top_k=K`.
    #[arg(long)]
    top_k: Option<usize>,
    /// Same as `--set engine=ENGINE`.
    #[arg(long)]
    engine: Option<String>,
    /// Same as `--set quanta=Q`.
    #[arg(long)]
    quanta: Option<usize>,
    /// Same as `--set max_iterations=N`.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Worker threads; overrides the config's `workers`.
    #[arg(long, env = "STEER_WORKERS", value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
}

#[derive(Args)]
struct GenArgs {
    /// Topology file, or `builtin:abilene`.
    #[arg(long, default_value = BUILTIN_ABILENE)]
    topology: String,
    /// Generator parameters (JSON, same schema as `demand.generator`).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    total_volume: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    providers: Option<usize>,
    #[arg(long)]
    jitter: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 0)]
    bin: usize,
    /// Sweep factor to apply to the config's sweep provider.
    #[arg(long)]
    factor: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TopKArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of providers; the config's top-K when absent.
    #[arg(long)]
    k: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            report_error("usage", &first, &[]);
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(cfg) = err.downcast_ref::<ConfigError>() {
                report_error("config", &err.to_string(), cfg.violations());
                ExitCode::from(2)
            } else {
                report_error("runtime", &format!("{err:#}"), &[]);
                ExitCode::FAILURE
            }
        }
    }
}

fn report_error(kind: &str, message: &str, violations: &[Violation]) {
    let line = json!({"error": {"kind": kind, "message": message, "violations": violations}});
    eprintln!("{line}");
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => run(args),
        Command::Validate(args) => validate(args),
        Command::GenDemands(args) => gen_demands(args),
        Command::ExportLp(args) => export_lp(args),
        Command::TopK(args) => top_k(args),
    }
}

fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| anyhow!("override `{spec}` is not PATH=VALUE"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path.trim().to_string(), value))
}

/// Fields holding paths; override values for them are taken relative to the
/// working directory, not the config file.
const PATH_FIELDS: [&str; 3] = ["topology", "demand.file", "output.dir"];

fn absolute(value: Value) -> Result<Value> {
    match value {
        Value::String(s) if s != BUILTIN_ABILENE && Path::new(&s).is_relative() => {
            let cwd = std::env::current_dir().context("working directory")?;
            Ok(Value::String(cwd.join(s).to_string_lossy().into_owned()))
        }
        other => Ok(other),
    }
}

fn load_config(args: &ConfigArgs, extra: Vec<(String, Value)>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|source| ConfigError::Io { path: args.config.clone(), source })?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| {
        ConfigError::Invalid(vec![Violation { field: "(document)".into(), constraint: format!("valid JSON ({e})") }])
    })?;
    let mut overrides = args.overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
    overrides.extend(extra);
    for (path, value) in overrides {
        let value = if PATH_FIELDS.contains(&path.as_str()) { absolute(value)? } else { value };
        apply_override(&mut doc, &path, value);
    }
    Ok(validate_value(doc, args.config.parent())?)
}

fn print_json(value: &Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{value}")?;
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(dir) = &args.output_dir {
        extra.push(("output.dir".to_string(), json!(dir)));
    }
    if let Some(k) = args.top_k {
        extra.push(("participants".to_string(), json!({"top_k": k})));
    }
    if let Some(engine) = &args.engine {
        extra.push(("engine".to_string(), json!(engine)));
    }
    if let Some(q) = args.quanta {
        extra.push(("quanta".to_string(), json!(q)));
    }
    if let Some(n) = args.max_iterations {
        extra.push(("max_iterations".to_string(), json!(n)));
    }
    let mut config = load_config(&args.config, extra)?;
    if let Some(w) = args.workers {
        config.workers = Some(w as usize);
    }
    let outcome = run_scenario(&config)?;
    let variants: Vec<Value> = outcome
        .variants
        .iter()
        .map(|v| {
            json!({
                "label": v.label,
                "factor": v.factor,
                "objectives": v.runs.iter().map(|r| r.summary()).collect::<Vec<_>>(),
            })
        })
        .collect();
    print_json(&json!({"scenario": config.name, "variants": variants, "files": outcome.files}))
}

fn validate(args: ConfigArgs) -> Result<()> {
    let config = load_config(&args, Vec::new())?;
    let objectives: Vec<&str> = config.objectives.iter().map(|o| o.name()).collect();
    print_json(&json!({
        "valid": true,
        "name": config.name,
        "objectives": objectives,
        "variants": config.sweep.as_ref().map_or(1, |s| s.factors.len()),
    }))
}

fn load_topology(spec: &str) -> Result<NetworkTopology> {
    if spec == BUILTIN_ABILENE {
        return Ok(abilene());
    }
    NetworkTopology::load(spec).with_context(|| format!("topology {spec}"))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => Ok(write_atomic(path, bytes)?),
        None => Ok(std::io::stdout().lock().write_all(bytes)?),
    }
}

fn gen_demands(args: GenArgs) -> Result<()> {
    let topo = load_topology(&args.topology)?;
    let mut params = match &args.params {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_str::<GravityParams>(&text).with_context(|| format!("parameters in {}", path.display()))?
        }
        None => {
            let Some(total) = args.total_volume else { bail!("either --params or --total-volume is required") };
            GravityParams::new(total, 0)
        }
    };
    if let Some(v) = args.total_volume {
        params.total_volume = v;
    }
    if let Some(v) = args.seed {
        params.seed = v;
    }
    if let Some(v) = args.bins {
        params.bins = v;
    }
    if let Some(v) = args.providers {
        params.providers = v;
    }
    if let Some(v) = args.jitter {
        params.jitter = v;
    }
    let matrix = generate_gravity_demands(&topo, &params)?;
    let mut text = matrix.to_document().to_json_pretty();
    text.push('\n');
    emit(args.out.as_deref(), text.as_bytes())
}

fn export_lp(args: ExportArgs) -> Result<()> {
    let config = load_config(&args.config, Vec::new())?;
    let (net, matrix) = load_inputs(&config)?;
    let (mut base, participants) = prepare(&config, &matrix)?;
    if let Some(f) = args.factor {
        let Some(sweep) = &config.sweep else { bail!("--factor needs a sweep in the config") };
        base = apply_scenario_multiplier(&base, sweep.provider, f)?;
    }
    if args.bin >= base.bin_count() {
        bail!("bin {} out of range (the matrix has {} bins)", args.bin, base.bin_count());
    }
    let bin = split_adjustable(&base, args.bin, &participants)?;
    let lp = build_lp(&bin, &net, &config.baseline)?;
    let mut bytes = Vec::new();
    write_mps(&lp, &mut bytes)?;
    emit(args.out.as_deref(), &bytes)?;
    if let Some(path) = &args.out {
        print_json(&json!({
            "file": path,
            "variables": lp.variable_count(),
            "demand_rows": lp.demand_rows.len(),
            "link_rows": lp.link_rows.len(),
        }))?;
    }
    Ok(())
}

fn top_k(args: TopKArgs) -> Result<()> {
    let config = load_config(&args.config, Vec::new())?;
    let (_, matrix) = load_inputs(&config)?;
    let (base, _) = prepare(&config, &matrix)?;
    let k = args.k.unwrap_or(match config.participants {
        Participants::TopK(k) => k,
        Participants::Explicit(_) => DEFAULT_TOP_K,
    });
    let chosen = select_top_k(&base, k);
    let total = base.total();
    let share = |v: f64| if total > 0.0 { v / total } else { 0.0 };
    let providers: Vec<Value> = base
        .ranked_providers()
        .into_iter()
        .filter(|(id, _)| chosen.contains(id))
        .map(|(id, volume)| {
            let name = base.provider(id).map(|p| p.name.clone()).unwrap_or_default();
            json!({"id": id.0, "name": name, "volume": volume, "share": share(volume)})
        })
        .collect();
    let selected: f64 = chosen.iter().map(|&id| base.provider_total(id)).sum();
    print_json(&json!({"k": k, "providers": providers, "share": share(selected)}))
}
