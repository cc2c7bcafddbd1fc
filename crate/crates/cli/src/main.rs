//! `gsde` command-line entry point.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gsde_cli::config::{from_table, parse_table, parse_value, set_key};
use gsde_cli::{run_experiment, Pipeline, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "gsde", version, about = "Numerical laboratory for distribution-dependent G-SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// LP metric against the vertex oracle, scaling and degenerate cases.
    Metric(RunArgs),
    /// Discrete G-integrals and the inequality harness.
    Integrals(RunArgs),
    /// Picard iteration for the distribution-dependent equation.
    Solve(RunArgs),
    /// Solve, then check the moment, initial-data and rate estimates.
    Validate(RunArgs),
    /// Singleton volatility against classical mean-field OU closed forms.
    ClassicalCheck(RunArgs),
    /// Run the pipeline named by the `pipeline` key of a config file.
    Run {
        #[arg(value_name = "CONFIG")]
        file: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed [default: config value, else 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: config `output_dir`, else gsde-out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    control_levels: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    /// Registered coefficient name.
    #[arg(long)]
    coefficient: Option<String>,
    /// Coefficient parameter, `name=value`; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Any config key, dotted for tables (`metric.instances=50`); repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn split_pair(s: &str) -> Result<(&str, &str)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => bail!("expected KEY=VALUE, got '{s}'"),
    }
}

fn build_table(pipeline: Option<Pipeline>, config: Option<&Path>, a: &RunArgs) -> Result<toml::Table> {
    let mut table = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            parse_table(&text, &path.display().to_string())?
        }
        None => toml::Table::new(),
    };
    if let Some(p) = pipeline {
        table.insert("pipeline".into(), toml::Value::String(p.to_string()));
    }
    let mut put = |k: &str, v: Option<toml::Value>| -> Result<()> {
        if let Some(v) = v {
            set_key(&mut table, k, v)?;
        }
        Ok(())
    };
    put("seed", a.seed.map(|v| toml::Value::Integer(v as i64)))?;
    put("horizon", a.horizon.map(toml::Value::Float))?;
    put("steps", a.steps.map(|v| toml::Value::Integer(v as i64)))?;
    put("replicates", a.replicates.map(|v| toml::Value::Integer(v as i64)))?;
    put("sigma_min", a.sigma_min.map(toml::Value::Float))?;
    put("sigma_max", a.sigma_max.map(toml::Value::Float))?;
    put("control_levels", a.control_levels.map(|v| toml::Value::Integer(v as i64)))?;
    put("tol", a.tol.map(toml::Value::Float))?;
    put("max_iter", a.max_iter.map(|v| toml::Value::Integer(v as i64)))?;
    put("p", a.p.map(toml::Value::Float))?;
    put("coefficient.name", a.coefficient.clone().map(toml::Value::String))?;
    for s in &a.params {
        let (k, v) = split_pair(s)?;
        let x: f64 = v.parse().with_context(|| format!("parameter '{k}' is not a number"))?;
        put(&format!("coefficient.params.{k}"), Some(toml::Value::Float(x)))?;
    }
    for s in &a.sets {
        let (k, v) = split_pair(s)?;
        put(k, Some(parse_value(v)))?;
    }
    Ok(table)
}

fn execute(cli: Cli) -> Result<i32> {
    let (pipeline, config, args) = match cli.command {
        Command::Metric(a) => (Some(Pipeline::Metric), a.config.clone(), a),
        Command::Integrals(a) => (Some(Pipeline::Integrals), a.config.clone(), a),
        Command::Solve(a) => (Some(Pipeline::Solve), a.config.clone(), a),
        Command::Validate(a) => (Some(Pipeline::Validate), a.config.clone(), a),
        Command::ClassicalCheck(a) => (Some(Pipeline::ClassicalCheck), a.config.clone(), a),
        Command::Run { file, args } => (None, Some(file), args),
    };
    let table = build_table(pipeline, config.as_deref(), &args)?;
    let cfg = from_table(table)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("gsde-out"));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build()?;
    let outcome = pool.install(|| run_experiment(&cfg, &out))?;
    eprintln!(
        "{}: passed={} converged={} exit={} config={} out={}",
        cfg.pipeline,
        outcome.passed,
        outcome.converged.map(|c| c.to_string()).unwrap_or_else(|| "n/a".into()),
        outcome.exit_code,
        &outcome.config_hash[..12],
        out.display()
    );
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
