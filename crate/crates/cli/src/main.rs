use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pedsafe::config::ExperimentConfig;
use pedsafe::evaluate::{calibrated_params, evaluate, CALIBRATION_PERCENTILE};
use pedsafe::harness::summarize_condition;
use pedsafe::io::atomic_write;
use pedsafe::report::{build_report, rhsi_csv, violations_csv, write_report};
use pedsafe::safety::progress_pool;
use pedsafe::{run_matrix, ConceptGraph, ConditionName, ConstraintParams, LogSet, ProfileKind};

const SEED_OFFSET_VAR: &str = "PEDSAFE_SEED_OFFSET";
const MANIFEST: &str = "manifest.json";

#[derive(Parser)]
#[command(name = "pedsafe", version, about = "Pedagogical-safety simulation and evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment matrix and write session logs.
    Run(RunArgs),
    /// Calibrate the progress threshold from MAS logs.
    Calibrate(CalibrateArgs),
    /// Write per-condition violation and severity tables.
    Evaluate(EvalArgs),
    /// Write statistics, sensitivity, perturbation tables and figures.
    Report(EvalArgs),
}

#[derive(Args, Clone, Default)]
struct ParamArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Window length W.
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    delta_min: Option<f64>,
    /// Progress threshold; evaluation calibrates it from MAS logs when unset.
    #[arg(long)]
    eps_prog: Option<f64>,
    #[arg(long)]
    rho_max: Option<f64>,
}

impl ParamArgs {
    fn apply(&self, p: &mut ConstraintParams) {
        if let Some(w) = self.w {
            p.window_w = w;
        }
        if let Some(d) = self.delta_min {
            p.delta_min = d;
        }
        if let Some(e) = self.eps_prog {
            p.eps_prog = e;
        }
        if let Some(r) = self.rho_max {
            p.rho_max = r;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = default_parallelism())]
    parallelism: usize,
    /// Comma-separated conditions, e.g. `EO,ST`.
    #[arg(long, value_delimiter = ',')]
    conditions: Option<Vec<ConditionName>>,
    /// Comma-separated learner profiles.
    #[arg(long, value_delimiter = ',')]
    profiles: Option<Vec<ProfileKind>>,
    /// Seeds as `a..b` (exclusive) or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    session_length: Option<usize>,
    /// Re-run exactly the configuration recorded in a manifest.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Run directory or log directory.
    logs: PathBuf,
    #[arg(long)]
    w: Option<usize>,
    /// Percentile of the pooled window-gain distribution.
    #[arg(long, default_value_t = CALIBRATION_PERCENTILE)]
    percentile: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory or log directory.
    logs: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    /// Output directory (defaults to the run directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: String,
    created_unix: u64,
    config_path: Option<PathBuf>,
    out_dir: PathBuf,
    seed_offset: u64,
    config: ExperimentConfig,
    log_files: usize,
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().with_context(|| format!("bad seed range `{s}`"))?;
        let b: u64 = b.trim().parse().with_context(|| format!("bad seed range `{s}`"))?;
        if a >= b {
            bail!("empty seed range `{s}`");
        }
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().with_context(|| format!("bad seed `{x}`")))
        .collect()
}

fn seed_offset() -> Result<u64> {
    match std::env::var(SEED_OFFSET_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_OFFSET_VAR}={v} is not a non-negative integer")),
        Err(_) => Ok(0),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (mut cfg, offset) = match &args.manifest {
        Some(m) => {
            let text = std::fs::read_to_string(m).with_context(|| m.display().to_string())?;
            let man: Manifest = serde_json::from_str(&text)
                .with_context(|| format!("{}: not a run manifest", m.display()))?;
            (man.config, 0)
        }
        None => (load_config(args.params.config.as_deref())?, seed_offset()?),
    };
    args.params.apply(&mut cfg.params);
    if let Some(c) = args.conditions {
        cfg.matrix.conditions = c;
    }
    if let Some(p) = args.profiles {
        cfg.matrix.profiles = p;
    }
    if let Some(s) = &args.seeds {
        cfg.matrix.seeds = parse_seeds(s)?;
    }
    if let Some(n) = args.session_length {
        cfg.matrix.session_length = n;
    }
    // the manifest records absolute seeds so it replays without the env var
    cfg.matrix.seeds = cfg.matrix.seeds.iter().map(|s| s + offset).collect();
    cfg.sim.session_length = cfg.matrix.session_length;
    cfg.validate()?;

    let graph = ConceptGraph::python27();
    let logs = run_matrix(&cfg.matrix, &graph, &cfg.params, &cfg.sim, args.parallelism)?;
    let files = logs.write_dir(&args.out.join("logs"))?;
    for c in logs.conditions() {
        let summary = summarize_condition(logs.condition(c))?;
        atomic_write(
            &args.out.join(format!("summary_{c}.csv")),
            summary.to_csv().as_bytes(),
        )?;
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        config_path: args.params.config.clone(),
        out_dir: args.out.clone(),
        seed_offset: offset,
        config: cfg,
        log_files: files.len(),
    };
    atomic_write(
        &args.out.join(MANIFEST),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    println!(
        "wrote {} logs ({} steps) to {}",
        files.len(),
        logs.total_steps(),
        args.out.join("logs").display()
    );
    Ok(())
}

/// Accepts either a run directory (with `logs/` and a manifest) or a bare
/// log directory.
fn open_logs(dir: &Path) -> Result<(LogSet, Option<Manifest>, PathBuf)> {
    let nested = dir.join("logs");
    let (log_dir, run_dir) = if nested.is_dir() {
        (nested, dir.to_path_buf())
    } else {
        (dir.to_path_buf(), dir.to_path_buf())
    };
    let logs = LogSet::read_dir(&log_dir)?;
    if logs.is_empty() {
        bail!("{}: no session logs found", log_dir.display());
    }
    let manifest_path = run_dir.join(MANIFEST);
    let manifest = if manifest_path.is_file() {
        let text = std::fs::read_to_string(&manifest_path)
            .with_context(|| manifest_path.display().to_string())?;
        Some(
            serde_json::from_str(&text)
                .with_context(|| format!("{}: not a run manifest", manifest_path.display()))?,
        )
    } else {
        None
    };
    Ok((logs, manifest, run_dir))
}

fn base_params(logs: &LogSet, manifest: Option<&Manifest>, args: &ParamArgs) -> Result<ConstraintParams> {
    let mut p = if args.config.is_some() {
        load_config(args.config.as_deref())?.params
    } else if let Some(m) = manifest {
        m.config.params
    } else {
        logs.iter().next().map(|l| l.header.params).unwrap_or_default()
    };
    args.apply(&mut p);
    Ok(p)
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let (logs, manifest, _) = open_logs(&args.logs)?;
    let mut params = base_params(&logs, manifest.as_ref(), &ParamArgs::default())?;
    if let Some(w) = args.w {
        params.window_w = w;
    }
    if logs.condition(ConditionName::MAS).next().is_none() {
        bail!("{}: no MAS logs to calibrate from", args.logs.display());
    }
    let graph = ConceptGraph::python27();
    let pool = progress_pool(logs.condition(ConditionName::MAS), &graph, &params)?;
    let cal = calibrated_params(&logs, &graph, &params, args.percentile)?;
    println!(
        "eps_prog = {:.9e} (W = {}, p{}, pool n = {})",
        cal.eps_prog,
        params.window_w,
        args.percentile,
        pool.len()
    );
    Ok(())
}

fn eval_params(
    logs: &LogSet,
    manifest: Option<&Manifest>,
    args: &ParamArgs,
    graph: &ConceptGraph,
) -> Result<ConstraintParams> {
    let params = base_params(logs, manifest, args)?;
    if args.eps_prog.is_some() {
        return Ok(params);
    }
    Ok(calibrated_params(logs, graph, &params, CALIBRATION_PERCENTILE)?)
}

fn cmd_evaluate(args: EvalArgs) -> Result<()> {
    let (logs, manifest, run_dir) = open_logs(&args.logs)?;
    let graph = ConceptGraph::python27();
    let params = eval_params(&logs, manifest.as_ref(), &args.params, &graph)?;
    let eval = evaluate(&logs, &graph, &params, None)?;
    let out = args.out.unwrap_or(run_dir);
    atomic_write(&out.join("violations.csv"), violations_csv(&eval).as_bytes())?;
    atomic_write(&out.join("rhsi.csv"), rhsi_csv(&eval).as_bytes())?;
    println!("eps_prog = {:.6e}; V* = {:.4}", params.eps_prog, eval.v_star);
    for c in &eval.conditions {
        println!(
            "{:5} v=({:.3}, {:.3}, {:.3}) norm={:.3} RHSI={:.3}",
            c.condition, c.v.v2, c.v.v3, c.v.v4, c.report.violation_norm, c.report.rhsi
        );
    }
    Ok(())
}

fn cmd_report(args: EvalArgs) -> Result<()> {
    let (logs, manifest, run_dir) = open_logs(&args.logs)?;
    let graph = ConceptGraph::python27();
    let params = base_params(&logs, manifest.as_ref(), &args.params)?;
    let demand = match (&args.params.config, &manifest) {
        (Some(p), _) => load_config(Some(p))?.sim.actions.demand_map(),
        (None, Some(m)) => m.config.sim.actions.demand_map(),
        (None, None) => pedsafe::pedagogy::ActionTable::default().demand_map(),
    };
    let bundle = build_report(&logs, &graph, &params, &demand, args.params.eps_prog.is_none())?;
    let out = args.out.unwrap_or(run_dir);
    for path in write_report(&bundle, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Calibrate(a) => cmd_calibrate(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Report(a) => cmd_report(a),
    }
}
