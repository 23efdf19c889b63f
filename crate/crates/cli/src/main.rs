use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cmop_core::checkpoint;
use cmop_core::evolution::{sweep_batch_sizes, IterationTrace, OptimizeReport};
use cmop_core::{Engine, Error, ProjectConfig, RunState};
use tracing::{info, warn};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "cmop", version, about = "Contrastive prompt optimizer")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the configured initial prompt.
    Optimize(RunArgs),
    /// Score a prompt on the test split.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// File holding the prompt to score.
        #[arg(long)]
        prompt_file: PathBuf,
    },
    /// Continue an interrupted run from its last checkpoint.
    Resume {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to resume from (default: <output>/checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Summarize a finished run directory.
    Report {
        #[arg(long, default_value = "out")]
        output: PathBuf,
    },
    /// Sweep batch sizes on the synthetic backend.
    Simulate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// `key=value` settings applied over the config file.
    #[arg(long, num_args = 1..)]
    overrides: Vec<String>,
}

impl RunArgs {
    fn load(&self) -> Result<ProjectConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        Ok(ProjectConfig::load(&self.config, &overrides)?)
    }

    fn prepare_output(&self) -> Result<()> {
        fs::create_dir_all(&self.output).with_context(|| format!("creating {}", self.output.display()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(std::io::stderr)
        .init();

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_config_error));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Optimize(args) => optimize(&args),
        Command::Evaluate { run, prompt_file } => evaluate(&run, &prompt_file),
        Command::Resume { run, checkpoint } => resume(&run, checkpoint.as_deref()),
        Command::Report { output } => report(&output),
        Command::Simulate(args) => simulate(&args),
    }
}

/// Prints to stdout; a closed pipe (`cmop report | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

fn numbered_checkpoint(dir: &Path, iteration: u64) -> PathBuf {
    dir.join(format!("checkpoint-{iteration:03}.json"))
}

fn remove_numbered_checkpoints(dir: &Path) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("checkpoint-") && name.ends_with(".json") {
            fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
        }
    }
    Ok(())
}

fn save_checkpoints(dir: &Path, state: &RunState) -> Result<()> {
    checkpoint::save(state, &numbered_checkpoint(dir, state.iteration))?;
    checkpoint::save(state, &dir.join("checkpoint.json"))?;
    Ok(())
}

fn trace_line(trace: &IterationTrace) -> Result<String> {
    Ok(serde_json::to_string(trace)? + "\n")
}

/// Runs `engine` from `state`, checkpointing and tracing into `dir`, and writes
/// the final report.
fn drive(engine: &Engine, dir: &Path, state: RunState, mut traces: Vec<IterationTrace>) -> Result<()> {
    let trace_path = dir.join("trace.jsonl");
    let mut lines = String::new();
    for t in &traces {
        lines.push_str(&trace_line(t)?);
    }
    write_file(&trace_path, &lines)?;
    let mut trace_file = fs::OpenOptions::new().append(true).open(&trace_path)?;
    save_checkpoints(dir, &state)?;

    let state = engine.run(state, |state, trace| {
        let mut write = || -> Result<()> {
            trace_file.write_all(trace_line(trace)?.as_bytes())?;
            trace_file.flush()?;
            save_checkpoints(dir, state)
        };
        write().map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::other(format!("{e:#}")),
        })?;
        traces.push(trace.clone());
        Ok(())
    })?;

    let report = engine.report(&state, &traces)?;
    write_json(&dir.join("report.json"), &report)?;
    write_file(&dir.join("scores.csv"), &scores_csv(&report)?)?;
    let mut out = format!("best score {:.4} (held-out)\n", report.best_score);
    if let Some(test) = report.best_test_score {
        writeln!(out, "best test score {test:.4}")?;
    }
    writeln!(out, "best prompt: {}", report.best_prompt)?;
    emit(&out)
}

fn optimize(args: &RunArgs) -> Result<()> {
    let cfg = args.load()?;
    let engine = Engine::from_project(&cfg)?;
    args.prepare_output()?;
    remove_numbered_checkpoints(&args.output)?;
    let state = engine.initial_state()?;
    info!(score = state.best_score, "initial prompt scored");
    drive(&engine, &args.output, state, Vec::new())
}

fn resume(args: &RunArgs, from: Option<&Path>) -> Result<()> {
    let cfg = args.load()?;
    let path = from.map(Path::to_path_buf).unwrap_or_else(|| args.output.join("checkpoint.json"));
    let state = checkpoint::load(&path).map_err(|e| match e {
        Error::Io { .. } => Error::Config(format!("cannot read checkpoint {}: {e}", path.display())),
        other => other,
    })?;
    if state.rng.seed != cfg.run.seed {
        return Err(Error::Config(format!(
            "checkpoint was written with seed {} but the config says {}",
            state.rng.seed, cfg.run.seed
        ))
        .into());
    }
    let engine = Engine::from_project(&cfg)?;
    args.prepare_output()?;
    let traces = read_traces(&args.output.join("trace.jsonl"))?
        .into_iter()
        .filter(|t| t.iteration < state.iteration)
        .collect();
    info!(iteration = state.iteration, "resuming");
    drive(&engine, &args.output, state, traces)
}

fn read_traces(path: &Path) -> Result<Vec<IterationTrace>> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            warn!("no trace at {}; the report will only cover resumed iterations", path.display());
            return Ok(Vec::new());
        }
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str(line) {
            Ok(t) => out.push(t),
            // a kill mid-write leaves at most one partial final line
            Err(e) => warn!("skipping unreadable trace line: {e}"),
        }
    }
    Ok(out)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?)
}

fn scores_csv(report: &OptimizeReport) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(["iteration", "batch_accuracy", "leader_score", "best_score", "pool_size"])?;
    w.write_record(["initial", "", "", &format!("{:.6}", report.initial_score), "0"])?;
    for it in &report.iterations {
        w.write_record([
            it.iteration.to_string(),
            format!("{:.6}", it.batch_accuracy),
            format!("{:.6}", it.leader_score),
            format!("{:.6}", it.best_score),
            it.pool_size.to_string(),
        ])?;
    }
    finish_csv(w)
}

fn evaluate(args: &RunArgs, prompt_file: &Path) -> Result<()> {
    let prompt = fs::read_to_string(prompt_file)
        .map_err(|e| Error::Config(format!("cannot read prompt file {}: {e}", prompt_file.display())))?;
    let prompt = prompt.trim();
    if prompt.is_empty() {
        return Err(Error::Config(format!("prompt file {} is empty", prompt_file.display())).into());
    }
    let cfg = args.load()?;
    let engine = Engine::from_project(&cfg)?;
    let examples = if engine.test_set().is_empty() {
        warn!("no test split configured; evaluating on the training split");
        [engine.batch_pool(), engine.eval_pool()].concat()
    } else {
        engine.test_set().to_vec()
    };
    let predictions = engine.predict_all(prompt, &examples)?;
    let metric = engine.scorer().metric(&examples, &predictions)?;

    let mut w = csv_writer();
    w.write_record(["id", "extracted", "gold", "score"])?;
    for (ex, p) in examples.iter().zip(&predictions) {
        w.write_record([ex.id.as_str(), p.extracted_answer.as_str(), ex.answer.as_str(), &p.score.to_string()])?;
    }
    args.prepare_output()?;
    let path = args.output.join("evaluation.csv");
    write_file(&path, &finish_csv(w)?)?;
    info!("per-example results in {}", path.display());
    emit(&format!("{metric:.4}\n"))
}

fn report(dir: &Path) -> Result<()> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let report: OptimizeReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    write_file(&dir.join("scores.csv"), &scores_csv(&report)?)?;

    let mut out = String::new();
    let test = |s: Option<f64>| s.map_or("-".to_string(), |v| format!("{v:.4}"));
    writeln!(out, "iterations run   {}", report.iterations_run)?;
    writeln!(out, "initial score    {:.4} (test {})", report.initial_score, test(report.initial_test_score))?;
    writeln!(out, "best score       {:.4} (test {})", report.best_score, test(report.best_test_score))?;
    writeln!(out, "best prompt      {}", report.best_prompt)?;
    if report.final_prompt != report.best_prompt {
        writeln!(out, "final prompt     {}", report.final_prompt)?;
    }
    if !report.iterations.is_empty() {
        writeln!(out)?;
        writeln!(out, "{:>4}  {:>9}  {:>7}  {:>7}  {:>5}", "iter", "batch_acc", "leader", "best", "pool")?;
        for it in &report.iterations {
            writeln!(
                out,
                "{:>4}  {:>9.4}  {:>7.4}  {:>7.4}  {:>5}",
                it.iteration, it.batch_accuracy, it.leader_score, it.best_score, it.pool_size
            )?;
        }
    }
    emit(&out)
}

fn simulate(args: &RunArgs) -> Result<()> {
    let cfg = args.load()?;
    if !cfg.backend.is_synthetic() {
        return Err(Error::Config("simulate needs the synthetic backend".into()).into());
    }
    let points = sweep_batch_sizes(&cfg, &cfg.simulate.batch_sizes)?;
    let mut w = csv_writer();
    w.write_record(["batch_size", "final_score"])?;
    for (b, score) in &points {
        w.write_record([b.to_string(), format!("{score:.6}")])?;
    }
    let text = finish_csv(w)?;
    args.prepare_output()?;
    write_file(&args.output.join("simulate.csv"), &text)?;
    emit(&text)
}
