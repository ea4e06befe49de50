//! `fairtune` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fairtune::fairmetrics::{run_metrics, write_eval};
use fairtune::harness::{
    evaluate, load_artifacts, make_report, run_experiment, split_by_subject, ExperimentConfig, RunOptions, Stages,
};
use fairtune::mitigate::{MitigationConfig, MitigationKind};
use fairtune::nnet::{load_checkpoint, save_checkpoint, train, NetConfig, SizeClass, TinyPpgNet, PATCH_LEN};
use fairtune::synthpg::{generate_corpus, read_corpus, DomainProfile, Preset};
use fairtune::Error;

const WORKERS_ENV: &str = "FAIRTUNE_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "fairtune", version, about = "Bias-aware fine-tuning experiments on synthetic PPG corpora")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (gen, train, eval) or output root (report, sweep, mmd, all).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent training jobs; FAIRTUNE_WORKERS takes precedence.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus.
    Gen(GenArgs),
    /// Fine-tune a network on a corpus.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split of a corpus.
    Eval(EvalArgs),
    /// Run the model-size sweep from the experiment config.
    Sweep(ExpArgs),
    /// Run the representation MMD study from the experiment config.
    Mmd(ExpArgs),
    /// Aggregate finished runs into report tables.
    Report(ReportArgs),
    /// Generate corpora, run the transfer matrix, sweep, MMD study and reports.
    All(ExpArgs),
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn open_unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1)"))
    }
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    /// dalia, butppg, mimic, or a profile TOML file.
    #[arg(long, default_value = "dalia")]
    profile: String,
    /// Number of subjects.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Windows per subject.
    #[arg(long, default_value_t = 10)]
    windows: usize,
    #[arg(long, value_parser = unit_interval)]
    bias_strength: Option<f64>,
    #[arg(long, value_parser = open_unit_interval)]
    female_fraction: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct SplitArgs {
    /// Fraction of subjects used for training.
    #[arg(long, default_value_t = 0.8, value_parser = open_unit_interval)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// Source corpus (JSONL).
    #[arg(long)]
    source: PathBuf,
    #[arg(long, default_value = "none")]
    method: MitigationKind,
    #[arg(long, default_value = "xs")]
    size: SizeClass,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Peak learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Adversarial entropy weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// GroupDRO strength.
    #[arg(long)]
    eta: Option<f64>,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Target corpus (JSONL); its test split is evaluated.
    #[arg(long)]
    target: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// Output root holding `runs/`.
    #[arg(long)]
    runs: PathBuf,
    /// Only report runs of this size class.
    #[arg(long)]
    size: Option<SizeClass>,
}

#[derive(Args, Debug, Serialize)]
struct ExpArgs {
    /// Retrain runs that already finished.
    #[arg(long)]
    force: bool,
}

fn workers(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n = v
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("{WORKERS_ENV}={v:?} is not a worker count")))?;
            Ok(Some(n))
        }
        Err(_) => Ok(flag),
    }
}

/// Writes the resolved settings of a command next to its output.
fn write_sidecar<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fairtune::io::atomic_write(path, &bytes)?;
    Ok(())
}

fn sidecar_for(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".resolved.json");
    file.with_file_name(name)
}

fn load_profile(spec: &str) -> Result<DomainProfile> {
    if let Some(p) = Preset::from_name(spec) {
        return Ok(p.profile());
    }
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "toml") || path.exists() {
        return Ok(DomainProfile::from_toml(&fairtune::io::read_text(path)?)?);
    }
    Err(Error::InvalidArgument(format!("unknown profile {spec:?}: expected dalia, butppg, mimic or a TOML file")).into())
}

fn experiment_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::from_toml(&fairtune::io::read_text(p)?)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn cmd_gen(cli: &Cli, args: &GenArgs) -> Result<()> {
    let mut profile = load_profile(&args.profile)?;
    if let Some(b) = args.bias_strength {
        profile.bias_strength = b;
    }
    if let Some(f) = args.female_fraction {
        profile.female_fraction = f;
    }
    profile.validate()?;
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.jsonl", profile.name)));
    let records = generate_corpus(&profile, args.n, args.windows, seed, &out)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        command: &'static str,
        profile: &'a DomainProfile,
        n_subjects: usize,
        windows_per_subject: usize,
        seed: u64,
        out: &'a Path,
        records: usize,
    }
    write_sidecar(
        &sidecar_for(&out),
        &Resolved {
            command: "gen",
            profile: &profile,
            n_subjects: args.n,
            windows_per_subject: args.windows,
            seed,
            out: &out,
            records: records.len(),
        },
    )?;
    println!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let base = experiment_config(cli.config.as_deref())?;
    let mut tc = base.train.clone();
    tc.seed = cli.seed.unwrap_or(0);
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    if let Some(b) = args.batch_size {
        tc.batch_size = b;
    }
    if let Some(lr) = args.lr {
        tc.lr_peak = lr;
    }
    let mut mitigation = MitigationConfig { kind: args.method, ..base.mitigation.clone() };
    if let Some(l) = args.lambda {
        mitigation.lambda = l;
    }
    if let Some(e) = args.eta {
        mitigation.eta = e;
    }
    tc.validate()?;
    mitigation.validate()?;

    let records = read_corpus(&args.source)?;
    let (train_set, _) = split_by_subject(&records, args.split.train_fraction, args.split.split_seed)?;
    let context = train_set[0].signal.len() / PATCH_LEN;
    let net_cfg = NetConfig::for_size(args.size, context);
    let mut net = TinyPpgNet::new(net_cfg.clone(), tc.seed)?;
    let log = train(&mut net, &train_set, &mitigation, &tc)?;

    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("checkpoint"));
    save_checkpoint(&out, &net, &mitigation)?;
    let log_path = out.parent().unwrap_or(Path::new("")).join("log.csv");
    log.write_csv(&log_path)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        command: &'static str,
        args: &'a TrainArgs,
        net: &'a NetConfig,
        train: &'a fairtune::nnet::TrainConfig,
        mitigation: &'a MitigationConfig,
        n_train_records: usize,
        checkpoint: &'a Path,
        log: &'a Path,
    }
    write_sidecar(
        &sidecar_for(&out),
        &Resolved {
            command: "train",
            args,
            net: &net_cfg,
            train: &tc,
            mitigation: &mitigation,
            n_train_records: train_set.len(),
            checkpoint: &out,
            log: &log_path,
        },
    )?;
    if let Some(last) = log.epochs.last() {
        println!("epoch {}: train loss {:.4}, train MAE {:.2} bpm", last.epoch, last.mean_loss, last.train_mae);
    }
    println!("wrote {} and {}", out.display(), log_path.display());
    Ok(())
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let records = read_corpus(&args.target)?;
    let (_, test) = split_by_subject(&records, args.split.train_fraction, args.split.split_seed)?;
    let eval = evaluate(&ckpt.net, &test)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("eval.jsonl"));
    write_eval(&out, &eval)?;
    let metrics = run_metrics(&eval, cli.seed.unwrap_or(0))?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        command: &'static str,
        args: &'a EvalArgs,
        seed: u64,
        out: &'a Path,
        metrics: &'a fairtune::fairmetrics::RunMetrics,
    }
    write_sidecar(
        &sidecar_for(&out),
        &Resolved { command: "eval", args, seed: cli.seed.unwrap_or(0), out: &out, metrics: &metrics },
    )?;
    println!(
        "{} records: MAE {:.2} (male {:.2}, female {:.2}), gap {:.2}",
        eval.len(),
        metrics.mae_total,
        metrics.mae_male,
        metrics.mae_female,
        metrics.fairness_gap
    );
    Ok(())
}

fn cmd_report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let root = if !args.runs.join("runs").is_dir() && args.runs.file_name().is_some_and(|n| n == "runs") {
        args.runs.parent().unwrap_or(Path::new(".")).to_path_buf()
    } else {
        args.runs.clone()
    };
    let (mut artifacts, failures) = load_artifacts(&root)?;
    if let Some(size) = args.size {
        artifacts.retain(|a| a.size_class == size);
    }
    let out = cli.out.clone().unwrap_or_else(|| root.join("reports"));
    let seed = cli.seed.unwrap_or(0);
    let files = make_report(&artifacts, &failures, &out, seed)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        command: &'static str,
        runs: &'a Path,
        size: Option<SizeClass>,
        seed: u64,
        out: &'a Path,
        artifacts: usize,
        failures: usize,
    }
    write_sidecar(
        &out.join("report.resolved.json"),
        &Resolved {
            command: "report",
            runs: &root,
            size: args.size,
            seed,
            out: &out,
            artifacts: artifacts.len(),
            failures: failures.len(),
        },
    )?;
    println!("{} report rows written to {}", files.reports.len(), out.display());
    Ok(())
}

fn cmd_experiment(cli: &Cli, args: &ExpArgs, name: &str, stages: Stages) -> Result<()> {
    let mut cfg = experiment_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = workers(cli.workers)? {
        cfg.workers = w;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    let root = cfg.out_dir.clone();
    std::fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
    fairtune::io::atomic_write(&root.join(format!("{name}.resolved.toml")), cfg.to_toml()?.as_bytes())?;
    let opts = RunOptions { workers: cfg.workers.max(1), force: args.force };
    let summary = run_experiment(&cfg, &root, stages, opts)?;
    println!(
        "{name}: {} runs trained, {} failed; reports in {}",
        summary.trained,
        summary.failures.len(),
        root.join("reports").display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(w) = workers(cli.workers)? {
        if w == 0 {
            return Err(Error::InvalidArgument("worker count must be at least 1".into()).into());
        }
    }
    match &cli.command {
        Command::Gen(a) => cmd_gen(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Report(a) => cmd_report(cli, a),
        Command::Sweep(a) => cmd_experiment(cli, a, "sweep", Stages { matrix: false, scaling: true, mmd: false }),
        Command::Mmd(a) => cmd_experiment(cli, a, "mmd", Stages { matrix: false, scaling: false, mmd: true }),
        Command::All(a) => cmd_experiment(cli, a, "all", Stages::ALL),
    }
}

/// 2 usage, 3 I/O, 4 numerical, 5 schema.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e {
            Error::InvalidArgument(_) | Error::TargetLeak(_) => 2,
            Error::Io { .. } => 3,
            Error::Numerical(_) => 4,
            Error::Schema(_) | Error::Shape(_) | Error::MissingGroup(_) => 5,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    if err.downcast_ref::<serde_json::Error>().is_some() {
        return 5;
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
