use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use moslora::checkpoint::{load_checkpoint, merge_files, save_checkpoint, write_matrix};
use moslora::harness::{
    emit_csv, make_task, run_sweep, SweepSpec, TargetKind, TaskSpec, CONVERGED_FRACTION,
};
use moslora::verify::{all_passed, VerifySuite};
use moslora::{train, Adapter, AdapterConfig, InitKind, MixerKind, TrainConfig};

#[derive(Parser)]
#[command(
    name = "moslora",
    version,
    about = "Low-rank adapters with a learnable subspace mixer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one adapter on a synthetic low-rank regression task.
    Train(TrainArgs),
    /// Run a sweep described by a key = value spec file and emit CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the self-check suite; exit status 1 if any property fails.
    Verify {
        /// Only run one property group.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Merge an adapter checkpoint into a raw base weight file.
    Merge {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        adapter: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a checkpoint's configuration and sizes.
    Inspect { checkpoint: PathBuf },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 16)]
    d1: usize,
    #[arg(long, default_value_t = 16)]
    d2: usize,
    #[arg(long, default_value_t = 4)]
    rank: usize,
    /// identity | butterfly | orthogonal | learnable
    #[arg(long, default_value = "learnable")]
    mixer: MixerKind,
    /// Mixer init for a learnable mixer: zeros | identity | normal | orthogonal | kaiming
    #[arg(long)]
    mixer_init: Option<InitKind>,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target update: plain (A*·B*) or mixed (A*·W*·B*), of rank `--rank`.
    #[arg(long, default_value = "plain")]
    task: TargetKind,
    /// Checkpoint path for the trained adapter.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the task's frozen base weight as a raw matrix file.
    #[arg(long)]
    base_out: Option<PathBuf>,
}

fn mixer_from(args: &TrainArgs) -> Result<MixerKind> {
    match (args.mixer, args.mixer_init) {
        (MixerKind::Learnable(_), Some(init)) => Ok(MixerKind::Learnable(init)),
        (m, None) => Ok(m),
        (m, Some(_)) => bail!("--mixer-init only applies to a learnable mixer, not {m}"),
    }
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode> {
    let mixer = mixer_from(&args)?;
    let config = AdapterConfig::new(args.d1, args.d2, args.rank, mixer)
        .with_alpha(args.alpha)
        .with_seed(args.seed);
    let task = make_task(&TaskSpec {
        d1: args.d1,
        d2: args.d2,
        target_rank: args.rank,
        target_kind: args.task,
        seed: args.seed,
        ..TaskSpec::default()
    })?;
    let adapter = Adapter::new(config)?;
    for w in adapter.warnings() {
        eprintln!("warning: {w}");
    }
    let train_cfg = TrainConfig {
        seed: args.seed,
        ..TrainConfig::new(args.lr, args.steps)
    };
    let log = train(&adapter, &task.w0, &task.train, &train_cfg)?;

    let cfg = adapter.config();
    println!(
        "adapter d1={} d2={} rank={} mixer={} alpha={} params={}",
        cfg.d1,
        cfg.d2,
        cfg.rank,
        cfg.mixer,
        cfg.alpha,
        cfg.param_count()
    );
    for rec in log
        .records
        .iter()
        .filter(|r| r.step % 100 == 0 || r.step == args.steps)
    {
        println!("step {:>6} loss {:.6e}", rec.step, rec.loss);
    }
    let initial = log.initial_loss().unwrap_or(f64::NAN);
    let fin = log.final_loss().unwrap_or(f64::NAN);
    println!("initial_loss {initial:.6e}");
    println!("final_loss {fin:.6e}");
    match log.steps_to_fraction(CONVERGED_FRACTION) {
        Some(s) => println!("steps_to_90pct {s}"),
        None => println!("steps_to_90pct never"),
    }
    if let Some(d) = &log.divergence {
        println!("diverged at step {}: {}", d.step, d.reason);
    }
    if let Some(path) = &args.out {
        save_checkpoint(&log.final_adapter, path)?;
    }
    if let Some(path) = &args.base_out {
        write_matrix(&task.w0, path)?;
    }
    Ok(if log.diverged() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_sweep(spec_path: PathBuf, out: Option<PathBuf>) -> Result<ExitCode> {
    let text = fs::read_to_string(&spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let spec =
        SweepSpec::parse(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
    let report = run_sweep(&spec)?;
    match out {
        Some(path) => {
            emit_csv(&report, &path)?;
            println!("wrote {} rows to {}", report.rows.len(), path.display());
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(filter: Option<String>) -> Result<ExitCode> {
    let results = VerifySuite::default().run(filter.as_deref())?;
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} properties, {} failed", results.len(), failed);
    Ok(if all_passed(&results) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_inspect(path: PathBuf) -> Result<ExitCode> {
    let adapter = load_checkpoint(&path)?;
    let cfg = adapter.config();
    println!("d1 {}", cfg.d1);
    println!("d2 {}", cfg.d2);
    println!("rank {}", cfg.rank);
    println!("mixer {}", cfg.mixer);
    println!("alpha {}", cfg.alpha);
    println!("scaling {}", cfg.scaling());
    println!("param_count {}", cfg.param_count());
    println!("rank1_terms {}", adapter.rank1_expand().len());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Sweep { spec, out } => cmd_sweep(spec, out),
        Command::Verify { filter } => cmd_verify(filter),
        Command::Merge { base, adapter, out } => merge_files(&base, &adapter, &out)
            .map(|m| {
                println!("merged {}x{} -> {}", m.rows(), m.cols(), out.display());
                ExitCode::SUCCESS
            })
            .map_err(Into::into),
        Command::Inspect { checkpoint } => cmd_inspect(checkpoint),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
