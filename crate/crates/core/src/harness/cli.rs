use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use log::warn;

use super::checkpoint::Checkpoint;
use super::config::{Mode, Overrides, RunConfig, Scale};
use super::runs::{cmd_evaluate, point_sets, run_pretrain, run_train, run_truth, write_history};
use crate::capacitor::PointTable;
use crate::diagnostics::{diagnose_run, run_toy_suite, ToySuite, Trajectory};
use crate::error::{Error, Result};
use crate::optimizer::read_step_records;

#[derive(Debug, Parser)]
#[command(name = "qpgd", version, about = "Constrained PINN training with the QP-filtered gradient step")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the forward problem with the plate voltage fixed at 1.
    Truth(RunArgs),
    /// Warm start on the naive loss until the data loss reaches the threshold.
    Pretrain(RunArgs),
    /// Naive or filtered training on noisy measurements of the truth.
    Train(RunArgs),
    /// Compare a checkpoint with the truth on the evaluation grid.
    Evaluate(EvaluateArgs),
    /// Descent, invariance and attraction checks on a loss history.
    Diagnose(DiagnoseArgs),
    /// Write collocation or measurement point sets.
    Sample(SampleArgs),
    /// Run the toy-problem verification suite.
    Toy(ToyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scale: Option<Scale>,
    #[command(flatten)]
    pub overrides: OverrideArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OverrideArgs {
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long, action = ArgAction::Set)]
    pub pretrain: Option<bool>,
    #[arg(long = "pretrain_threshold", alias = "pretrain-threshold")]
    pub pretrain_threshold: Option<f64>,
    #[arg(long = "pretrain_cap", alias = "pretrain-cap")]
    pub pretrain_cap: Option<u64>,
    #[arg(long = "log_every", alias = "log-every")]
    pub log_every: Option<u64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long = "halving_interval", alias = "halving-interval")]
    pub halving_interval: Option<u64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long = "eps_alpha", alias = "eps-alpha")]
    pub eps_alpha: Option<f64>,
    #[arg(long = "alpha_clip", alias = "alpha-clip")]
    pub alpha_clip: Option<f64>,
    #[arg(long = "use_adam", alias = "use-adam", action = ArgAction::Set)]
    pub use_adam: Option<bool>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long = "adam_eps", alias = "adam-eps")]
    pub adam_eps: Option<f64>,
    #[arg(long)]
    pub interior: Option<usize>,
    #[arg(long)]
    pub grounded: Option<usize>,
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long = "truth_seed", alias = "truth-seed")]
    pub truth_seed: Option<u64>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Norm exponent of the data loss (`inf` for the max norm).
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub z: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub out: Option<String>,
    /// Truth checkpoint.
    #[arg(long)]
    pub truth: Option<String>,
    /// Measurement point table.
    #[arg(long)]
    pub measurements: Option<String>,
}

impl OverrideArgs {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            mode: self.mode,
            seed: self.seed,
            epochs: self.epochs,
            pretrain: self.pretrain,
            pretrain_threshold: self.pretrain_threshold,
            pretrain_cap: self.pretrain_cap,
            log_every: self.log_every,
            hidden: self.hidden.clone(),
            activation: self.activation.clone(),
            gamma0: self.gamma0,
            halving_interval: self.halving_interval,
            c: self.c,
            eps_alpha: self.eps_alpha,
            alpha_clip: self.alpha_clip,
            use_adam: self.use_adam,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_eps: self.adam_eps,
            interior: self.interior,
            grounded: self.grounded,
            top: self.top,
            truth_seed: self.truth_seed,
            grid: self.grid,
            p: self.p,
            z: self.z,
            delta: self.delta,
            out: self.out.clone(),
            truth: self.truth.clone(),
            measurements: self.measurements.clone(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    /// Directory for `metrics.txt` and `grid.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    /// Run directory or loss-history CSV.
    pub path: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub beta: f64,
    /// Barrier rate; read from the run's config when omitted.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    /// interior, grounded, top or measurements.
    #[arg(long)]
    pub set: String,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ToyArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Resolve configuration: preset, then file, then flags.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path, args.scale)?,
        None => RunConfig::preset(args.scale.unwrap_or(Scale::Desk)),
    };
    args.overrides.to_overrides().apply(&mut cfg)?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, default: String) -> PathBuf {
    PathBuf::from(cfg.paths.out.clone().unwrap_or(default))
}

fn load_truth(cfg: &RunConfig) -> Result<Checkpoint> {
    let path = cfg.paths.truth.as_ref().ok_or_else(|| {
        Error::Config("a truth checkpoint is required (--truth PATH); create one with `qpgd truth`".into())
    })?;
    Checkpoint::load(Path::new(path), None)
}

fn print_metrics(out: &mut dyn Write, v_hat: f64, err: f64, lap: f64) -> Result<()> {
    writeln!(out, "{:<24}{v_hat:.6}", "v_hat")?;
    writeln!(out, "{:<24}{err:.6e}", "avg_abs_error_interior")?;
    writeln!(out, "{:<24}{lap:.6e}", "avg_abs_laplacian")?;
    Ok(())
}

/// Execute a parsed command, writing human-readable output to `out`.
/// Returns the process exit status.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Truth(args) => {
            let mut cfg = resolve_config(&args)?;
            cfg.run.mode = Mode::Truth;
            let seed = cfg.points.truth_seed;
            if args.overrides.seed.is_none() {
                cfg.run.seed = seed;
            }
            let dir = out_dir(&cfg, "runs/truth".into());
            let r = run_truth(&cfg, Some(&dir))?;
            let q = r.truth_quality.expect("truth runs report quality");
            writeln!(out, "truth written to {}", dir.display())?;
            writeln!(out, "{:<24}{:.6e}", "avg_abs_laplacian", q.avg_abs_laplacian)?;
            writeln!(out, "{:<24}{:.6e}", "mean_boundary_error", q.mean_boundary_error)?;
            Ok(0)
        }
        Command::Pretrain(args) => {
            let cfg = resolve_config(&args)?;
            let truth = load_truth(&cfg)?;
            let (params, epoch, history) = run_pretrain(&cfg, &truth)?;
            let dir = out_dir(&cfg, format!("runs/pretrain-seed{}", cfg.run.seed));
            std::fs::create_dir_all(&dir)?;
            let ckpt = Checkpoint {
                spec: cfg.spec()?,
                digest: cfg.digest(),
                domain: super::config::domain_digest(),
                seed: cfg.run.seed,
                params,
            };
            ckpt.save(&dir.join("checkpoint.txt"))?;
            write_history(&history, std::fs::File::create(dir.join("loss_history.csv"))?)?;
            std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
            match epoch {
                Some(e) => writeln!(out, "threshold reached at epoch {e}")?,
                None => writeln!(out, "threshold not reached within {} epochs", cfg.run.pretrain_cap)?,
            }
            Ok(0)
        }
        Command::Train(args) => {
            let cfg = resolve_config(&args)?;
            let truth = load_truth(&cfg)?;
            let dir = out_dir(&cfg, format!("runs/{}-seed{}", cfg.run.mode, cfg.run.seed));
            let r = run_train(&cfg, &truth, Some(&dir))?;
            writeln!(out, "run written to {}", dir.display())?;
            print_metrics(out, r.metrics.v_hat, r.metrics.avg_abs_error_interior, r.metrics.avg_abs_laplacian)?;
            writeln!(out, "{:<24}{:.6e}", "final_g", r.final_g)?;
            Ok(0)
        }
        Command::Evaluate(args) => {
            let ckpt = Checkpoint::load(&args.checkpoint, None)?;
            let truth = Checkpoint::load(&args.truth, None)?;
            let (m, grid, warnings) = cmd_evaluate(&ckpt, &truth, args.grid)?;
            for w in warnings {
                warn!("{w}");
                writeln!(out, "warning: {w}")?;
            }
            print_metrics(out, m.v_hat, m.avg_abs_error_interior, m.avg_abs_laplacian)?;
            if let Some(dir) = args.out {
                std::fs::create_dir_all(&dir)?;
                let mut text = Vec::new();
                print_metrics(&mut text, m.v_hat, m.avg_abs_error_interior, m.avg_abs_laplacian)?;
                std::fs::write(dir.join("metrics.txt"), text)?;
                grid.write_csv(std::io::BufWriter::new(std::fs::File::create(dir.join("grid.csv"))?))?;
            }
            Ok(0)
        }
        Command::Diagnose(args) => {
            let (csv_path, run_dir) = if args.path.is_dir() {
                (args.path.join("loss_history.csv"), Some(args.path.clone()))
            } else {
                (args.path.clone(), args.path.parent().map(Path::to_path_buf))
            };
            let records = read_step_records(std::fs::File::open(&csv_path)?)?;
            let cfg = run_dir
                .map(|d| d.join("config.toml"))
                .filter(|p| p.exists())
                .map(|p| RunConfig::load(&p, None))
                .transpose()?;
            let advisory = cfg.as_ref().is_none_or(|c| c.qpgd.use_adam);
            let c = args.c.or(cfg.as_ref().map(|c| c.qpgd.c)).unwrap_or(1.0);
            let traj = Trajectory::new(records)?.advisory(advisory);
            let report = diagnose_run(&traj, c, args.beta);
            let mut text = Vec::new();
            report.write(&mut text)?;
            out.write_all(&text)?;
            let target = args.out.unwrap_or_else(|| csv_path.with_file_name("diagnostics.txt"));
            std::fs::write(target, &text)?;
            Ok(if advisory || report.all_passed() { 0 } else { 1 })
        }
        Command::Sample(args) => {
            let cfg = resolve_config(&args.run)?;
            let truth = match args.set.as_str() {
                "measurements" => Some(load_truth(&cfg)?),
                "interior" | "grounded" | "top" => None,
                other => return Err(Error::Config(format!("unknown point set '{other}'"))),
            };
            let sets = point_sets(&cfg, truth.as_ref())?;
            let seed = cfg.run.seed;
            let table = match args.set.as_str() {
                "interior" => PointTable::plain("interior", seed, &sets.interior),
                "grounded" => PointTable::plain("grounded", seed, &sets.grounded),
                "top" => PointTable::plain("top", seed, &sets.top),
                _ => PointTable::from_measurements("measurements", seed, &sets.measurements),
            };
            match &cfg.paths.out {
                Some(path) => table.write(std::io::BufWriter::new(std::fs::File::create(path)?))?,
                None => table.write(&mut *out)?,
            }
            Ok(0)
        }
        Command::Toy(args) => {
            let report = run_toy_suite(&ToySuite::default())?;
            let mut text = Vec::new();
            report.write(&mut text)?;
            out.write_all(&text)?;
            if let Some(path) = args.out {
                std::fs::write(path, &text)?;
            }
            Ok(if report.all_passed() { 0 } else { 1 })
        }
    }
}
