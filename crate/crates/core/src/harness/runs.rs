use std::io::{BufReader, Write};
use std::path::Path;

use log::{info, warn};

use super::checkpoint::Checkpoint;
use super::config::{domain_digest, Mode, RunConfig};
use crate::autodiff::{evaluate_points, init_params, NetworkField};
use crate::capacitor::{
    default_measurement_points, grid_points, make_measurements, sample_boundary, sample_collocation, CapacitorProblem,
    DomainGeometry, GridSample, LossBreakdown, MeasurementSet, Metrics, PlateVoltage, PointSets, PointTable,
};
use crate::error::{Error, Result};
use crate::optimizer::Qpgd;

/// Plate voltage of the ground-truth problem.
pub const TRUE_VOLTAGE: f64 = 1.0;

pub const HISTORY_COLUMNS: [&str; 9] = ["epoch", "f", "g", "alpha", "gamma", "l_data", "l_pde", "l_bc0", "l_bcv"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: u64,
    pub f: f64,
    pub g: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub l_data: f64,
    pub l_pde: f64,
    pub l_bc0: f64,
    pub l_bcv: f64,
}

pub fn write_history<W: Write>(rows: &[HistoryRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(HISTORY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.f.to_string(),
            r.g.to_string(),
            r.alpha.to_string(),
            r.gamma.to_string(),
            r.l_data.to_string(),
            r.l_pde.to_string(),
            r.l_bc0.to_string(),
            r.l_bcv.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Seeds of the independent random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub init: u64,
    pub collocation: u64,
    pub noise: u64,
}

impl RunSeeds {
    pub fn from_seed(seed: u64) -> Self {
        Self { init: seed, collocation: seed.wrapping_add(1_000_003), noise: seed.wrapping_add(2_000_003) }
    }
}

/// Boundary fit of a ground-truth network on a fresh boundary sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthQuality {
    pub avg_abs_laplacian: f64,
    pub grounded_error: f64,
    pub top_error: f64,
    /// Mean of `|φ − target|` over all boundary sample points.
    pub mean_boundary_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    pub checkpoint: Checkpoint,
    pub history: Vec<HistoryRow>,
    pub pretrain_epoch: Option<u64>,
    pub final_loss: LossBreakdown,
    pub final_g: f64,
    pub metrics: Metrics,
    pub truth_quality: Option<TruthQuality>,
    pub grid: GridSample,
}

/// The run's measurements. A table with labels is used as is; otherwise
/// labels are drawn from the truth network at the table's (or the default)
/// locations.
pub fn measurements(cfg: &RunConfig, truth: &Checkpoint) -> Result<MeasurementSet> {
    let geom = DomainGeometry::capacitor();
    let points = match &cfg.paths.measurements {
        Some(path) => {
            let table = PointTable::read(BufReader::new(std::fs::File::open(path)?))?;
            if let Some(p) = table.points.iter().find(|&&p| !geom.contains(p)) {
                return Err(Error::Domain(format!("measurement point ({}, {}) lies outside the domain", p[0], p[1])));
            }
            if table.labels.is_some() {
                return table.into_measurements(cfg.constraint.delta);
            }
            table.points
        }
        None => default_measurement_points(&geom),
    };
    let field = NetworkField::new(&truth.spec, &truth.params)?;
    let seeds = RunSeeds::from_seed(cfg.run.seed);
    Ok(make_measurements(&field, &points, cfg.constraint.delta, seeds.noise))
}

/// Collocation points of the run and, given a truth network, its noisy measurements.
pub fn point_sets(cfg: &RunConfig, truth: Option<&Checkpoint>) -> Result<PointSets> {
    let geom = DomainGeometry::capacitor();
    let seeds = RunSeeds::from_seed(cfg.run.seed);
    let (interior, grounded, top) = sample_collocation(&geom, cfg.counts(), seeds.collocation)?;
    let measurements = match truth {
        Some(t) => measurements(cfg, t)?,
        None => MeasurementSet { points: Vec::new(), labels: Vec::new(), delta: cfg.constraint.delta, deltas: None },
    };
    Ok(PointSets { interior, grounded, top, measurements })
}

fn build_problem(cfg: &RunConfig, truth: Option<&Checkpoint>) -> Result<CapacitorProblem> {
    let plate = if cfg.run.mode == Mode::Truth { PlateVoltage::Fixed(TRUE_VOLTAGE) } else { PlateVoltage::Trainable };
    let truth = if cfg.run.mode == Mode::Truth { None } else { truth };
    CapacitorProblem::new(cfg.spec()?, point_sets(cfg, truth)?, cfg.constraint()?, plate)
}

fn initial_params(cfg: &RunConfig) -> Result<Vec<f64>> {
    let mut p = init_params(&cfg.spec()?, RunSeeds::from_seed(cfg.run.seed).init);
    if cfg.run.mode == Mode::Truth {
        p.set_v_hat(TRUE_VOLTAGE);
    }
    Ok(p.into_vec())
}

struct LoopOutcome {
    params: Vec<f64>,
    history: Vec<HistoryRow>,
    pretrain_epoch: Option<u64>,
    failure: Option<Error>,
}

fn at_epoch(e: Error, epoch: u64) -> Error {
    match e {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}")),
        other => other,
    }
}

/// The shared epoch loop. With `pretrain_only` it stops once the
/// pretraining phase ends.
fn train_loop(
    cfg: &RunConfig,
    problem: &CapacitorProblem,
    mut params: Vec<f64>,
    pretrain_only: bool,
) -> Result<LoopOutcome> {
    let mode = cfg.run.mode;
    let mut opt = Qpgd::new(cfg.qpgd_config(), cfg.schedule(), params.len())?;
    let threshold = cfg.pretrain_threshold();
    let cap = cfg.run.pretrain_cap;
    let epochs = if pretrain_only { cap + 1 } else { cfg.run.epochs };
    let mut pre = pretrain_only || (mode == Mode::Qpgd && cfg.run.pretrain);
    let mut out = LoopOutcome {
        params: Vec::new(),
        history: Vec::with_capacity(epochs as usize),
        pretrain_epoch: None,
        failure: None,
    };
    let mut last_good = params.clone();

    for epoch in 0..epochs {
        let (eval, b) = match problem.grad_eval(&params) {
            Ok(v) => v,
            Err(e) => {
                out.failure = Some(at_epoch(e, epoch));
                params.copy_from_slice(&last_good);
                break;
            }
        };
        last_good.copy_from_slice(&params);
        if pre && (b.l_data * b.l_data <= threshold || epoch >= cap) {
            pre = false;
            if b.l_data * b.l_data <= threshold {
                info!("pretraining reached l_data^2 = {:.4e} <= {threshold:.4e} at epoch {epoch}", b.l_data * b.l_data);
                out.pretrain_epoch = Some(epoch);
            } else {
                warn!("pretraining cap of {cap} epochs reached with l_data^2 = {:.4e}", b.l_data * b.l_data);
            }
            if pretrain_only {
                break;
            }
        }
        let step = match (mode, pre) {
            (Mode::Truth, _) => opt.static_step(&mut params, &eval, 0.0, epoch),
            (Mode::Qpgd, false) => opt.step(&mut params, &eval, epoch),
            _ => opt.static_step(&mut params, &eval, 1.0, epoch),
        };
        let rec = match step {
            Ok(r) => r,
            Err(e) => {
                out.failure = Some(at_epoch(e, epoch));
                params.copy_from_slice(&last_good);
                break;
            }
        };
        let truth = mode == Mode::Truth;
        out.history.push(HistoryRow {
            epoch,
            f: rec.f,
            g: if truth { 0.0 } else { rec.g },
            alpha: rec.alpha,
            gamma: rec.gamma,
            l_data: b.l_data,
            l_pde: b.l_pde,
            l_bc0: b.l_bc0,
            l_bcv: b.l_bcv,
        });
        if cfg.run.log_every > 0 && epoch % cfg.run.log_every == 0 {
            info!(
                "epoch {epoch}: f {:.4e} g {:.4e} alpha {:.3e} v_hat {:.5}",
                rec.f,
                rec.g,
                rec.alpha,
                params[params.len() - 1]
            );
        }
    }
    if out.failure.is_none() && params.iter().any(|p| !p.is_finite()) {
        out.failure = Some(Error::NonFinite(format!("parameters after epoch {}", epochs.saturating_sub(1))));
        params.copy_from_slice(&last_good);
    }
    out.params = params;
    Ok(out)
}

/// Table metrics of a network against the truth network on the masked grid.
pub fn evaluate_against(ckpt: &Checkpoint, truth: &Checkpoint, resolution: usize) -> Result<(Metrics, GridSample)> {
    let points = grid_points(&DomainGeometry::capacitor(), resolution);
    let grid = GridSample::from_networks(&ckpt.spec, &ckpt.params, &truth.spec, &truth.params, points)?;
    Ok((grid.metrics(ckpt.v_hat()), grid))
}

/// Evaluation plus compatibility warnings.
pub fn cmd_evaluate(
    ckpt: &Checkpoint,
    truth: &Checkpoint,
    resolution: usize,
) -> Result<(Metrics, GridSample, Vec<String>)> {
    let mut warnings = Vec::new();
    if ckpt.domain != truth.domain {
        warnings.push(format!("domain digest differs from the truth checkpoint ({} vs {})", ckpt.domain, truth.domain));
    }
    if ckpt.domain != domain_digest() {
        warnings.push("checkpoint domain digest does not match this build's geometry".into());
    }
    let (m, g) = evaluate_against(ckpt, truth, resolution)?;
    Ok((m, g, warnings))
}

pub fn truth_quality(truth: &Checkpoint, grid: &GridSample, seed: u64) -> Result<TruthQuality> {
    let geom = DomainGeometry::capacitor();
    let b = sample_boundary(&geom, 400, 200, seed ^ 0x0B0B_0B0B)?;
    let mean_abs = |pts: &[[f64; 2]], target: f64| -> Result<(f64, usize)> {
        let evals = evaluate_points(&truth.spec, &truth.params, pts, false)?;
        Ok((evals.iter().map(|e| (e.phi - target).abs()).sum::<f64>(), evals.len()))
    };
    let (sg, ng) = mean_abs(&b.grounded, 0.0)?;
    let (st, nt) = mean_abs(&b.top, TRUE_VOLTAGE)?;
    Ok(TruthQuality {
        avg_abs_laplacian: grid.metrics(truth.v_hat()).avg_abs_laplacian,
        grounded_error: sg / ng as f64,
        top_error: st / nt as f64,
        mean_boundary_error: (sg + st) / (ng + nt) as f64,
    })
}

fn finish(
    cfg: &RunConfig,
    problem: &CapacitorProblem,
    outcome: LoopOutcome,
    truth: Option<&Checkpoint>,
    out: Option<&Path>,
) -> Result<RunRecord> {
    let checkpoint = Checkpoint {
        spec: cfg.spec()?,
        digest: cfg.digest(),
        domain: domain_digest(),
        seed: cfg.run.seed,
        params: outcome.params,
    };
    if let Some(err) = outcome.failure {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
            checkpoint.save(&dir.join("checkpoint.txt"))?;
            write_history(&outcome.history, std::fs::File::create(dir.join("loss_history.csv"))?)?;
            std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
            warn!("run aborted; last good checkpoint saved in {}", dir.display());
        }
        return Err(err);
    }
    let final_loss = problem.breakdown(&checkpoint.params)?;
    let final_g = if cfg.run.mode == Mode::Truth { 0.0 } else { problem.constraint_from(&final_loss) };
    let reference = truth.unwrap_or(&checkpoint);
    let (metrics, grid) = evaluate_against(&checkpoint, reference, cfg.points.grid)?;
    let truth_quality = match cfg.run.mode {
        Mode::Truth => Some(truth_quality(&checkpoint, &grid, cfg.run.seed)?),
        _ => None,
    };
    let record = RunRecord {
        config: cfg.clone(),
        checkpoint,
        history: outcome.history,
        pretrain_epoch: outcome.pretrain_epoch,
        final_loss,
        final_g,
        metrics,
        truth_quality,
        grid,
    };
    if let Some(dir) = out {
        write_artifacts(&record, dir)?;
    }
    Ok(record)
}

/// Forward problem with the plate voltage fixed at 1; trains the network
/// that plays the role of the true field.
pub fn run_truth(cfg: &RunConfig, out: Option<&Path>) -> Result<RunRecord> {
    let mut cfg = cfg.clone();
    cfg.run.mode = Mode::Truth;
    let problem = build_problem(&cfg, None)?;
    let outcome = train_loop(&cfg, &problem, initial_params(&cfg)?, false)?;
    finish(&cfg, &problem, outcome, None, out)
}

/// Naive-loss warm start. Returns the parameters and the epoch at which
/// `l_DATA² ≤ threshold` held, if it did before the cap.
pub fn run_pretrain(cfg: &RunConfig, truth: &Checkpoint) -> Result<(Vec<f64>, Option<u64>, Vec<HistoryRow>)> {
    let mut cfg = cfg.clone();
    if cfg.run.mode == Mode::Truth {
        return Err(Error::Config("pretraining needs measurements; mode must be naive or qpgd".into()));
    }
    cfg.run.mode = Mode::Naive;
    let problem = build_problem(&cfg, Some(truth))?;
    let outcome = train_loop(&cfg, &problem, initial_params(&cfg)?, true)?;
    if let Some(err) = outcome.failure {
        return Err(err);
    }
    Ok((outcome.params, outcome.pretrain_epoch, outcome.history))
}

/// Naive or filtered training against measurements of `truth`.
pub fn run_train(cfg: &RunConfig, truth: &Checkpoint, out: Option<&Path>) -> Result<RunRecord> {
    if cfg.run.mode == Mode::Truth {
        return Err(Error::Config("train needs mode naive or qpgd; use the truth command".into()));
    }
    if truth.domain != domain_digest() {
        warn!("truth checkpoint was produced for a different domain");
    }
    let problem = build_problem(cfg, Some(truth))?;
    let outcome = train_loop(cfg, &problem, initial_params(cfg)?, false)?;
    finish(cfg, &problem, outcome, Some(truth), out)
}

pub fn write_metrics<W: Write>(record: &RunRecord, mut w: W) -> Result<()> {
    let m = &record.metrics;
    writeln!(w, "# qpgd run metrics")?;
    writeln!(w, "config_digest = {}", record.checkpoint.digest)?;
    writeln!(w, "mode = {}", record.config.run.mode)?;
    writeln!(w, "seed = {}", record.config.run.seed)?;
    writeln!(w, "epochs = {}", record.history.len())?;
    writeln!(w, "v_hat = {}", m.v_hat)?;
    writeln!(w, "avg_abs_error_interior = {}", m.avg_abs_error_interior)?;
    writeln!(w, "avg_abs_laplacian = {}", m.avg_abs_laplacian)?;
    writeln!(w, "grid_points = {}", m.n_points)?;
    let l = &record.final_loss;
    writeln!(w, "final_f = {}", l.f())?;
    writeln!(w, "final_g = {}", record.final_g)?;
    writeln!(w, "final_l_data_sq = {}", l.l_data * l.l_data)?;
    writeln!(w, "final_l_pde = {}", l.l_pde)?;
    writeln!(w, "final_l_bc0 = {}", l.l_bc0)?;
    writeln!(w, "final_l_bcv = {}", l.l_bcv)?;
    match record.pretrain_epoch {
        Some(e) => writeln!(w, "pretrain_epoch = {e}")?,
        None => writeln!(w, "pretrain_epoch = none")?,
    }
    if let Some(q) = &record.truth_quality {
        writeln!(w, "mean_boundary_error = {}", q.mean_boundary_error)?;
        writeln!(w, "grounded_boundary_error = {}", q.grounded_error)?;
        writeln!(w, "top_boundary_error = {}", q.top_error)?;
    }
    Ok(())
}

/// `config.toml`, `checkpoint.txt`, `loss_history.csv`, `metrics.txt` and `grid.csv`.
pub fn write_artifacts(record: &RunRecord, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), record.config.to_toml())?;
    record.checkpoint.save(&dir.join("checkpoint.txt"))?;
    write_history(&record.history, std::fs::File::create(dir.join("loss_history.csv"))?)?;
    let mut metrics = Vec::new();
    write_metrics(record, &mut metrics)?;
    std::fs::write(dir.join("metrics.txt"), metrics)?;
    record.grid.write_csv(std::io::BufWriter::new(std::fs::File::create(dir.join("grid.csv"))?))?;
    Ok(())
}
