//! The QP-filtered gradient step.
//!
//! Each step solves the minimum-norm correction that enforces the barrier
//! condition `⟨∇g, u⟩ + c·g ≤ 0` on the descent direction `u = −∇f`. Its
//! closed form scales `∇g` by
//!
//! ```text
//! α = max{−⟨∇f, ∇g⟩ + c·g, 0} / max{‖∇g‖², ε_α}
//! ```
//!
//! and the update direction is the mixed gradient `d = ∇f + α·∇g`, applied
//! either as a plain step `θ − γ·d` or fed to Adam's moment estimates.

use std::io::{Read, Write};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpgdConfig {
    /// Rate of approach to the constraint boundary.
    pub c: f64,
    /// Floor on ‖∇g‖² in the denominator of α.
    pub eps_alpha: f64,
    pub alpha_clip: Option<f64>,
    pub use_adam: bool,
    pub adam: AdamConfig,
}

impl Default for QpgdConfig {
    fn default() -> Self {
        Self { c: 1.0, eps_alpha: 1e-12, alpha_clip: None, use_adam: true, adam: AdamConfig::default() }
    }
}

impl QpgdConfig {
    pub fn sgd(c: f64) -> Self {
        Self { c, use_adam: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        if !(self.eps_alpha > 0.0) {
            return Err(Error::Config(format!("eps_alpha must be positive, got {}", self.eps_alpha)));
        }
        if let Some(clip) = self.alpha_clip {
            if !(clip > 0.0) {
                return Err(Error::Config(format!("alpha_clip must be positive, got {clip}")));
            }
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps must be positive".into()));
        }
        Ok(())
    }
}

/// Step-halving learning rate: `γ₀ · 2^(−⌊epoch / interval⌋)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub gamma0: f64,
    pub halving_interval: u64,
}

impl LrSchedule {
    pub fn constant(gamma: f64) -> Self {
        Self { gamma0: gamma, halving_interval: u64::MAX }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0) || self.halving_interval == 0 {
            return Err(Error::Config("gamma0 and halving_interval must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: u64) -> f64 {
        let halvings = epoch / self.halving_interval;
        self.gamma0 * 0.5f64.powi(halvings.min(i32::MAX as u64) as i32)
    }
}

pub fn lr_at(schedule: &LrSchedule, epoch: u64) -> f64 {
    schedule.lr_at(epoch)
}

/// Bias-corrected first/second moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One Adam update driven by `d`, in place.
    pub fn step(&mut self, params: &mut [f64], d: &[f64], gamma: f64, cfg: &AdamConfig) {
        self.t += 1;
        let t = self.t.min(i32::MAX as u64) as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(d).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= gamma * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

/// Objective and constraint values with their gradients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEval {
    pub f_val: f64,
    pub grad_f: Vec<f64>,
    pub g_val: f64,
    pub grad_g: Vec<f64>,
}

impl GradEval {
    pub fn check(&self) -> Result<()> {
        ensure_finite(self.f_val, "objective f")?;
        ensure_finite(self.g_val, "constraint g")?;
        if self.grad_f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient of f".into()));
        }
        if self.grad_g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient of g".into()));
        }
        if self.grad_f.len() != self.grad_g.len() {
            return Err(Error::LengthMismatch { expected: self.grad_f.len(), got: self.grad_g.len() });
        }
        Ok(())
    }
}

/// One row of a training trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: u64,
    pub f: f64,
    pub g: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// ‖d‖ of the applied direction.
    pub grad_norm: f64,
    /// `−⟨∇f, ∇g⟩ + c·g` before the max; not persisted.
    pub numerator: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn barrier_numerator(grad_f: &[f64], grad_g: &[f64], g_val: f64, c: f64) -> f64 {
    -dot(grad_f, grad_g) + c * g_val
}

/// Safety-filter coefficient. Always ≥ 0.
pub fn alpha(grad_f: &[f64], grad_g: &[f64], g_val: f64, cfg: &QpgdConfig) -> Result<f64> {
    if grad_f.len() != grad_g.len() {
        return Err(Error::LengthMismatch { expected: grad_f.len(), got: grad_g.len() });
    }
    let num = ensure_finite(barrier_numerator(grad_f, grad_g, g_val, cfg.c), "alpha numerator")?;
    let den = ensure_finite(dot(grad_g, grad_g), "alpha denominator")?.max(cfg.eps_alpha);
    let a = num.max(0.0) / den;
    Ok(match cfg.alpha_clip {
        Some(clip) => a.min(clip),
        None => a,
    })
}

/// `∇f + α·∇g`.
pub fn mixed_gradient(grad_f: &[f64], grad_g: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if grad_f.len() != grad_g.len() {
        return Err(Error::LengthMismatch { expected: grad_f.len(), got: grad_g.len() });
    }
    Ok(grad_f.iter().zip(grad_g).map(|(f, g)| f + alpha * g).collect())
}

/// `θ − γ·d`.
pub fn sgd_step(params: &[f64], d: &[f64], gamma: f64) -> Vec<f64> {
    params.iter().zip(d).map(|(p, g)| p - gamma * g).collect()
}

pub fn adam_step(state: &AdamState, params: &[f64], d: &[f64], gamma: f64, cfg: &AdamConfig) -> (AdamState, Vec<f64>) {
    let mut next = state.clone();
    let mut out = params.to_vec();
    next.step(&mut out, d, gamma, cfg);
    (next, out)
}

/// Single-writer optimizer state: configuration, schedule and Adam moments.
#[derive(Debug, Clone)]
pub struct Qpgd {
    pub cfg: QpgdConfig,
    pub schedule: LrSchedule,
    pub adam: AdamState,
}

impl Qpgd {
    pub fn new(cfg: QpgdConfig, schedule: LrSchedule, n_params: usize) -> Result<Self> {
        cfg.validate()?;
        schedule.validate()?;
        Ok(Self { cfg, schedule, adam: AdamState::new(n_params) })
    }

    fn apply(&mut self, params: &mut [f64], d: &[f64], gamma: f64) {
        if self.cfg.use_adam {
            self.adam.step(params, d, gamma, &self.cfg.adam);
        } else {
            params.iter_mut().zip(d).for_each(|(p, g)| *p -= gamma * g);
        }
    }

    /// One filtered step from an already evaluated point.
    pub fn step(&mut self, params: &mut [f64], eval: &GradEval, epoch: u64) -> Result<StepRecord> {
        eval.check()?;
        if eval.grad_f.len() != params.len() {
            return Err(Error::LengthMismatch { expected: params.len(), got: eval.grad_f.len() });
        }
        let numerator = barrier_numerator(&eval.grad_f, &eval.grad_g, eval.g_val, self.cfg.c);
        let a = alpha(&eval.grad_f, &eval.grad_g, eval.g_val, &self.cfg)?;
        let d = mixed_gradient(&eval.grad_f, &eval.grad_g, a)?;
        let gamma = self.schedule.lr_at(epoch);
        self.apply(params, &d, gamma);
        Ok(StepRecord {
            epoch,
            f: eval.f_val,
            g: eval.g_val,
            alpha: a,
            gamma,
            grad_norm: dot(&d, &d).sqrt(),
            numerator,
        })
    }

    /// Unfiltered step on the static loss `f + weight·g`; the record carries α = 0.
    pub fn static_step(&mut self, params: &mut [f64], eval: &GradEval, weight: f64, epoch: u64) -> Result<StepRecord> {
        eval.check()?;
        let d = mixed_gradient(&eval.grad_f, &eval.grad_g, weight)?;
        let gamma = self.schedule.lr_at(epoch);
        self.apply(params, &d, gamma);
        Ok(StepRecord {
            epoch,
            f: eval.f_val,
            g: eval.g_val,
            alpha: 0.0,
            gamma,
            grad_norm: dot(&d, &d).sqrt(),
            numerator: barrier_numerator(&eval.grad_f, &eval.grad_g, eval.g_val, self.cfg.c),
        })
    }
}

/// Evaluate `f` and `g` at `params`, then take one filtered step.
pub fn qpgd_epoch<F, G>(
    params: &[f64],
    mut f_and_grad: F,
    mut g_and_grad: G,
    opt: &mut Qpgd,
    epoch: u64,
) -> Result<(Vec<f64>, StepRecord)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    G: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (f_val, grad_f) = f_and_grad(params)?;
    let (g_val, grad_g) = g_and_grad(params)?;
    let eval = GradEval { f_val, grad_f, g_val, grad_g };
    let mut next = params.to_vec();
    let record = opt.step(&mut next, &eval, epoch)?;
    Ok((next, record))
}

pub const STEP_COLUMNS: [&str; 6] = ["epoch", "f", "g", "alpha", "gamma", "grad_norm"];

/// Append-only CSV sink for step records.
pub struct StepCsvWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> StepCsvWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(sink);
        inner.write_record(STEP_COLUMNS)?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, r: &StepRecord) -> Result<()> {
        self.inner.write_record([
            r.epoch.to_string(),
            r.f.to_string(),
            r.g.to_string(),
            r.alpha.to_string(),
            r.gamma.to_string(),
            r.grad_norm.to_string(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Read step records from any CSV that carries at least
/// `epoch, f, g, alpha, gamma` (extra columns are ignored, `grad_norm` is optional).
pub fn read_step_records<R: Read>(source: R) -> Result<Vec<StepRecord>> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(["epoch", "f", "g", "alpha", "gamma"]) {
        *slot = col(name).ok_or_else(|| Error::Format(format!("missing column '{name}'")))?;
    }
    let norm_idx = col("grad_norm");

    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).ok_or_else(|| Error::Format(format!("row {}: short record", row + 1)))?;
            s.trim().parse::<f64>().map_err(|_| Error::Format(format!("row {}: bad number '{s}'", row + 1)))
        };
        let epoch = rec
            .get(idx[0])
            .and_then(|s| s.trim().parse::<u64>().ok())
            .ok_or_else(|| Error::Format(format!("row {}: bad epoch", row + 1)))?;
        out.push(StepRecord {
            epoch,
            f: num(idx[1])?,
            g: num(idx[2])?,
            alpha: num(idx[3])?,
            gamma: num(idx[4])?,
            grad_norm: match norm_idx {
                Some(i) => num(i)?,
                None => f64::NAN,
            },
            numerator: f64::NAN,
        });
    }
    if out.is_empty() {
        return Err(Error::Format("no step records".into()));
    }
    Ok(out)
}
