use super::geometry::DomainGeometry;
use super::losses::{
    loss_bc0, loss_bcv, loss_data, loss_data_hetero, loss_pde, BoundaryMatch, ConstraintConfig, DataMisfit,
    MeasurementSet, PdeResidual, PlateVoltage,
};
use super::sampling::{sample_boundary, sample_interior};
use crate::autodiff::{evaluate_points, param_gradient, LossTerm, MlpSpec, Point, Reduction, ScalarField};
use crate::error::{ensure_finite, Result};
use crate::optimizer::GradEval;

/// Collocation, boundary and measurement points, frozen for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSets {
    pub interior: Vec<Point>,
    pub grounded: Vec<Point>,
    pub top: Vec<Point>,
    pub measurements: MeasurementSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointCounts {
    pub interior: usize,
    pub grounded: usize,
    pub top: usize,
}

impl PointCounts {
    pub const FULL: PointCounts = PointCounts { interior: 20_000, grounded: 300, top: 100 };
    pub const DESK: PointCounts = PointCounts { interior: 2_000, grounded: 100, top: 50 };
}

/// Interior and boundary collocation sets drawn from independent streams of `seed`.
pub fn sample_collocation(
    geom: &DomainGeometry,
    counts: PointCounts,
    seed: u64,
) -> Result<(Vec<Point>, Vec<Point>, Vec<Point>)> {
    let interior = sample_interior(geom, counts.interior, seed)?;
    let boundary = sample_boundary(geom, counts.grounded, counts.top, seed.wrapping_add(0x9E37_79B9))?;
    Ok((interior, boundary.grounded, boundary.top))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_pde: f64,
    pub l_bc0: f64,
    pub l_bcv: f64,
    /// Unsquared data loss; 0 when the problem has no measurements.
    pub l_data: f64,
}

impl LossBreakdown {
    /// Physics objective `l_PDE + l_BC,0 + l_BC,V`.
    pub fn f(&self) -> f64 {
        self.l_pde + self.l_bc0 + self.l_bcv
    }

    /// Static baseline loss `f + l_DATA²`.
    pub fn naive(&self) -> f64 {
        self.f() + self.l_data * self.l_data
    }
}

/// The inverse problem (or, with a fixed plate voltage and no
/// measurements, the forward problem used for ground truth).
pub struct CapacitorProblem {
    pub spec: MlpSpec,
    pub sets: PointSets,
    pub constraint: ConstraintConfig,
    pub plate: PlateVoltage,
    pde: PdeResidual,
    grounded: BoundaryMatch,
    top: BoundaryMatch,
    misfit: Option<DataMisfit>,
}

impl CapacitorProblem {
    pub fn new(spec: MlpSpec, sets: PointSets, constraint: ConstraintConfig, plate: PlateVoltage) -> Result<Self> {
        spec.validate()?;
        let misfit = if sets.measurements.is_empty() {
            None
        } else {
            Some(DataMisfit::for_measurements(&sets.measurements, constraint.p, true)?)
        };
        Ok(Self {
            spec,
            sets,
            constraint,
            plate,
            pde: PdeResidual,
            grounded: BoundaryMatch::GROUNDED,
            top: BoundaryMatch { target: plate },
            misfit,
        })
    }

    /// Right-hand side of the squared constraint: `z²δ²`, or `z²` for
    /// per-point noise scales (residuals are already normalized).
    pub fn tolerance_sq(&self) -> f64 {
        let z2 = self.constraint.z * self.constraint.z;
        if self.sets.measurements.deltas.is_some() {
            z2
        } else {
            z2 * self.constraint.delta * self.constraint.delta
        }
    }

    fn physics_terms(&self) -> [LossTerm<'_>; 3] {
        [
            LossTerm { points: &self.sets.interior, needs_laplacian: true, weight: 1.0, reduction: &self.pde },
            LossTerm { points: &self.sets.grounded, needs_laplacian: false, weight: 1.0, reduction: &self.grounded },
            LossTerm { points: &self.sets.top, needs_laplacian: false, weight: 1.0, reduction: &self.top },
        ]
    }

    /// All loss components at `params`, forward only.
    pub fn breakdown(&self, params: &[f64]) -> Result<LossBreakdown> {
        let v_hat = params[params.len() - 1];
        let value = |points: &[Point], lap: bool, r: &dyn Reduction| -> Result<f64> {
            let evals = evaluate_points(&self.spec, params, points, lap)?;
            Ok(r.reduce(&evals, v_hat).value)
        };
        let out = LossBreakdown {
            l_pde: value(&self.sets.interior, true, &self.pde)?,
            l_bc0: value(&self.sets.grounded, false, &self.grounded)?,
            l_bcv: value(&self.sets.top, false, &self.top)?,
            l_data: match &self.misfit {
                Some(m) => value(&self.sets.measurements.points, false, m)?.sqrt(),
                None => 0.0,
            },
        };
        ensure_finite(out.naive(), "loss breakdown")?;
        Ok(out)
    }

    /// Same components computed on an arbitrary field through its own
    /// point-wise evaluation; `v_hat` stands in for the voltage slot.
    pub fn breakdown_for_field(&self, field: &dyn ScalarField, v_hat: f64) -> Result<LossBreakdown> {
        let m = &self.sets.measurements;
        let l_bcv = match self.plate {
            PlateVoltage::Trainable => loss_bcv(field, &self.sets.top, v_hat)?,
            PlateVoltage::Fixed(v) => loss_bcv(field, &self.sets.top, v)?,
        };
        Ok(LossBreakdown {
            l_pde: loss_pde(field, &self.sets.interior)?,
            l_bc0: loss_bc0(field, &self.sets.grounded)?,
            l_bcv,
            l_data: match (&self.misfit, &m.deltas) {
                (None, _) => 0.0,
                (Some(_), Some(_)) => loss_data_hetero(field, m, self.constraint.p)?,
                (Some(_), None) => loss_data(field, m, self.constraint.p)?,
            },
        })
    }

    pub fn objective_f(&self, params: &[f64]) -> Result<f64> {
        Ok(self.breakdown(params)?.f())
    }

    /// `g = l_DATA² − z²δ²`.
    pub fn constraint_g(&self, params: &[f64]) -> Result<f64> {
        Ok(self.constraint_from(&self.breakdown(params)?))
    }

    pub fn constraint_from(&self, b: &LossBreakdown) -> f64 {
        b.l_data * b.l_data - self.tolerance_sq()
    }

    pub fn naive_loss(&self, params: &[f64]) -> Result<f64> {
        Ok(self.breakdown(params)?.naive())
    }

    /// `f` and `∇f`, with the physics components filled into the breakdown.
    pub fn f_and_grad(&self, params: &[f64]) -> Result<(LossBreakdown, Vec<f64>)> {
        let g = param_gradient(&self.spec, params, &self.physics_terms())?;
        let b = LossBreakdown { l_pde: g.terms[0], l_bc0: g.terms[1], l_bcv: g.terms[2], l_data: 0.0 };
        Ok((b, g.grad))
    }

    /// `(l_DATA, g, ∇g)`; zero constraint gradient without measurements.
    pub fn g_and_grad(&self, params: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
        let Some(misfit) = &self.misfit else {
            return Ok((0.0, -self.tolerance_sq(), vec![0.0; params.len()]));
        };
        let term =
            LossTerm { points: &self.sets.measurements.points, needs_laplacian: false, weight: 1.0, reduction: misfit };
        let g = param_gradient(&self.spec, params, &[term])?;
        Ok((g.value.sqrt(), g.value - self.tolerance_sq(), g.grad))
    }

    /// Everything one optimizer step needs.
    pub fn grad_eval(&self, params: &[f64]) -> Result<(GradEval, LossBreakdown)> {
        let (mut b, grad_f) = self.f_and_grad(params)?;
        let (l_data, g_val, grad_g) = self.g_and_grad(params)?;
        b.l_data = l_data;
        Ok((GradEval { f_val: b.f(), grad_f, g_val, grad_g }, b))
    }
}
