//! Loss terms of the capacitor problem.
//!
//! Every term is a [`Reduction`] over network outputs at a fixed point set,
//! so the same arithmetic serves plain evaluation on any [`ScalarField`]
//! and exact parameter gradients through the batched engine.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Point, PointEval, Reduced, Reduction, ScalarField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PNorm {
    Finite(f64),
    Infinity,
}

impl PNorm {
    pub fn validate(self) -> Result<Self> {
        match self {
            PNorm::Finite(p) if !(p >= 1.0) || !p.is_finite() => {
                Err(Error::Config(format!("norm order must be ≥ 1, got {p}")))
            }
            _ => Ok(self),
        }
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PNorm::Finite(p) => write!(f, "{p}"),
            PNorm::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for PNorm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(PNorm::Infinity),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad norm order '{s}'")))
                .and_then(|p| PNorm::Finite(p).validate()),
        }
    }
}

/// Data-fit constraint `l_DATA ≤ z·δ`, enforced in squared form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintConfig {
    pub p: PNorm,
    pub z: f64,
    pub delta: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self { p: PNorm::Finite(2.0), z: 1.0, delta: 0.1 }
    }
}

/// Noisy point observations of the field.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub points: Vec<Point>,
    pub labels: Vec<f64>,
    /// Homoscedastic noise scale.
    pub delta: f64,
    /// Per-point noise scales; when present the normalized data loss is used.
    pub deltas: Option<Vec<f64>>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `label = truth + δ·ξ`, ξ standard normal, i.i.d. and seeded.
pub fn make_measurements(truth: &dyn ScalarField, points: &[Point], delta: f64, seed: u64) -> MeasurementSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = points
        .iter()
        .map(|p| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            truth.eval(p[0], p[1]) + delta * xi
        })
        .collect();
    MeasurementSet { points: points.to_vec(), labels, delta, deltas: None }
}

/// Mean of squared Laplacians.
pub struct PdeResidual;

impl Reduction for PdeResidual {
    fn reduce(&self, evals: &[PointEval], _v_hat: f64) -> Reduced {
        let n = evals.len() as f64;
        Reduced {
            value: evals.iter().map(|e| e.laplacian * e.laplacian).sum::<f64>() / n,
            d_phi: vec![0.0; evals.len()],
            d_laplacian: evals.iter().map(|e| 2.0 * e.laplacian / n).collect(),
            d_v_hat: 0.0,
        }
    }
}

/// Target value of the driven plate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlateVoltage {
    /// Read from the parameter vector's voltage slot.
    Trainable,
    Fixed(f64),
}

/// Mean squared deviation of φ from a boundary value.
pub struct BoundaryMatch {
    pub target: PlateVoltage,
}

impl BoundaryMatch {
    pub const GROUNDED: BoundaryMatch = BoundaryMatch { target: PlateVoltage::Fixed(0.0) };
}

impl Reduction for BoundaryMatch {
    fn reduce(&self, evals: &[PointEval], v_hat: f64) -> Reduced {
        let n = evals.len() as f64;
        let target = match self.target {
            PlateVoltage::Trainable => v_hat,
            PlateVoltage::Fixed(v) => v,
        };
        let d_phi: Vec<f64> = evals.iter().map(|e| 2.0 * (e.phi - target) / n).collect();
        let d_v_hat = match self.target {
            PlateVoltage::Trainable => -d_phi.iter().sum::<f64>(),
            PlateVoltage::Fixed(_) => 0.0,
        };
        Reduced {
            value: evals.iter().map(|e| (e.phi - target).powi(2)).sum::<f64>() / n,
            d_phi,
            d_laplacian: Vec::new(),
            d_v_hat,
        }
    }
}

/// Scaled p-norm of residuals: `((1/denom) Σ |sᵢ(φᵢ − yᵢ)|^p)^(1/p)`,
/// the maximum of `|sᵢ(φᵢ − yᵢ)|` for p = ∞, optionally squared.
pub struct DataMisfit {
    labels: Vec<f64>,
    scales: Vec<f64>,
    denom: f64,
    p: PNorm,
    squared: bool,
}

impl DataMisfit {
    /// Homoscedastic form with the `1/(N−1)` normalization.
    pub fn homoscedastic(labels: &[f64], p: PNorm, squared: bool) -> Result<Self> {
        let n = labels.len();
        if matches!(p, PNorm::Finite(_)) && n < 2 {
            return Err(Error::Config(format!("finite-p data loss needs at least 2 measurements, got {n}")));
        }
        if n == 0 {
            return Err(Error::Config("no measurements".into()));
        }
        Ok(Self { labels: labels.to_vec(), scales: vec![1.0; n], denom: n as f64 - 1.0, p: p.validate()?, squared })
    }

    /// Residuals normalized by per-point scales, with the `1/N` normalization.
    pub fn heteroscedastic(labels: &[f64], deltas: &[f64], p: PNorm, squared: bool) -> Result<Self> {
        if labels.len() != deltas.len() {
            return Err(Error::LengthMismatch { expected: labels.len(), got: deltas.len() });
        }
        if labels.is_empty() {
            return Err(Error::Config("no measurements".into()));
        }
        if let Some(d) = deltas.iter().find(|d| !(**d > 0.0)) {
            return Err(Error::Config(format!("noise scales must be positive, got {d}")));
        }
        Ok(Self {
            labels: labels.to_vec(),
            scales: deltas.iter().map(|d| 1.0 / d).collect(),
            denom: labels.len() as f64,
            p: p.validate()?,
            squared,
        })
    }

    pub fn for_measurements(m: &MeasurementSet, p: PNorm, squared: bool) -> Result<Self> {
        match &m.deltas {
            Some(d) => Self::heteroscedastic(&m.labels, d, p, squared),
            None => Self::homoscedastic(&m.labels, p, squared),
        }
    }
}

impl Reduction for DataMisfit {
    fn reduce(&self, evals: &[PointEval], _v_hat: f64) -> Reduced {
        let r: Vec<f64> = evals.iter().zip(&self.labels).zip(&self.scales).map(|((e, y), s)| s * (e.phi - y)).collect();
        // Derivative of the norm with respect to each scaled residual.
        let (norm, mut d_r): (f64, Vec<f64>) = match self.p {
            PNorm::Infinity => {
                let mut k = 0;
                for i in 1..r.len() {
                    if r[i].abs() > r[k].abs() {
                        k = i;
                    }
                }
                let mut d = vec![0.0; r.len()];
                d[k] = r[k].signum();
                (r[k].abs(), d)
            }
            PNorm::Finite(p) if p == 2.0 && self.squared => {
                let value = r.iter().map(|v| v * v).sum::<f64>() / self.denom;
                let d: Vec<f64> = r.iter().map(|v| 2.0 * v / self.denom).collect();
                let scaled = d_scaled(&d, &self.scales);
                return Reduced { value, d_phi: scaled, d_laplacian: Vec::new(), d_v_hat: 0.0 };
            }
            PNorm::Finite(p) => {
                let mean = r.iter().map(|v| v.abs().powf(p)).sum::<f64>() / self.denom;
                let norm = mean.powf(1.0 / p);
                let d = if norm > 0.0 {
                    r.iter().map(|v| v.signum() * v.abs().powf(p - 1.0) / self.denom * norm.powf(1.0 - p)).collect()
                } else {
                    vec![0.0; r.len()]
                };
                (norm, d)
            }
        };
        let value = if self.squared {
            d_r.iter_mut().for_each(|d| *d *= 2.0 * norm);
            norm * norm
        } else {
            norm
        };
        Reduced { value, d_phi: d_scaled(&d_r, &self.scales), d_laplacian: Vec::new(), d_v_hat: 0.0 }
    }
}

fn d_scaled(d_r: &[f64], scales: &[f64]) -> Vec<f64> {
    d_r.iter().zip(scales).map(|(d, s)| d * s).collect()
}

/// Evaluate a field (value and Laplacian) at points.
pub fn sample_field(field: &dyn ScalarField, points: &[Point], laplacian: bool) -> Vec<PointEval> {
    points
        .iter()
        .map(|p| PointEval {
            phi: field.eval(p[0], p[1]),
            laplacian: if laplacian { field.laplacian(p[0], p[1]) } else { 0.0 },
        })
        .collect()
}

pub fn loss_data(field: &dyn ScalarField, m: &MeasurementSet, p: PNorm) -> Result<f64> {
    let misfit = DataMisfit::homoscedastic(&m.labels, p, false)?;
    Ok(misfit.reduce(&sample_field(field, &m.points, false), 0.0).value)
}

pub fn loss_data_hetero(field: &dyn ScalarField, m: &MeasurementSet, p: PNorm) -> Result<f64> {
    let deltas =
        m.deltas.as_ref().ok_or_else(|| Error::Config("measurement set has no per-point noise scales".into()))?;
    let misfit = DataMisfit::heteroscedastic(&m.labels, deltas, p, false)?;
    Ok(misfit.reduce(&sample_field(field, &m.points, false), 0.0).value)
}

pub fn loss_pde(field: &dyn ScalarField, interior: &[Point]) -> Result<f64> {
    if interior.is_empty() {
        return Err(Error::Config("empty interior point set".into()));
    }
    Ok(PdeResidual.reduce(&sample_field(field, interior, true), 0.0).value)
}

pub fn loss_bc0(field: &dyn ScalarField, grounded: &[Point]) -> Result<f64> {
    if grounded.is_empty() {
        return Err(Error::Config("empty grounded point set".into()));
    }
    Ok(BoundaryMatch::GROUNDED.reduce(&sample_field(field, grounded, false), 0.0).value)
}

pub fn loss_bcv(field: &dyn ScalarField, top: &[Point], v_hat: f64) -> Result<f64> {
    if top.is_empty() {
        return Err(Error::Config("empty top point set".into()));
    }
    let r = BoundaryMatch { target: PlateVoltage::Trainable };
    Ok(r.reduce(&sample_field(field, top, false), v_hat).value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{AnalyticField, ConstantField};

    fn set(points: Vec<Point>, labels: Vec<f64>) -> MeasurementSet {
        MeasurementSet { points, labels, delta: 0.1, deltas: None }
    }

    fn pts(n: usize) -> Vec<Point> {
        (0..n).map(|i| [i as f64 * 0.1, -(i as f64) * 0.05]).collect()
    }

    #[test]
    fn data_loss_hand_values() {
        let m = set(pts(4), vec![0.0; 4]);
        assert_eq!(loss_data(&ConstantField(0.0), &m, PNorm::Finite(2.0)).unwrap(), 0.0);
        let v = loss_data(&ConstantField(0.1), &m, PNorm::Finite(2.0)).unwrap();
        assert!((v - (4.0 * 0.01 / 3.0f64).sqrt()).abs() < 1e-12);
        assert!((v - 0.115_470_053_837_925_15).abs() < 1e-12);

        let m = set(pts(4), vec![-0.05, 0.2, -0.1, 0.0]);
        let v = loss_data(&ConstantField(0.0), &m, PNorm::Infinity).unwrap();
        assert_eq!(v, 0.2);
    }

    #[test]
    fn data_loss_needs_two_points() {
        let m = set(pts(1), vec![0.0]);
        assert!(matches!(loss_data(&ConstantField(0.0), &m, PNorm::Finite(2.0)), Err(Error::Config(_))));
        assert!(loss_data(&ConstantField(0.0), &m, PNorm::Infinity).is_ok());
    }

    #[test]
    fn hetero_hand_values() {
        let mut m = set(pts(2), vec![0.0, 0.0]);
        m.deltas = Some(vec![0.1, 0.1]);
        let field = AnalyticField::new(|x, _| if x == 0.0 { 0.1 } else { 0.3 }, |_, _| 0.0);
        let v = loss_data_hetero(&field, &m, PNorm::Finite(2.0)).unwrap();
        assert!((v - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(loss_data_hetero(&ConstantField(0.0), &m, PNorm::Finite(2.0)).unwrap(), 0.0);

        m.deltas = Some(vec![0.2, 0.5]);
        let unit = AnalyticField::new(|x, _| if x == 0.0 { 0.2 } else { 0.5 }, |_, _| 0.0);
        assert!((loss_data_hetero(&unit, &m, PNorm::Finite(2.0)).unwrap() - 1.0).abs() < 1e-12);

        m.deltas = Some(vec![0.1, 0.0]);
        assert!(loss_data_hetero(&unit, &m, PNorm::Finite(2.0)).is_err());
    }

    #[test]
    fn hetero_and_homo_agree_on_zero_and_order() {
        let mut m = set(pts(4), vec![0.0; 4]);
        m.deltas = Some(vec![0.1; 4]);
        let homo = |c: f64| loss_data(&ConstantField(c), &m, PNorm::Finite(2.0)).unwrap();
        let het = |c: f64| loss_data_hetero(&ConstantField(c), &m, PNorm::Finite(2.0)).unwrap();
        assert_eq!(homo(0.0), 0.0);
        assert_eq!(het(0.0), 0.0);
        let scales = [0.01, 0.05, 0.2, 1.0];
        for w in scales.windows(2) {
            assert!(homo(w[0]) < homo(w[1]));
            assert!(het(w[0]) < het(w[1]));
        }
    }

    #[test]
    fn pde_loss_on_analytic_fields() {
        let interior = pts(50);
        let harmonic = AnalyticField::new(|x, y| x * x - y * y, |_, _| 0.0);
        assert!(loss_pde(&harmonic, &interior).unwrap() <= 1e-20);
        let bowl = AnalyticField::new(|x, y| x * x + y * y, |_, _| 4.0);
        assert_eq!(loss_pde(&bowl, &interior).unwrap(), 16.0);

        let wave = AnalyticField::new(|x: f64, y: f64| x.sin() * y, |x: f64, y: f64| -x.sin() * y);
        let mut direct = 0.0;
        for p in &interior {
            direct += (p[0].sin() * p[1]).powi(2);
        }
        direct /= interior.len() as f64;
        assert!((loss_pde(&wave, &interior).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn boundary_losses() {
        let b = pts(10);
        assert_eq!(loss_bc0(&ConstantField(0.0), &b).unwrap(), 0.0);
        assert_eq!(loss_bcv(&ConstantField(0.0), &b, 0.0).unwrap(), 0.0);
        assert_eq!(loss_bc0(&ConstantField(1.0), &b).unwrap(), 1.0);
        assert_eq!(loss_bcv(&ConstantField(1.0), &b, 1.0).unwrap(), 0.0);
        assert_eq!(loss_bcv(&ConstantField(0.5), &b, 1.0).unwrap(), 0.25);
        assert!(loss_bc0(&ConstantField(0.0), &[]).is_err());
    }

    #[test]
    fn measurements_noise() {
        let truth = AnalyticField::new(|x, y| x + 2.0 * y, |_, _| 0.0);
        let points = pts(5);
        let exact = make_measurements(&truth, &points, 0.0, 3);
        for (p, l) in points.iter().zip(&exact.labels) {
            assert_eq!(*l, p[0] + 2.0 * p[1]);
        }
        let a = make_measurements(&truth, &points, 0.1, 3);
        assert_eq!(a, make_measurements(&truth, &points, 0.1, 3));
        assert_ne!(a.labels, exact.labels);

        let many = vec![[0.0, 0.0]; 100_000];
        let m = make_measurements(&ConstantField(0.0), &many, 0.1, 8);
        let mean = m.labels.iter().sum::<f64>() / m.labels.len() as f64;
        let var = m.labels.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (m.labels.len() - 1) as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.002, "std {}", var.sqrt());
    }

    #[test]
    fn norm_parsing() {
        assert_eq!("2".parse::<PNorm>().unwrap(), PNorm::Finite(2.0));
        assert_eq!("inf".parse::<PNorm>().unwrap(), PNorm::Infinity);
        assert!("0.5".parse::<PNorm>().is_err());
        assert!("abc".parse::<PNorm>().is_err());
    }
}
