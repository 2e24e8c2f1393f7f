use std::io::Write;

use super::geometry::DomainGeometry;
use crate::autodiff::{evaluate_points, MlpSpec, Point, ScalarField};
use crate::error::Result;

pub const DEFAULT_GRID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub v_hat: f64,
    pub avg_abs_error_interior: f64,
    pub avg_abs_laplacian: f64,
    pub n_points: usize,
}

/// Nodes of a `resolution × resolution` grid over the bounding box that
/// fall strictly inside the domain.
pub fn grid_points(geom: &DomainGeometry, resolution: usize) -> Vec<Point> {
    let res = resolution.max(2);
    let step_x = (DomainGeometry::X_MAX - DomainGeometry::X_MIN) / (res - 1) as f64;
    let step_y = (geom.y_max - geom.y_min) / (res - 1) as f64;
    let mut points = Vec::new();
    for j in 0..res {
        let y = geom.y_min + j as f64 * step_y;
        for i in 0..res {
            let p = [DomainGeometry::X_MIN + i as f64 * step_x, y];
            if geom.contains(p) {
                points.push(p);
            }
        }
    }
    points
}

/// Field, Laplacian and reference values on a point grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSample {
    pub points: Vec<Point>,
    pub phi: Vec<f64>,
    pub laplacian: Vec<f64>,
    pub truth: Vec<f64>,
}

impl GridSample {
    pub fn from_fields(field: &dyn ScalarField, truth: &dyn ScalarField, points: Vec<Point>) -> Self {
        let phi = points.iter().map(|p| field.eval(p[0], p[1])).collect();
        let laplacian = points.iter().map(|p| field.laplacian(p[0], p[1])).collect();
        let truth = points.iter().map(|p| truth.eval(p[0], p[1])).collect();
        Self { points, phi, laplacian, truth }
    }

    /// Batched evaluation of a trained network against a reference network.
    pub fn from_networks(
        spec: &MlpSpec,
        params: &[f64],
        truth_spec: &MlpSpec,
        truth_params: &[f64],
        points: Vec<Point>,
    ) -> Result<Self> {
        let evals = evaluate_points(spec, params, &points, true)?;
        let reference = evaluate_points(truth_spec, truth_params, &points, false)?;
        Ok(Self {
            phi: evals.iter().map(|e| e.phi).collect(),
            laplacian: evals.iter().map(|e| e.laplacian).collect(),
            truth: reference.iter().map(|e| e.phi).collect(),
            points,
        })
    }

    pub fn metrics(&self, v_hat: f64) -> Metrics {
        let n = self.points.len().max(1) as f64;
        Metrics {
            v_hat,
            avg_abs_error_interior: self.phi.iter().zip(&self.truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / n,
            avg_abs_laplacian: self.laplacian.iter().map(|l| l.abs()).sum::<f64>() / n,
            n_points: self.points.len(),
        }
    }

    /// `x,y,phi,laplacian,error` rows.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["x", "y", "phi", "laplacian", "error"])?;
        for (i, p) in self.points.iter().enumerate() {
            w.write_record([
                p[0].to_string(),
                p[1].to_string(),
                self.phi[i].to_string(),
                self.laplacian[i].to_string(),
                (self.phi[i] - self.truth[i]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Table metrics of `field` against `truth` on the masked grid.
pub fn metrics(
    field: &dyn ScalarField,
    truth: &dyn ScalarField,
    geom: &DomainGeometry,
    resolution: usize,
    v_hat: f64,
) -> Metrics {
    GridSample::from_fields(field, truth, grid_points(geom, resolution)).metrics(v_hat)
}
