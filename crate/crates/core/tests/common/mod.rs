//! Helpers shared by the integration tests.
#![allow(dead_code)]

use qpgd::autodiff::{init_params, param_gradient, Activation, LossTerm, MlpSpec, Point};
use qpgd::capacitor::{sample_boundary, sample_interior, DomainGeometry};

pub const H: f64 = 1e-6;

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-5 * a.abs().max(b.abs()) + 1e-8
}

/// First coordinate where the analytic gradient leaves the tolerance, if any.
pub fn fd_mismatch(spec: &MlpSpec, params: &[f64], terms: &[LossTerm<'_>]) -> Option<String> {
    let analytic = param_gradient(spec, params, terms).unwrap();
    let loss = |p: &[f64]| param_gradient(spec, p, terms).unwrap().value;
    let mut p = params.to_vec();
    for i in 0..params.len() {
        p[i] = params[i] + H;
        let up = loss(&p);
        p[i] = params[i] - H;
        let down = loss(&p);
        p[i] = params[i];
        let fd = (up - down) / (2.0 * H);
        let a = analytic.grad[i];
        if !close(a, fd) {
            return Some(format!("component {i} analytic {a} vs fd {fd}"));
        }
    }
    None
}

pub fn fd_check(label: &str, spec: &MlpSpec, params: &[f64], terms: &[LossTerm<'_>]) {
    if let Some(m) = fd_mismatch(spec, params, terms) {
        panic!("{label}: {m}");
    }
}

pub fn nets() -> Vec<MlpSpec> {
    let mut out = Vec::new();
    let shapes: [&[usize]; 7] = [&[1], &[3], &[5, 4], &[8, 8], &[16], &[4, 6, 5], &[32, 32, 32]];
    for act in [Activation::Gelu, Activation::Tanh, Activation::Sigmoid] {
        for s in shapes {
            out.push(MlpSpec::planar(s.to_vec(), act).unwrap());
        }
    }
    out
}

pub fn perturbed(spec: &MlpSpec, seed: u64) -> Vec<f64> {
    let mut p = init_params(spec, seed).into_vec();
    // nonzero biases and voltage so every path is exercised
    let n = p.len();
    for (i, v) in p.iter_mut().enumerate() {
        *v += 0.05 * ((i as f64 * 0.7 + seed as f64).sin());
    }
    p[n - 1] = 0.8;
    p
}

pub fn points(seed: u64) -> (Vec<Point>, Vec<Point>, Vec<Point>) {
    let g = DomainGeometry::capacitor();
    let interior = sample_interior(&g, 40, seed).unwrap();
    let b = sample_boundary(&g, 12, 8, seed + 1).unwrap();
    (interior, b.grounded, b.top)
}
