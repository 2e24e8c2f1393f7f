//! Batched jet evaluation and exact parameter gradients for planar MLPs.
//!
//! Points are processed in fixed-size chunks. Each chunk pushes five
//! stacked channels through the network: the value, and (first, second)
//! directional derivatives along x and along y. A chunk's rows are
//! channel-major, so every dense layer is one matrix product over all
//! channels. The forward pass records pre-activations and activation
//! derivatives per hidden layer; the reverse pass replays that record
//! to accumulate parameter cotangents.
//!
//! Per-chunk gradients are summed in chunk order, so results do not
//! depend on how many worker threads ran the chunks.

use std::cell::RefCell;

use rayon::prelude::*;

use super::mlp::{check_len, Layout, MlpSpec};
use crate::error::{Error, Result};

pub type Point = [f64; 2];

const CHUNK: usize = 256;

// Channel order inside a chunk when the Laplacian is requested.
const V: usize = 0;
const X1: usize = 1;
const X2: usize = 2;
const Y1: usize = 3;
const Y2: usize = 4;

thread_local! {
    // Chunk buffers are large enough to be served by fresh mappings from the
    // system allocator; reusing them keeps the epoch loop out of the kernel.
    static POOL: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

const POOL_LIMIT: usize = 4096;

fn zeroed(len: usize) -> Vec<f64> {
    match POOL.with(|p| p.borrow_mut().pop()) {
        Some(mut v) => {
            v.clear();
            v.resize(len, 0.0);
            v
        }
        None => vec![0.0; len],
    }
}

fn recycle(v: Vec<f64>) {
    if v.capacity() > 0 {
        POOL.with(|p| {
            let mut p = p.borrow_mut();
            if p.len() < POOL_LIMIT {
                p.push(v);
            }
        });
    }
}

/// Network output and its Laplacian at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointEval {
    pub phi: f64,
    pub laplacian: f64,
}

/// Outer reduction of per-point network outputs (and the voltage slot) to
/// one scalar, together with its partial derivatives.
pub trait Reduction: Sync {
    fn reduce(&self, evals: &[PointEval], v_hat: f64) -> Reduced;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduced {
    pub value: f64,
    pub d_phi: Vec<f64>,
    /// Empty when the reduction never reads the Laplacian.
    pub d_laplacian: Vec<f64>,
    pub d_v_hat: f64,
}

/// One additive piece of a loss: a reduction over a point set, scaled by `weight`.
#[derive(Clone, Copy)]
pub struct LossTerm<'a> {
    pub points: &'a [Point],
    pub needs_laplacian: bool,
    pub weight: f64,
    pub reduction: &'a dyn Reduction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub value: f64,
    /// Unweighted value of each term, in input order.
    pub terms: Vec<f64>,
    pub grad: Vec<f64>,
}

struct HiddenRecord {
    pre: Vec<f64>,
    act: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
}

struct ChunkTape {
    n: usize,
    channels: usize,
    inputs: Vec<f64>,
    hidden: Vec<HiddenRecord>,
}

impl ChunkTape {
    fn recycle(self) {
        recycle(self.inputs);
        for h in self.hidden {
            for v in [h.pre, h.act, h.d1, h.d2, h.d3] {
                recycle(v);
            }
        }
    }
}

/// `c = alpha·a·b + beta·c` with explicit strides; `a` is m×k, `b` is k×n.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len());
        assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: all index extents were checked against the slice lengths above,
    // and `c` is borrowed mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn check_planar(spec: &MlpSpec, params: &[f64]) -> Result<()> {
    check_len(params, spec)?;
    if spec.input_dim != 2 || spec.output_dim != 1 {
        return Err(Error::Config("the batched engine needs a 2-in, 1-out network".into()));
    }
    Ok(())
}

fn forward_chunk(
    layout: &Layout,
    spec: &MlpSpec,
    params: &[f64],
    points: &[Point],
    laplacian: bool,
) -> (ChunkTape, Vec<PointEval>) {
    let n = points.len();
    let channels = if laplacian { 5 } else { 1 };
    let rows = channels * n;

    let mut inputs = zeroed(rows * 2);
    for (i, p) in points.iter().enumerate() {
        inputs[(V * n + i) * 2] = p[0];
        inputs[(V * n + i) * 2 + 1] = p[1];
        if laplacian {
            inputs[(X1 * n + i) * 2] = 1.0;
            inputs[(Y1 * n + i) * 2 + 1] = 1.0;
        }
    }

    let last = layout.n_layers() - 1;
    let mut hidden: Vec<HiddenRecord> = Vec::with_capacity(last);
    let mut outputs = Vec::new();
    for l in 0..=last {
        let (n_in, n_out) = (layout.dims[l], layout.dims[l + 1]);
        let h: &[f64] = if l == 0 { &inputs } else { &hidden[l - 1].act };
        let mut z = zeroed(rows * n_out);
        // Z = H · Wᵀ, W stored out × in row-major.
        gemm(rows, n_in, n_out, h, (n_in, 1), layout.weights(params, l), (1, n_in), 0.0, &mut z, (n_out, 1));
        let bias = layout.biases(params, l);
        for row in z[..n * n_out].chunks_exact_mut(n_out) {
            row.iter_mut().zip(bias).for_each(|(zj, bj)| *zj += bj);
        }

        if l == last {
            outputs = (0..n)
                .map(|i| PointEval {
                    phi: z[V * n + i],
                    laplacian: if laplacian { z[X2 * n + i] + z[Y2 * n + i] } else { 0.0 },
                })
                .collect();
            recycle(z);
            break;
        }

        let width = n * n_out;
        let mut act = zeroed(rows * n_out);
        let mut d1 = zeroed(width);
        let (mut d2, mut d3) = if laplacian { (zeroed(width), zeroed(width)) } else { (Vec::new(), Vec::new()) };
        for k in 0..width {
            let d = spec.activation.derivs(z[k]);
            act[k] = d.value;
            d1[k] = d.d1;
            if laplacian {
                d2[k] = d.d2;
                d3[k] = d.d3;
                for (c1, c2) in [(X1, X2), (Y1, Y2)] {
                    let (s1, s2) = (z[c1 * width + k], z[c2 * width + k]);
                    act[c1 * width + k] = d.d1 * s1;
                    act[c2 * width + k] = d.d2 * s1 * s1 + d.d1 * s2;
                }
            }
        }
        hidden.push(HiddenRecord { pre: z, act, d1, d2, d3 });
    }
    (ChunkTape { n, channels, inputs, hidden }, outputs)
}

fn backward_chunk(layout: &Layout, params: &[f64], tape: &ChunkTape, d_phi: &[f64], d_lap: &[f64]) -> Vec<f64> {
    let (n, channels) = (tape.n, tape.channels);
    let rows = channels * n;
    let mut grad = vec![0.0; layout.len];

    // Cotangent of the output pre-activations (output width is 1).
    let mut zbar = zeroed(rows);
    zbar[..n].copy_from_slice(d_phi);
    if channels == 5 && !d_lap.is_empty() {
        zbar[X2 * n..X2 * n + n].copy_from_slice(d_lap);
        zbar[Y2 * n..Y2 * n + n].copy_from_slice(d_lap);
    }

    for l in (0..layout.n_layers()).rev() {
        let (n_in, n_out) = (layout.dims[l], layout.dims[l + 1]);
        let h: &[f64] = if l == 0 { &tape.inputs } else { &tape.hidden[l - 1].act };

        let w_off = layout.weight_offsets[l];
        gemm(
            n_out,
            rows,
            n_in,
            &zbar,
            (1, n_out),
            h,
            (n_in, 1),
            1.0,
            &mut grad[w_off..w_off + n_in * n_out],
            (n_in, 1),
        );
        let b_off = layout.bias_offsets[l];
        for row in zbar[..n * n_out].chunks_exact(n_out) {
            grad[b_off..b_off + n_out].iter_mut().zip(row).for_each(|(g, z)| *g += z);
        }
        if l == 0 {
            break;
        }

        let mut abar = zeroed(rows * n_in);
        gemm(rows, n_out, n_in, &zbar, (n_out, 1), layout.weights(params, l), (n_in, 1), 0.0, &mut abar, (n_in, 1));

        let rec = &tape.hidden[l - 1];
        let width = n * n_in;
        let mut next = zeroed(rows * n_in);
        if channels == 1 {
            for k in 0..width {
                next[k] = abar[k] * rec.d1[k];
            }
        } else {
            for k in 0..width {
                let (s1, s2, s3) = (rec.d1[k], rec.d2[k], rec.d3[k]);
                let mut zv = abar[V * width + k] * s1;
                for (c1, c2) in [(X1, X2), (Y1, Y2)] {
                    let (g1, g2) = (abar[c1 * width + k], abar[c2 * width + k]);
                    let (t1, t2) = (rec.pre[c1 * width + k], rec.pre[c2 * width + k]);
                    next[c2 * width + k] = g2 * s1;
                    next[c1 * width + k] = g1 * s1 + 2.0 * g2 * s2 * t1;
                    zv += g1 * s2 * t1 + g2 * (s3 * t1 * t1 + s2 * t2);
                }
                next[V * width + k] = zv;
            }
        }
        recycle(abar);
        recycle(std::mem::replace(&mut zbar, next));
    }
    recycle(zbar);
    grad
}

/// φ (and ∇²φ when requested) at every point.
pub fn evaluate_points(spec: &MlpSpec, params: &[f64], points: &[Point], laplacian: bool) -> Result<Vec<PointEval>> {
    check_planar(spec, params)?;
    let layout = spec.layout();
    let parts: Vec<Vec<PointEval>> = points
        .par_chunks(CHUNK)
        .map(|chunk| {
            let (tape, evals) = forward_chunk(&layout, spec, params, chunk, laplacian);
            tape.recycle();
            evals
        })
        .collect();
    Ok(parts.into_iter().flatten().collect())
}

/// Value and exact gradient of `Σ weightₖ · termₖ` with respect to every parameter.
///
/// The voltage slot receives gradient only through the reductions' `d_v_hat`.
pub fn param_gradient(spec: &MlpSpec, params: &[f64], terms: &[LossTerm<'_>]) -> Result<LossGradient> {
    check_planar(spec, params)?;
    let layout = spec.layout();
    let v_hat = params[layout.v_hat];
    let mut grad = vec![0.0; layout.len];
    let mut term_values = Vec::with_capacity(terms.len());
    let mut value = 0.0;

    for term in terms {
        let taped: Vec<(ChunkTape, Vec<PointEval>)> = term
            .points
            .par_chunks(CHUNK)
            .map(|chunk| forward_chunk(&layout, spec, params, chunk, term.needs_laplacian))
            .collect();
        let evals: Vec<PointEval> = taped.iter().flat_map(|(_, e)| e.iter().copied()).collect();
        let reduced = term.reduction.reduce(&evals, v_hat);
        if !reduced.value.is_finite() {
            return Err(Error::NonFinite("loss value".into()));
        }
        term_values.push(reduced.value);
        value += term.weight * reduced.value;

        let scale = |v: &[f64]| v.iter().map(|d| d * term.weight).collect::<Vec<_>>();
        let d_phi = scale(&reduced.d_phi);
        let d_lap = if term.needs_laplacian { scale(&reduced.d_laplacian) } else { Vec::new() };
        let partial: Vec<Vec<f64>> = taped
            .par_iter()
            .enumerate()
            .map(|(c, (tape, _))| {
                let lo = c * CHUNK;
                let lap = if d_lap.is_empty() { &d_lap[..] } else { &d_lap[lo..lo + tape.n] };
                backward_chunk(&layout, params, tape, &d_phi[lo..lo + tape.n], lap)
            })
            .collect();
        for p in &partial {
            grad.iter_mut().zip(p).for_each(|(g, d)| *g += d);
        }
        for (tape, _) in taped {
            tape.recycle();
        }
        grad[layout.v_hat] += term.weight * reduced.d_v_hat;
    }

    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {i}")));
    }
    Ok(LossGradient { value, terms: term_values, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::mlp::{init_params, laplacian, mlp_eval};
    use crate::autodiff::Activation;

    struct SumSquares;
    impl Reduction for SumSquares {
        fn reduce(&self, evals: &[PointEval], _v: f64) -> Reduced {
            Reduced {
                value: evals.iter().map(|e| e.phi * e.phi).sum(),
                d_phi: evals.iter().map(|e| 2.0 * e.phi).collect(),
                d_laplacian: vec![],
                d_v_hat: 0.0,
            }
        }
    }

    #[test]
    fn batched_matches_reference_forward() {
        for act in [Activation::Gelu, Activation::Tanh, Activation::Sigmoid] {
            let spec = MlpSpec::planar(vec![7, 5, 6], act).unwrap();
            let params = init_params(&spec, 3);
            let points: Vec<Point> = (0..600).map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
            let evals = evaluate_points(&spec, &params, &points, true).unwrap();
            let values = evaluate_points(&spec, &params, &points, false).unwrap();
            for ((p, e), v) in points.iter().zip(&evals).zip(&values) {
                let phi = mlp_eval(&params, &spec, p[0], p[1]).unwrap();
                let lap = laplacian(&params, &spec, p[0], p[1]).unwrap();
                assert!((e.phi - phi).abs() <= 1e-13 * phi.abs().max(1.0));
                assert!((v.phi - phi).abs() <= 1e-13 * phi.abs().max(1.0));
                assert!((e.laplacian - lap).abs() <= 1e-12 * lap.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_params_square_loss_gradient() {
        // φ ≡ b_out at zero weights, so only the output bias gets gradient 2·Σφ = 0 at b_out = 0,
        // and 2·N·b_out otherwise.
        let spec = MlpSpec::planar(vec![3], Activation::Gelu).unwrap();
        let layout = spec.layout();
        let mut params = vec![0.0; layout.len];
        let points = [[0.2, 0.1]];
        let term = LossTerm { points: &points, needs_laplacian: false, weight: 1.0, reduction: &SumSquares };
        let g = param_gradient(&spec, &params, &[term]).unwrap();
        assert!(g.grad.iter().all(|&d| d == 0.0));

        params[layout.bias_offsets[1]] = 0.5;
        let g = param_gradient(&spec, &params, &[term]).unwrap();
        for (i, d) in g.grad.iter().enumerate() {
            let expected = if i == layout.bias_offsets[1] { 1.0 } else { 0.0 };
            assert_eq!(*d, expected, "component {i}");
        }
    }

    #[test]
    fn gradient_is_independent_of_chunking_order() {
        let spec = MlpSpec::planar(vec![6, 6], Activation::Gelu).unwrap();
        let params = init_params(&spec, 9);
        let points: Vec<Point> =
            (0..700).map(|i| [((i * 7) % 13) as f64 / 13.0, ((i * 5) % 11) as f64 / 11.0]).collect();
        let term = LossTerm { points: &points, needs_laplacian: false, weight: 1.0, reduction: &SumSquares };
        let a = param_gradient(&spec, &params, &[term]).unwrap();
        let b = param_gradient(&spec, &params, &[term]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_planar() {
        let spec = MlpSpec::new(3, vec![4], 1, Activation::Gelu).unwrap();
        let params = vec![0.0; spec.n_params()];
        assert!(matches!(evaluate_points(&spec, &params, &[[0.0, 0.0]], false), Err(Error::Config(_))));
    }
}
