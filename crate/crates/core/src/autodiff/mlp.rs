//! Dense MLP description, flat parameter layout and the reference
//! (point-at-a-time) forward passes.
//!
//! Parameters live in one flat vector: every layer's weight matrix
//! (row-major, `out × in`) in layer order, then every layer's bias vector
//! in layer order, then one trailing slot for the trainable boundary
//! voltage. The voltage slot is never read by the network itself.

use std::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::Activation;
use super::field::ScalarField;
use super::taylor::Taylor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, output_dim: usize, activation: Activation) -> Result<Self> {
        let spec = Self { input_dim, hidden_widths, output_dim, activation };
        spec.validate()?;
        Ok(spec)
    }

    /// The case-study shape: (x, y) in, φ out.
    pub fn planar(hidden_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        Self::new(2, hidden_widths, 1, activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input and output dims must be positive".into()));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::Config("at least one hidden layer is required".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Layer widths including input and output: `[in, h1, .., hk, out]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.output_dim);
        dims
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.dims())
    }

    pub fn n_params(&self) -> usize {
        self.layout().len
    }

    /// Compact textual form used in checkpoints: `2 32,32,32 1 gelu`.
    pub fn describe(&self) -> String {
        let widths: Vec<String> = self.hidden_widths.iter().map(|w| w.to_string()).collect();
        format!("{} {} {} {}", self.input_dim, widths.join(","), self.output_dim, self.activation)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!("bad network description '{text}'")));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad count '{s}' in '{text}'")));
        let hidden = parts[1].split(',').map(num).collect::<Result<Vec<_>>>()?;
        Self::new(num(parts[0])?, hidden, num(parts[2])?, parts[3].parse()?)
    }
}

/// Offsets of every layer's weights and biases inside a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub dims: Vec<usize>,
    pub weight_offsets: Vec<usize>,
    pub bias_offsets: Vec<usize>,
    pub v_hat: usize,
    pub len: usize,
}

impl Layout {
    fn new(dims: &[usize]) -> Self {
        let mut weight_offsets = Vec::with_capacity(dims.len() - 1);
        let mut offset = 0;
        for w in dims.windows(2) {
            weight_offsets.push(offset);
            offset += w[0] * w[1];
        }
        let mut bias_offsets = Vec::with_capacity(dims.len() - 1);
        for &out in &dims[1..] {
            bias_offsets.push(offset);
            offset += out;
        }
        Self { dims: dims.to_vec(), weight_offsets, bias_offsets, v_hat: offset, len: offset + 1 }
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Row-major `out × in` weight block of layer `l`.
    pub fn weights<'a>(&self, params: &'a [f64], l: usize) -> &'a [f64] {
        let off = self.weight_offsets[l];
        &params[off..off + self.dims[l] * self.dims[l + 1]]
    }

    pub fn biases<'a>(&self, params: &'a [f64], l: usize) -> &'a [f64] {
        let off = self.bias_offsets[l];
        &params[off..off + self.dims[l + 1]]
    }
}

/// Flat vector of every trainable scalar, network first, voltage last.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        Self(vec![0.0; spec.n_params()])
    }

    pub fn v_hat(&self) -> f64 {
        *self.0.last().expect("parameter vector is never empty")
    }

    pub fn set_v_hat(&mut self, v: f64) {
        *self.0.last_mut().expect("parameter vector is never empty") = v;
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn check(&self, spec: &MlpSpec) -> Result<()> {
        check_len(&self.0, spec)
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub(crate) fn check_len(params: &[f64], spec: &MlpSpec) -> Result<()> {
    let expected = spec.n_params();
    if params.len() != expected {
        return Err(Error::LengthMismatch { expected, got: params.len() });
    }
    Ok(())
}

/// Xavier-uniform weights, zero biases, zero voltage.
pub fn init_params(spec: &MlpSpec, seed: u64) -> ParamVector {
    let layout = spec.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; layout.len];
    for l in 0..layout.n_layers() {
        let (fan_in, fan_out) = (layout.dims[l], layout.dims[l + 1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let off = layout.weight_offsets[l];
        for w in &mut values[off..off + fan_in * fan_out] {
            *w = rng.random_range(-bound..bound);
        }
    }
    ParamVector(values)
}

/// Plain forward pass for any input/output width.
pub fn forward(params: &[f64], spec: &MlpSpec, input: &[f64]) -> Result<Vec<f64>> {
    check_len(params, spec)?;
    if input.len() != spec.input_dim {
        return Err(Error::LengthMismatch { expected: spec.input_dim, got: input.len() });
    }
    let layout = spec.layout();
    let last = layout.n_layers() - 1;
    let mut h = input.to_vec();
    for l in 0..=last {
        let w = layout.weights(params, l);
        let b = layout.biases(params, l);
        let n_in = layout.dims[l];
        let mut z: Vec<f64> = b
            .iter()
            .enumerate()
            .map(|(j, &bj)| bj + w[j * n_in..(j + 1) * n_in].iter().zip(&h).map(|(a, x)| a * x).sum::<f64>())
            .collect();
        if l < last {
            z.iter_mut().for_each(|v| *v = spec.activation.apply(*v));
        }
        h = z;
    }
    Ok(h)
}

/// φ(x, y; θ) for a planar network.
pub fn mlp_eval(params: &[f64], spec: &MlpSpec, x: f64, y: f64) -> Result<f64> {
    Ok(forward(params, spec, &[x, y])?[0])
}

/// (φ, ∂φ/∂s, ∂²φ/∂s²) of the first output along `direction`.
pub fn mlp_taylor2(params: &[f64], spec: &MlpSpec, point: &[f64], direction: &[f64]) -> Result<Taylor2> {
    check_len(params, spec)?;
    if point.len() != spec.input_dim || direction.len() != spec.input_dim {
        return Err(Error::LengthMismatch { expected: spec.input_dim, got: point.len().min(direction.len()) });
    }
    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("direction must be a unit vector (norm {norm})")));
    }
    let layout = spec.layout();
    let last = layout.n_layers() - 1;
    let mut h: Vec<Taylor2> = point.iter().zip(direction).map(|(&p, &s)| Taylor2::variable(p, s)).collect();
    for l in 0..=last {
        let w = layout.weights(params, l);
        let b = layout.biases(params, l);
        let n_in = layout.dims[l];
        let mut z: Vec<Taylor2> = b
            .iter()
            .enumerate()
            .map(|(j, &bj)| {
                w[j * n_in..(j + 1) * n_in].iter().zip(&h).fold(Taylor2::constant(bj), |acc, (&a, t)| acc + *t * a)
            })
            .collect();
        if l < last {
            z.iter_mut().for_each(|t| *t = t.activate(spec.activation));
        }
        h = z;
    }
    Ok(h[0])
}

/// ∇²φ at (x, y) as the sum of second derivatives along both axes.
pub fn laplacian(params: &[f64], spec: &MlpSpec, x: f64, y: f64) -> Result<f64> {
    let dxx = mlp_taylor2(params, spec, &[x, y], &[1.0, 0.0])?.d2;
    let dyy = mlp_taylor2(params, spec, &[x, y], &[0.0, 1.0])?.d2;
    Ok(dxx + dyy)
}

/// A planar network viewed as a field over (x, y).
#[derive(Debug, Clone, Copy)]
pub struct NetworkField<'a> {
    pub spec: &'a MlpSpec,
    pub params: &'a [f64],
}

impl<'a> NetworkField<'a> {
    pub fn new(spec: &'a MlpSpec, params: &'a [f64]) -> Result<Self> {
        check_len(params, spec)?;
        if spec.input_dim != 2 || spec.output_dim != 1 {
            return Err(Error::Config("a field needs a 2-in, 1-out network".into()));
        }
        Ok(Self { spec, params })
    }
}

impl ScalarField for NetworkField<'_> {
    fn eval(&self, x: f64, y: f64) -> f64 {
        mlp_eval(self.params, self.spec, x, y).expect("length checked at construction")
    }

    fn laplacian(&self, x: f64, y: f64) -> f64 {
        laplacian(self.params, self.spec, x, y).expect("length checked at construction")
    }
}
