//! Smooth activations with derivatives up to third order.
//!
//! The jet forward pass needs σ, σ′, σ″ and its reverse pass needs σ‴,
//! so every activation exposes all four through [`Activation::derivs`].

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Gelu,
    Tanh,
    Sigmoid,
}

/// Values of (σ, σ′, σ″, σ‴) at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivs {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    #[inline]
    pub fn derivs(self, x: f64) -> Derivs {
        match self {
            Activation::Gelu => {
                let cdf = normal_cdf(x);
                let pdf = normal_pdf(x);
                Derivs { value: x * cdf, d1: cdf + x * pdf, d2: (2.0 - x * x) * pdf, d3: (x * x * x - 4.0 * x) * pdf }
            }
            Activation::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                Derivs { value: t, d1: s, d2: -2.0 * t * s, d3: s * (6.0 * t * t - 2.0) }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                let q = s * (1.0 - s);
                Derivs { value: s, d1: q, d2: q * (1.0 - 2.0 * s), d3: q * (1.0 - 6.0 * s + 6.0 * s * s) }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gelu" => Ok(Activation::Gelu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Standard normal CDF, via `erfc` so the left tail keeps full relative precision.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Exact GELU, `x·Φ(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

#[inline]
pub fn gelu_d1(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

/// `2φ(x) + x·φ′(x)` with `φ′(x) = −x·φ(x)`.
#[inline]
pub fn gelu_d2(x: f64) -> f64 {
    (2.0 - x * x) * normal_pdf(x)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Φ(x) = ½ + φ(x)·Σ x^(2n+1)/(1·3·5···(2n+1)); converges for all x,
    /// used here only for moderate |x|.
    fn cdf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 1.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            n += 2.0;
            term *= x * x / n;
            sum += term;
        }
        0.5 + normal_pdf(x) * sum
    }

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        let expected = cdf_series(1.0);
        assert!((expected - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((gelu(1.0) - expected).abs() < 1e-15);
        assert!(gelu(-10.0).abs() < 1e-8);
    }

    #[test]
    fn cdf_matches_series() {
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            assert!((normal_cdf(x) - cdf_series(x)).abs() < 1e-14, "x = {x}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for act in [Activation::Gelu, Activation::Tanh, Activation::Sigmoid] {
            for i in -30..=30 {
                let x = i as f64 * 0.13;
                let d = act.derivs(x);
                let dp = act.derivs(x + h);
                let dm = act.derivs(x - h);
                assert!((d.value - act.apply(x)).abs() < 1e-15);
                assert!((d.d1 - (dp.value - dm.value) / (2.0 * h)).abs() < 1e-8, "{act} d1 at {x}");
                assert!((d.d2 - (dp.d1 - dm.d1) / (2.0 * h)).abs() < 1e-8, "{act} d2 at {x}");
                assert!((d.d3 - (dp.d2 - dm.d2) / (2.0 * h)).abs() < 1e-8, "{act} d3 at {x}");
            }
        }
    }

    #[test]
    fn gelu_helpers_agree_with_derivs() {
        for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let d = Activation::Gelu.derivs(x);
            assert_eq!(gelu(x), d.value);
            assert_eq!(gelu_d1(x), d.d1);
            assert_eq!(gelu_d2(x), d.d2);
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("GELU".parse::<Activation>().unwrap(), Activation::Gelu);
        assert!("relu".parse::<Activation>().is_err());
    }
}
