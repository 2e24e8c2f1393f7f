use std::ops::{Add, Mul, Neg, Sub};

use super::activation::Activation;

/// Truncated second-order Taylor expansion along one direction `s`:
/// value, first and second directional derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Taylor2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Taylor2 {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    pub const fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    /// Coordinate `x_k` of the input, seen along direction `s`: (x_k, s_k, 0).
    pub const fn variable(v: f64, direction: f64) -> Self {
        Self { v, d1: direction, d2: 0.0 }
    }

    /// Elementwise `σ(self)` by composition: (σ(v), σ′·d1, σ″·d1² + σ′·d2).
    pub fn activate(self, act: Activation) -> Self {
        let d = act.derivs(self.v);
        Self { v: d.value, d1: d.d1 * self.d1, d2: d.d2 * self.d1 * self.d1 + d.d1 * self.d2 }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

impl Add for Taylor2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.v + rhs.v, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl Sub for Taylor2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.v - rhs.v, self.d1 - rhs.d1, self.d2 - rhs.d2)
    }
}

impl Neg for Taylor2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d1, -self.d2)
    }
}

impl Mul for Taylor2 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.v * rhs.v,
            self.d1 * rhs.v + self.v * rhs.d1,
            self.d2 * rhs.v + 2.0 * self.d1 * rhs.d1 + self.v * rhs.d2,
        )
    }
}

impl Mul<f64> for Taylor2 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.v * rhs, self.d1 * rhs, self.d2 * rhs)
    }
}

impl Add<f64> for Taylor2 {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        Self::new(self.v + rhs, self.d1, self.d2)
    }
}
