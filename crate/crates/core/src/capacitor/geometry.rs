use std::f64::consts::PI;

use crate::autodiff::Point;
use crate::error::{Error, Result};

/// Margin keeping "interior" points strictly away from the boundary curves.
pub const INTERIOR_MARGIN: f64 = 1e-9;

fn check_x(x: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("x = {x} outside [-1, 1]")))
    }
}

/// Upper (driven) plate: `−sin(πx) + 0.2`.
pub fn f_upper(x: f64) -> Result<f64> {
    check_x(x)?;
    Ok(upper_curve(x))
}

/// Lower (grounded) plate: `exp(−(x+0.5)²/0.2)·(1−x²) − 1`.
pub fn f_lower(x: f64) -> Result<f64> {
    check_x(x)?;
    Ok(lower_curve(x))
}

fn upper_curve(x: f64) -> f64 {
    -(PI * x).sin() + 0.2
}

fn lower_curve(x: f64) -> f64 {
    let s = x + 0.5;
    (-s * s / 0.2).exp() * (1.0 - x * x) - 1.0
}

/// Region between two plates over `x ∈ [−1, 1]`; sides at `x = ±1` close it.
#[derive(Debug, Clone, Copy)]
pub struct DomainGeometry {
    upper: fn(f64) -> f64,
    lower: fn(f64) -> f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl DomainGeometry {
    pub const X_MIN: f64 = -1.0;
    pub const X_MAX: f64 = 1.0;

    /// Checks `upper > lower` on a 1,000-point grid over the open x-interval.
    pub fn new(upper: fn(f64) -> f64, lower: fn(f64) -> f64) -> Result<Self> {
        let n = 1000;
        let mut y_min = lower(Self::X_MIN).min(lower(Self::X_MAX));
        let mut y_max = upper(Self::X_MIN).max(upper(Self::X_MAX));
        for i in 1..=n {
            let x = Self::X_MIN + (Self::X_MAX - Self::X_MIN) * i as f64 / (n + 1) as f64;
            let (u, l) = (upper(x), lower(x));
            if !(u > l) {
                return Err(Error::Config(format!("plates touch or cross at x = {x}")));
            }
            y_min = y_min.min(l);
            y_max = y_max.max(u);
        }
        Ok(Self { upper, lower, y_min, y_max })
    }

    pub fn capacitor() -> Self {
        Self::new(upper_curve, lower_curve).expect("capacitor plates are separated")
    }

    pub fn upper(&self, x: f64) -> f64 {
        (self.upper)(x)
    }

    pub fn lower(&self, x: f64) -> f64 {
        (self.lower)(x)
    }

    /// Gap between the plates at `x`.
    pub fn height(&self, x: f64) -> f64 {
        self.upper(x) - self.lower(x)
    }

    /// Strict interior test with [`INTERIOR_MARGIN`].
    pub fn contains(&self, p: Point) -> bool {
        let [x, y] = p;
        x > Self::X_MIN + INTERIOR_MARGIN
            && x < Self::X_MAX - INTERIOR_MARGIN
            && y > self.lower(x) + INTERIOR_MARGIN
            && y < self.upper(x) - INTERIOR_MARGIN
    }

    pub fn box_area(&self) -> f64 {
        (Self::X_MAX - Self::X_MIN) * (self.y_max - self.y_min)
    }

    /// Arc length of the lower plate from a fine polyline.
    pub fn lower_arc_table(&self, segments: usize) -> Vec<(f64, f64)> {
        let mut table = Vec::with_capacity(segments + 1);
        let mut s = 0.0;
        let mut prev = (Self::X_MIN, self.lower(Self::X_MIN));
        table.push((Self::X_MIN, 0.0));
        for i in 1..=segments {
            let x = Self::X_MIN + (Self::X_MAX - Self::X_MIN) * i as f64 / segments as f64;
            let y = self.lower(x);
            s += ((x - prev.0).powi(2) + (y - prev.1).powi(2)).sqrt();
            table.push((x, s));
            prev = (x, y);
        }
        table
    }
}
