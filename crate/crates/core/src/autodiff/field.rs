/// Anything that can be evaluated over the plane together with its Laplacian.
pub trait ScalarField {
    fn eval(&self, x: f64, y: f64) -> f64;
    fn laplacian(&self, x: f64, y: f64) -> f64;
}

/// A field given by closed-form value and Laplacian.
pub struct AnalyticField<F, L> {
    value: F,
    lap: L,
}

impl<F, L> AnalyticField<F, L>
where
    F: Fn(f64, f64) -> f64,
    L: Fn(f64, f64) -> f64,
{
    pub fn new(value: F, lap: L) -> Self {
        Self { value, lap }
    }
}

impl<F, L> ScalarField for AnalyticField<F, L>
where
    F: Fn(f64, f64) -> f64,
    L: Fn(f64, f64) -> f64,
{
    fn eval(&self, x: f64, y: f64) -> f64 {
        (self.value)(x, y)
    }

    fn laplacian(&self, x: f64, y: f64) -> f64 {
        (self.lap)(x, y)
    }
}

/// A constant field. Harmonic.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub f64);

impl ScalarField for ConstantField {
    fn eval(&self, _x: f64, _y: f64) -> f64 {
        self.0
    }

    fn laplacian(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }
}

/// `base + offset`, handy for metric checks.
pub struct Shifted<'a, F: ScalarField + ?Sized> {
    pub base: &'a F,
    pub offset: f64,
}

impl<F: ScalarField + ?Sized> ScalarField for Shifted<'_, F> {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.base.eval(x, y) + self.offset
    }

    fn laplacian(&self, x: f64, y: f64) -> f64 {
        self.base.laplacian(x, y)
    }
}
