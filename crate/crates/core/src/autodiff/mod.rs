//! Differentiation engine for small dense networks over the plane.
//!
//! Spatial derivatives come from second-order Taylor (jet) propagation
//! along the coordinate axes; parameter gradients come from a reverse
//! pass over the recorded jet computation.

mod activation;
mod engine;
mod field;
mod mlp;
mod taylor;

pub use activation::{gelu, gelu_d1, gelu_d2, normal_cdf, normal_pdf, Activation, Derivs};
pub use engine::{evaluate_points, param_gradient, LossGradient, LossTerm, Point, PointEval, Reduced, Reduction};
pub use field::{AnalyticField, ConstantField, ScalarField, Shifted};
pub use mlp::{forward, init_params, laplacian, mlp_eval, mlp_taylor2, Layout, MlpSpec, NetworkField, ParamVector};
pub use taylor::Taylor2;
