pub mod autodiff;
pub mod capacitor;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod optimizer;

pub use error::{Error, Result};
