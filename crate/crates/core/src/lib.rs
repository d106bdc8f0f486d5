//! Numerical laboratory for critical-exponent equations
//! `Δ_g u + h u = f u^{(n+2)/(n-2)}` on model manifolds.

pub mod blowup;
pub mod elliptic;
pub mod error;
pub mod functional;
pub mod green;
pub mod jet;
pub mod manifold;
pub mod quad;
pub mod search;
pub mod testfn;

pub use error::{Error, Result};
pub use manifold::{Field, ManifoldKind, ManifoldModel, Point};
