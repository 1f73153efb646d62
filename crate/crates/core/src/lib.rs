//! Floquet instability of time-periodic wave equations, distinguished
//! geodesics of target manifolds and the resulting small-data blow-up
//! construction for wave maps.

// `!(x > 0.0)` is how NaN is rejected; tabulated constants keep every digit
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::needless_range_loop)]

pub mod blowup;
pub mod cli;
pub mod coeffs;
pub mod error;
pub mod floquet;
pub mod geometry;
pub mod io;
pub mod ode;
pub mod pdesim;
pub mod quad;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};
