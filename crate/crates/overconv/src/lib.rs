//! Exact, truncated computations with overconvergent Laurent series over
//! `Z/p^M`: Frobenius and its trace, Eisenstein uniformizers, Milnor symbols
//! and their logarithmic forms, the iterated logarithmic derivative, and
//! evaluation into cyclotomic layers.

pub mod cli;
pub mod config;
pub mod cyclo;
pub mod eisenstein;
pub mod error;
pub mod frobenius;
pub mod json;
pub mod kforms;
pub mod laurent;
pub mod logderiv;
pub mod overconvergence;
pub mod padic;
pub mod suite;

/// Largest supported dimension; `n - 1` T-variables are stored inline.
pub const MAX_N: usize = 5;

pub use config::{Ctx, RunConfig, Window};
pub use error::{Error, Result};
pub use laurent::{CoeffElement, SeriesElement, TExp, TMap, Var};
pub use padic::{PadicScalar, PrimeConfig, Valuation};
