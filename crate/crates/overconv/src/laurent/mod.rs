//! Two-layer Laurent series: T-Laurent coefficients under a π-Laurent series.

mod coeff;
mod series;

pub use coeff::{texp, CoeffElement, TExp, TMap};
pub use series::{SeriesElement, Var};
