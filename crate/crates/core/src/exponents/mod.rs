//! Numerical evaluation of random-coding error exponents.
//!
//! All evaluators work with the `Delta`, `epsilon` margins of the finite-length
//! construction set to zero. Outer minimizations are non-convex and solved by
//! multi-start local search, so reported minima are upper bounds.

mod closed;
mod fixed;
mod inner;
mod minmaxmin;
mod objective;
mod optimize;

pub use closed::{
    identification_capacity, identification_capacity_curve, low_rate_linearity_check,
    zero_rate_closed_forms, CapacityResult, LinearityReport, LinearityRow, ZeroRateForms,
};
pub use fixed::{
    exponent_curve, exponent_dd, exponent_fixed_mapping, exponent_pair, ExponentOptions,
    ExponentResult, StartPoint,
};
pub use inner::{inner_divergence_min, InnerSolution, DEFAULT_INNER_MAX_ITER, DEFAULT_INNER_TOL};
pub use minmaxmin::{exponent_minmaxmin, MappingRow, MinMaxMinResult};
pub use objective::{ContinuousMapping, MappingFn, ObjectiveTerms, RateRule};

pub(crate) use inner::inner_min_flat;
