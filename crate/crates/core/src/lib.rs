//! Variational toolkit for radial asymptotically Euclidean exterior domains
//! with inner boundary: weighted Sobolev calculus, the relative Yamabe
//! invariant and its weighted eigenvalue, conformal curvature transforms,
//! and the prescribed non-positive scalar/mean-curvature solver stack.

// negated comparisons like `!(x > 0.0)` reject NaN where `x <= 0.0` would
// not; indexed loops mirror the stencil formulas they implement
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calculus;
pub mod conformal;
pub mod domain;
pub mod energy;
pub mod error;
pub mod io;
pub mod normalize;
pub mod prescribe;
pub mod spectral;
pub mod yamabe;

mod tridiag;

pub use domain::{
    build_grid, flat_metric, region_from_intervals, well_metric, zero_set, CurvatureTarget,
    DimensionConstants, GridFunction, Metric, RadialGrid, RegionPair, Spacing,
};
pub use error::{Error, Result};
