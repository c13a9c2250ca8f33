//! Numerical engines: 1-D adaptive Gauss-Kronrod, spatial product rules,
//! geometric time grids and low-discrepancy samples.

pub mod adaptive;
pub mod qmc;
pub mod spatial;
pub mod tgrid;

pub use adaptive::{
    gauss_kronrod_15, gauss_legendre, integrate, integrate_breakpoints,
    integrate_breakpoints_partial, integrate_from_neg_infinity, integrate_to_infinity,
    AdaptiveConfig, Estimate,
};
pub use qmc::{halton, halton_in_box};
pub use spatial::{box_difference, integrate_outside, OutsideEstimate, SpatialConfig, SpatialRule};
pub use tgrid::{sup_over_t, SupEstimate, TGrid, DEFAULT_POINTS_PER_DECADE};
