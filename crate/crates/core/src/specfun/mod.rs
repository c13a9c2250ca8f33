//! Modified Bessel functions and one-sided stable densities.

pub mod bessel;
pub mod stable;

pub use bessel::{bessel_i, bessel_i_scaled, bessel_i_unscaled, BesselValue};
pub use stable::{
    stable_density, stable_laplace_check, DensityBranch, StableDensityParams, SubordinationRule,
    STABLE_DENSITY_NORMALIZATION,
};
