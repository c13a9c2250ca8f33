//! Numerical toolkit for local Hardy spaces attached to semigroup kernels:
//! kernels, admissible coverings, atoms, and empirical checks of the
//! kernel conditions that identify `H^1(L)` with an atomic space.
//!
//! Geometry, coverings, partitions and atoms are generic over the scalar
//! (`f32` or `f64`); kernels, quadrature and the verifier run in `f64`.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod atoms;
pub mod coverings;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod quadrature;
pub mod real;
pub mod specfun;
pub mod verifier;

pub use atoms::{Atom, AtomKind, AtomicDecomposition, GridFunction};
pub use coverings::{AdmissibleCovering, Generator, PartitionOfUnity};
pub use error::{Error, Result};
pub use geometry::{Cuboid, DomainSpec, Interval};
pub use kernels::{KernelFamily, KernelKind, Potential};
pub use real::Real;
pub use verifier::{Verdict, VerificationReport, VerifierConfig};

pub type IntervalF32 = Interval<f32>;
pub type IntervalF64 = Interval<f64>;
pub type CuboidF32 = Cuboid<f32>;
pub type CuboidF64 = Cuboid<f64>;
pub type DomainF32 = DomainSpec<f32>;
pub type DomainF64 = DomainSpec<f64>;
pub type CoveringF32 = AdmissibleCovering<f32>;
pub type CoveringF64 = AdmissibleCovering<f64>;
pub type PartitionF32 = PartitionOfUnity<f32>;
pub type PartitionF64 = PartitionOfUnity<f64>;
pub type GridFunctionF32 = GridFunction<f32>;
pub type GridFunctionF64 = GridFunction<f64>;
pub type AtomF32 = Atom<f32>;
pub type AtomF64 = Atom<f64>;
