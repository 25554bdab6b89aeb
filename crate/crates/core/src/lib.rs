//! Structural stability of hyperbolic endomorphisms on their inverse limits.
//!
//! A perturbation `g` of an Axiom A endomorphism `f` is conjugated to `f` on
//! the space of full orbits by a fixed-point iteration built from a smoothed,
//! invertible version of the derivative cocycle.

pub mod bundles;
pub mod conjugacy;
pub mod error;
pub mod hyperbolic;
pub mod phase_space;
pub mod sample;
pub mod smoothing;
pub mod zoo;

pub use error::{Error, Result};
pub use phase_space::{d1, d_inf, ModelSpace, OrbitWindow, Point, SpaceKind, Subspace};
pub use hyperbolic::BasicPieceSet;
pub use sample::OrbitSample;
pub use zoo::{Endomorphism, PerturbationFamily};
pub use bundles::{BundleFamily, BundleParams};
pub use conjugacy::{RightInverse, Section, SolveParams, SolveReport, Solution};
pub use smoothing::{PartitionOfUnity, SmoothedDerivative};
