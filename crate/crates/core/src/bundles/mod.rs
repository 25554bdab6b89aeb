//! Invariant plane fields of the smoothed derivative over the cover sets of
//! the basic pieces: graph transforms, the glued stable and unstable
//! families, and the property report.

mod family;
mod field;
mod verify;

pub use family::{
    in_region, solve_family, solve_stable_family, solve_unstable_family, tangent_seeds, BundleFamily, BundleParams,
    PieceBundles, BALL_RADIUS, SWEEP_TOLERANCE,
};
pub use field::{graph_transform_pullback, graph_transform_pushforward, preimage, pull_back_plane, PlaneField};
pub use verify::{
    expansion_constant_uniformity, verify_principal, PieceReport, PrincipalReport, UniformityReport, DEFECT_THRESHOLD,
    NEAR_PIECE,
};
