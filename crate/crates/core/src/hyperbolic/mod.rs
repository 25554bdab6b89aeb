//! Periodic orbits, cone-field splittings, Axiom A checks, spectral
//! decomposition with the order between pieces, adapted filtrations and covers.

mod periodic;
mod pieces;
mod splitting;

pub use periodic::{find_periodic, PeriodicOrbit, MAX_PERIOD, PERIODIC_TOLERANCE};
pub use pieces::{
    build_covers, build_filtration, spectral_decomposition, AxisBox, BasicPieceSet, Cover, Filtration,
    FiltrationReport, Piece, Region, CLUSTER_RESOLUTION, COVER_MARGIN, FILTRATION_RHO, SHOOTING_STEPS,
};
pub use splitting::{
    cone_iterate_unstable, generic_frame, hyperbolic_splitting, stable_subspace, verify_axiom_a, AxiomAReport,
    ConeResult, HyperbolicSplitting,
};
