//! Flat model spaces, orbit windows on the inverse limit, the metrics `d_1`
//! and `d_inf`, and Grassmannian subspaces.

mod io;
mod space;
mod subspace;
mod window;

pub use io::{window_from_csv, window_from_json, window_to_csv, window_to_json};
pub use space::{ser_point, ser_points, wrap_signed, ModelSpace, Point, SpaceKind};
pub use subspace::{oblique_projectors, spectral_norm, Subspace, RANK_TOL};
pub use window::{d1, d_inf, OrbitWindow, ProductDistance, SupDistance, DEFAULT_WINDOW, ORBIT_TOLERANCE};
