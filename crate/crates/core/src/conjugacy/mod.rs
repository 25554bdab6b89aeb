//! The conjugacy equation on the inverse limit: sections over a sample, the
//! operators `Φ`, `F_⋆` and `J`, the fixed-point solver and the injectivity
//! and coverage checks on its output.

mod checks;
mod operators;
mod right_inverse;
mod section;
mod solve;

pub use checks::{lipschitz_lemma_measurement, random_section, GroupFit, robbin_injectivity_check, LemmaFit, LemmaPoint, RobbinReport};
pub use operators::{backward_star, extract_h0, f_star, phi_operator, CocycleTable, WRAP_LIMIT};
pub use right_inverse::{right_inverse_j, verify_right_inverse, JOutput, RightInverse, Truncation, MAX_TERMS, MEASURED_POWERS};
pub use section::{LipschitzEstimate, Section};
pub use solve::{
    choose_delta, conjugate_window, solve_conjugacy, surjectivity_coverage, DeltaChoice, Solution, SolveParams, SolveReport,
    DEFAULT_ETA, DELTA_CANDIDATES, PREPASS_FACTOR,
};

#[cfg(test)]
mod tests;
