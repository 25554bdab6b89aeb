use rayon::prelude::*;
use serde::Serialize;

use super::family::{solve_family, BundleFamily, BundleParams};
use crate::error::Result;
use crate::hyperbolic::BasicPieceSet;
use crate::phase_space::Subspace;
use crate::sample::OrbitSample;
use crate::smoothing::{PartitionOfUnity, SmoothedDerivative};
use crate::zoo::Endomorphism;

/// Pass threshold for invariance and containment defects.
pub const DEFECT_THRESHOLD: f64 = 1e-6;

/// Distance to a piece below which a node counts as "near" it for `λ`.
pub const NEAR_PIECE: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct PieceReport {
    pub piece: usize,
    pub nodes: usize,
    pub stable_dim: usize,
    pub unstable_dim: usize,
    /// (i) `sup d(F E^s_x, E^s_{f x})` and the same for `E^u`, as containment defects.
    pub stable_invariance: f64,
    pub unstable_invariance: f64,
    /// (iii) smallest angle between `E^s` and `E^u` on `W_i`, in radians.
    pub min_angle: f64,
    /// (iv) measured `d_G / d_inf` Lipschitz constants.
    pub stable_lipschitz: f64,
    pub unstable_lipschitz: f64,
    /// (v) smallest singular value of `F` on `E^u` over `W_i`.
    pub min_expansion: f64,
    /// (v) `K = max(1/min_angle, 1/min_expansion)`.
    pub expansion_constant: f64,
    /// (vii) `max(||F|E^s||, ||F^{-1}|E^u||)` near the piece.
    pub contraction_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrincipalReport {
    pub delta: f64,
    pub pieces: Vec<PieceReport>,
    /// (ii) largest containment defect `E_k^s ⊂ E_j^s`, `E_j^u ⊂ E_k^u` for `k ≻ j` on overlaps.
    pub nesting_defect: f64,
    /// (vi) nodes whose successor lies in a cover set of higher index than any containing them.
    pub filtration_violations: usize,
    pub items: [bool; 7],
}

impl PrincipalReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|b| *b)
    }

    /// Largest `K` over the pieces.
    pub fn expansion_constant(&self) -> f64 {
        self.pieces.iter().map(|p| p.expansion_constant).fold(0.0, f64::max)
    }

    pub fn contraction_rate(&self) -> f64 {
        self.pieces.iter().map(|p| p.contraction_rate).fold(0.0, f64::max)
    }
}

fn image_defect(a: &nalgebra::DMatrix<f64>, p: &Subspace, target: &Subspace) -> f64 {
    if p.dim() == 0 {
        return 0.0;
    }
    match Subspace::span_of(&(a * p.basis()), 1e-10) {
        Ok(img) => img.containment_defect(target),
        Err(_) => f64::INFINITY,
    }
}

/// Measures items (i)–(vii) for a solved family.
pub fn verify_principal(
    family: &BundleFamily,
    sample: &OrbitSample,
    pieces: &BasicPieceSet,
    fd: &SmoothedDerivative,
) -> PrincipalReport {
    let space = sample.space();
    let reports: Vec<PieceReport> = family
        .pieces
        .iter()
        .enumerate()
        .map(|(i, pb)| {
            let m = &pb.member;
            let nodes: Vec<usize> = (0..sample.len()).filter(|&n| m[n]).collect();
            let per_node: Vec<(f64, f64, f64, f64, f64)> = nodes
                .par_iter()
                .map(|&n| {
                    let x = sample.point(n);
                    let f_x = fd.matrix(x);
                    let es = &pb.stable.planes[n];
                    let eu = &pb.unstable.planes[n];
                    let s_inv = if m[sample.succ(n)] {
                        image_defect(&f_x, es, &pb.stable.planes[sample.succ(n)])
                    } else {
                        0.0
                    };
                    let p = sample.pred(n);
                    let u_inv = if m[p] {
                        image_defect(&fd.matrix(sample.point(p)), &pb.unstable.planes[p], eu)
                    } else {
                        0.0
                    };
                    let angle = es.min_angle(eu);
                    let (_, expansion) = eu.restricted_norms(&f_x);
                    let near = pieces.pieces[i].distance(space, x) <= NEAR_PIECE;
                    let rate = if near {
                        let (s_norm, _) = es.restricted_norms(&f_x);
                        s_norm.max(1.0 / expansion)
                    } else {
                        0.0
                    };
                    (s_inv, u_inv, angle, expansion, rate)
                })
                .collect();
            let fold = |sel: fn(&(f64, f64, f64, f64, f64)) -> f64, init: f64, op: fn(f64, f64) -> f64| {
                per_node.iter().map(sel).fold(init, op)
            };
            let min_angle = fold(|t| t.2, std::f64::consts::FRAC_PI_2, f64::min);
            let min_expansion = fold(|t| t.3, f64::INFINITY, f64::min);
            PieceReport {
                piece: i,
                nodes: nodes.len(),
                stable_dim: pb.stable.dim,
                unstable_dim: pb.unstable.dim,
                stable_invariance: fold(|t| t.0, 0.0, f64::max),
                unstable_invariance: fold(|t| t.1, 0.0, f64::max),
                min_angle,
                stable_lipschitz: pb.stable.lipschitz_est(sample, Some(m)),
                unstable_lipschitz: pb.unstable.lipschitz_est(sample, Some(m)),
                min_expansion,
                expansion_constant: (1.0 / min_angle).max(1.0 / min_expansion),
                contraction_rate: fold(|t| t.4, 0.0, f64::max),
            }
        })
        .collect();

    let mut nesting_defect: f64 = 0.0;
    for &(k, j) in &family.order {
        let (pk, pj) = (&family.pieces[k], &family.pieces[j]);
        for n in 0..sample.len() {
            if pk.member[n] && pj.member[n] {
                nesting_defect = nesting_defect
                    .max(pk.stable.planes[n].containment_defect(&pj.stable.planes[n]))
                    .max(pj.unstable.planes[n].containment_defect(&pk.unstable.planes[n]));
            }
        }
    }

    let top = |n: usize| family.pieces.iter().rposition(|p| p.member[n]);
    let filtration_violations = (0..sample.len())
        .filter(|&n| match (top(n), top(sample.succ(n))) {
            (Some(a), Some(b)) => b > a,
            _ => false,
        })
        .count();

    let n_prime = fd.doubled_dim();
    let items = [
        reports
            .iter()
            .all(|r| r.stable_invariance <= DEFECT_THRESHOLD && r.unstable_invariance <= DEFECT_THRESHOLD),
        nesting_defect <= DEFECT_THRESHOLD,
        reports.iter().all(|r| r.stable_dim + r.unstable_dim == n_prime && r.min_angle > 0.0),
        reports.iter().all(|r| r.stable_lipschitz.is_finite() && r.unstable_lipschitz.is_finite()),
        reports.iter().all(|r| r.expansion_constant.is_finite()),
        filtration_violations == 0,
        reports.iter().all(|r| r.contraction_rate < 1.0),
    ];
    PrincipalReport {
        delta: fd.delta(),
        pieces: reports,
        nesting_defect,
        filtration_violations,
        items,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformityReport {
    pub deltas: Vec<f64>,
    pub expansion_constants: Vec<f64>,
    /// `(max K - min K) / min K`.
    pub variation: f64,
}

/// Solves the families at each `δ` and compares the measured `K`.
pub fn expansion_constant_uniformity(
    f: &Endomorphism,
    sample: &OrbitSample,
    pieces: &BasicPieceSet,
    partition: &PartitionOfUnity,
    deltas: &[f64],
    params: &BundleParams,
) -> Result<UniformityReport> {
    let mut ks = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let fam = solve_family(f, sample, pieces, partition, d, params)?;
        let fd = SmoothedDerivative::new(f, d)?;
        ks.push(verify_principal(&fam, sample, pieces, &fd).expansion_constant());
    }
    let lo = ks.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ks.iter().cloned().fold(0.0, f64::max);
    Ok(UniformityReport {
        deltas: deltas.to_vec(),
        expansion_constants: ks,
        variation: (hi - lo) / lo,
    })
}
