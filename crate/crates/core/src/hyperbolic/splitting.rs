use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::phase_space::{OrbitWindow, Point, Subspace};
use crate::zoo::Endomorphism;

/// Outcome of the cone iteration at `x_0`.
#[derive(Debug, Clone)]
pub struct ConeResult {
    pub subspace: Subspace,
    /// `d_G(E_k, E_{k-1})` where `E_k` is the seed pushed along the last `k` steps.
    pub increments: Vec<f64>,
}

impl ConeResult {
    pub fn last_increment(&self) -> f64 {
        self.increments.last().copied().unwrap_or(0.0)
    }
}

/// Pushes `seed` from `x_{-k}` to `x_0` with the derivative cocycle, for `k = 1..=iters`.
pub fn cone_iterate_unstable(
    f: &Endomorphism,
    window: &OrbitWindow,
    seed: &Subspace,
    iters: usize,
) -> Result<ConeResult> {
    if window.k_back() < iters {
        return Err(Error::WindowTooShort {
            needed: iters,
            available: window.k_back(),
        });
    }
    if seed.ambient() != f.space().dim() {
        return Err(Error::InvalidParameter("seed lives in the wrong dimension".into()));
    }
    let jac: Vec<DMatrix<f64>> = (1..=iters)
        .map(|k| f.derivative(window.get(-(k as isize)).unwrap()))
        .collect();
    let mut prev = seed.clone();
    let mut increments = Vec::with_capacity(iters);
    for k in 1..=iters {
        // Seed at x_{-k}, pushed through Df(x_{-k}), ..., Df(x_{-1}).
        let mut e = seed.clone();
        for j in (0..k).rev() {
            e = e.image(&jac[j])?;
        }
        increments.push(e.distance(&prev));
        prev = e;
    }
    Ok(ConeResult {
        subspace: prev,
        increments,
    })
}

/// Stable directions at `x_0`: the orthogonal complement of the `unstable_dim`
/// most expanded directions of `Df^iters(x_0)`, obtained by iterating the
/// transposed cocycle backward from `x_iters`.
pub fn stable_subspace(
    f: &Endomorphism,
    window: &OrbitWindow,
    unstable_dim: usize,
    iters: usize,
    seed: u64,
) -> Result<Subspace> {
    let d = f.space().dim();
    if unstable_dim == 0 {
        return Ok(Subspace::full(d));
    }
    if unstable_dim >= d {
        return Ok(Subspace::zero(d));
    }
    if window.k_fwd() < iters {
        return Err(Error::WindowTooShort {
            needed: iters,
            available: window.k_fwd(),
        });
    }
    let mut e = generic_frame(d, unstable_dim, seed)?;
    for k in (0..iters).rev() {
        let jt = f.derivative(window.get(k as isize).unwrap()).transpose();
        e = e.image(&jt)?;
    }
    Ok(e.complement())
}

/// A seeded random `k`-frame, in general position with probability one.
pub fn generic_frame(d: usize, k: usize, seed: u64) -> Result<Subspace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0));
    Subspace::from_spanning(&m)
}

/// Splitting `E^s + E^u` measured over a sample of windows.
#[derive(Debug, Clone)]
pub struct HyperbolicSplitting {
    pub windows: Vec<OrbitWindow>,
    pub stable: Vec<Subspace>,
    pub unstable: Vec<Subspace>,
    /// `sup ||Df|E^s||`.
    pub contraction: f64,
    /// `sup ||(Df|E^u)^{-1}||`.
    pub expansion: f64,
    pub min_angle: f64,
    /// `sup d_G(Df E^u(x), E^u(f x))` over windows with a shiftable future.
    pub invariance_defect: f64,
}

/// Cone-field splitting at every window; `unstable_dims[i]` is the unstable
/// dimension at window `i`.
pub fn hyperbolic_splitting(
    f: &Endomorphism,
    windows: &[OrbitWindow],
    unstable_dims: &[usize],
    iters: usize,
) -> Result<HyperbolicSplitting> {
    if windows.len() != unstable_dims.len() {
        return Err(Error::InvalidParameter("one unstable dimension per window".into()));
    }
    let mut stable = Vec::with_capacity(windows.len());
    let mut unstable = Vec::with_capacity(windows.len());
    let (mut contraction, mut expansion, mut min_angle, mut defect) =
        (0.0f64, 0.0f64, std::f64::consts::FRAC_PI_2, 0.0f64);
    for (i, (w, &k)) in windows.iter().zip(unstable_dims).enumerate() {
        let n = iters.min(w.k_back()).min(w.k_fwd());
        let eu = unstable_at(f, w, k, n, i as u64)?;
        let es = stable_subspace(f, w, k, n, 1000 + i as u64)?;
        let df = f.derivative(w.x0());
        contraction = contraction.max(es.restricted_norms(&df).0);
        if eu.dim() > 0 {
            let (_, smin) = eu.restricted_norms(&df);
            expansion = expansion.max(1.0 / smin);
        }
        min_angle = min_angle.min(es.min_angle(&eu));
        if n >= 1 {
            let shifted = w.shift(1)?;
            let next = unstable_at(f, &shifted, k, n.min(shifted.k_back()), i as u64)?;
            if eu.dim() > 0 {
                defect = defect.max(eu.image(&df)?.distance(&next));
            }
        }
        stable.push(es);
        unstable.push(eu);
    }
    if windows.is_empty() {
        min_angle = 0.0;
    }
    Ok(HyperbolicSplitting {
        windows: windows.to_vec(),
        stable,
        unstable,
        contraction,
        expansion,
        min_angle,
        invariance_defect: defect,
    })
}

fn unstable_at(f: &Endomorphism, w: &OrbitWindow, k: usize, iters: usize, seed: u64) -> Result<Subspace> {
    let d = f.space().dim();
    if k == 0 {
        return Ok(Subspace::zero(d));
    }
    let frame = generic_frame(d, k, seed)?;
    Ok(cone_iterate_unstable(f, w, &frame, iters)?.subspace)
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomAReport {
    pub contraction: f64,
    pub expansion: f64,
    pub min_angle: f64,
    pub invariance_defect: f64,
    /// Hausdorff distance between the periodic sample and the non-wandering sample.
    pub hausdorff_per_omega: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Checks the Axiom A conditions against `margin`: contraction and expansion
/// below `1 - margin`, invariance defect below `1e-8`.
pub fn verify_axiom_a(
    f: &Endomorphism,
    splitting: &HyperbolicSplitting,
    periodic: &[Point],
    margin: f64,
) -> AxiomAReport {
    let space = f.space();
    let omega: Vec<&Point> = splitting.windows.iter().map(|w| w.x0()).collect();
    let directed = |a: &[&Point], b: &[&Point]| {
        a.iter()
            .map(|p| b.iter().map(|q| space.dist(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    let per: Vec<&Point> = periodic.iter().collect();
    let hausdorff = if omega.is_empty() || per.is_empty() {
        f64::INFINITY
    } else {
        directed(&omega, &per).max(directed(&per, &omega))
    };
    let pass = splitting.contraction < 1.0 - margin
        && splitting.expansion < 1.0 - margin
        && splitting.invariance_defect <= 1e-8
        && splitting.min_angle > 0.0;
    AxiomAReport {
        contraction: splitting.contraction,
        expansion: splitting.expansion,
        min_angle: splitting.min_angle,
        invariance_defect: splitting.invariance_defect,
        hausdorff_per_omega: hausdorff,
        margin,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;
    use nalgebra::{dmatrix, dvector, DVector};

    fn constant_window(f: &Endomorphism, p: Point, k: usize) -> OrbitWindow {
        OrbitWindow::from_map(f.space().clone(), vec![p; 2 * k + 1], k, |x| f.eval(x)).unwrap()
    }

    #[test]
    fn cat_map_eigenline() {
        let f = zoo::by_name("torus:2,1,1,1").unwrap();
        let w = f.window_through(&dvector![0.3, 0.1], 40, 40).unwrap();
        let r = cone_iterate_unstable(&f, &w, &Subspace::coordinate(2, &[0]), 40).unwrap();
        let exact = Subspace::from_spanning(&dmatrix![1.0; (5f64.sqrt() - 1.0) / 2.0]).unwrap();
        assert!(r.subspace.distance(&exact) <= 1e-8);
        // Increments decay at the ratio of the eigenvalues.
        let ratio = ((3.0 - 5f64.sqrt()) / 2.0) / ((3.0 + 5f64.sqrt()) / 2.0);
        for k in 5..15 {
            let q = r.increments[k] / r.increments[k - 1];
            assert!(q <= ratio + 1e-3, "step {k}: {q}");
        }
    }

    #[test]
    fn doubling_line_bundle() {
        let f = zoo::doubling();
        let w = f.window_through(&dvector![0.2], 5, 5).unwrap();
        let r = cone_iterate_unstable(&f, &w, &Subspace::full(1), 5).unwrap();
        assert_eq!(r.increments[0], 0.0);
        assert!(cone_iterate_unstable(&f, &w, &Subspace::full(1), 6).is_err());
    }

    #[test]
    fn product_plane() {
        let f = zoo::product_squares();
        let w = constant_window(&f, dvector![1.0, 1.0, 0.0], 20);
        let r = cone_iterate_unstable(&f, &w, &Subspace::coordinate(3, &[0, 1]), 20).unwrap();
        assert!(r.subspace.distance(&Subspace::coordinate(3, &[0, 1])) < 1e-12);
        let bad = cone_iterate_unstable(&f, &w, &Subspace::coordinate(3, &[2]), 3);
        assert!(matches!(bad, Err(Error::RankCollapse(_))));
    }

    #[test]
    fn axiom_a_doubling() {
        let f = zoo::doubling();
        let ws: Vec<_> = [0.1, 0.3, 0.77]
            .iter()
            .map(|x| f.window_through(&dvector![*x], 20, 20).unwrap())
            .collect();
        let s = hyperbolic_splitting(&f, &ws, &[1, 1, 1], 20).unwrap();
        assert!((s.expansion - 0.5).abs() < 1e-12);
        assert_eq!(s.contraction, 0.0);
        let rep = verify_axiom_a(&f, &s, &[dvector![0.1], dvector![0.3], dvector![0.77]], 1e-3);
        assert!(rep.pass);
    }

    #[test]
    fn axiom_a_quadratic() {
        let f = zoo::quadratic(0.0).unwrap();
        let ws = vec![constant_window(&f, dvector![0.0], 20), constant_window(&f, dvector![1.0], 20)];
        let s = hyperbolic_splitting(&f, &ws, &[0, 1], 20).unwrap();
        assert_eq!(s.contraction, 0.0);
        assert!((s.expansion - 0.5).abs() < 1e-12);
        let rep = verify_axiom_a(&f, &s, &[dvector![0.0], dvector![1.0]], 1e-3);
        assert!(rep.pass);
        assert_eq!(rep.hausdorff_per_omega, 0.0);
    }

    #[test]
    fn axiom_a_perturbed_doubling() {
        let f = zoo::doubling();
        let g = zoo::perturb_fourier(&f, 1).at(0.01).unwrap();
        let ws: Vec<_> = (0..20)
            .map(|i| g.window_through(&DVector::from_element(1, i as f64 / 20.0), 15, 15).unwrap())
            .collect();
        let s = hyperbolic_splitting(&g, &ws, &vec![1; 20], 15).unwrap();
        assert!(s.expansion <= 1.0 / (2.0 - 0.02 * std::f64::consts::PI) + 1e-12);
        let per: Vec<_> = ws.iter().map(|w| w.x0().clone()).collect();
        assert!(verify_axiom_a(&g, &s, &per, 1e-3).pass);
    }

    #[test]
    fn cat_map_stable_direction() {
        let f = zoo::by_name("torus:2,1,1,1").unwrap();
        let w = f.window_through(&dvector![0.3, 0.1], 30, 30).unwrap();
        let es = stable_subspace(&f, &w, 1, 30, 3).unwrap();
        let exact = Subspace::from_spanning(&dmatrix![1.0; -(1.0 + 5f64.sqrt()) / 2.0]).unwrap();
        assert!(es.distance(&exact) < 1e-8);
    }
}
