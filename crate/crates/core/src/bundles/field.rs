use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phase_space::Subspace;
use crate::sample::OrbitSample;
use crate::smoothing::SmoothedDerivative;

/// A field of subspaces of `R^{N'}` over the nodes of a sample.
#[derive(Debug, Clone)]
pub struct PlaneField {
    pub planes: Vec<Subspace>,
    pub dim: usize,
}

impl PlaneField {
    pub fn constant(sample: &OrbitSample, plane: &Subspace) -> Self {
        Self {
            planes: vec![plane.clone(); sample.len()],
            dim: plane.dim(),
        }
    }

    pub fn from_planes(planes: Vec<Subspace>) -> Result<Self> {
        let dim = planes.first().map(|p| p.dim()).unwrap_or(0);
        if planes.iter().any(|p| p.dim() != dim) {
            return Err(Error::RankCollapse("plane field of varying dimension".into()));
        }
        Ok(Self { planes, dim })
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    /// `sup_n d_G(P_n, Q_n)` over nodes with `mask[n]` (all nodes if `None`).
    pub fn distance(&self, other: &PlaneField, mask: Option<&[bool]>) -> f64 {
        self.planes
            .par_iter()
            .zip(&other.planes)
            .enumerate()
            .filter(|(n, _)| mask.is_none_or(|m| m[*n]))
            .map(|(_, (p, q))| p.distance(q))
            .reduce(|| 0.0, f64::max)
    }

    /// Measured `sup d_G(P_a, P_b) / d_inf(a, b)` over the sample's pairs
    /// with both ends in `mask`.
    pub fn lipschitz_est(&self, sample: &OrbitSample, mask: Option<&[bool]>) -> f64 {
        sample
            .lipschitz_pairs()
            .par_iter()
            .filter(|(a, b, _)| mask.is_none_or(|m| m[*a as usize] && m[*b as usize]))
            .map(|&(a, b, d)| self.planes[a as usize].distance(&self.planes[b as usize]) / d)
            .reduce(|| 0.0, f64::max)
    }

    /// CSV with one row per node: node id, then the basis columns flattened.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,column,values\n");
        for (n, p) in self.planes.iter().enumerate() {
            for (c, col) in p.basis().column_iter().enumerate() {
                let vals: Vec<String> = col.iter().map(|v| format!("{v:.17e}")).collect();
                out.push_str(&format!("{n},{c},{}\n", vals.join(" ")));
            }
        }
        out
    }
}

/// `{v : F v ∈ P}`, the preimage of a subspace under a possibly singular map.
pub fn preimage(f: &DMatrix<f64>, p: &Subspace) -> Result<Subspace> {
    let n = f.ncols();
    let m = (DMatrix::identity(n, n) - p.projector()) * f;
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max).max(1.0);
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= 1e-10 * smax)
        .collect();
    let basis = DMatrix::from_fn(n, null.len(), |r, c| vt[(null[c], r)]);
    Subspace::span_of(&basis, 1e-12)
}

/// One pull-back step at a node: `F_x^{-1}(P)`, or the preimage when `δ = 0`.
pub fn pull_back_plane(fd: &SmoothedDerivative, x: &crate::phase_space::Point, p: &Subspace) -> Result<Subspace> {
    if fd.delta() > 0.0 {
        let inv = fd.inverse_matrix(x)?;
        p.image(&inv)
    } else {
        preimage(&fd.matrix(x), p)
    }
}

/// `x ↦ F_x^{-1}(P_{f(x)})`, the successor being the shifted window.
pub fn graph_transform_pullback(field: &PlaneField, sample: &OrbitSample, fd: &SmoothedDerivative) -> Result<PlaneField> {
    let planes = (0..sample.len())
        .into_par_iter()
        .map(|n| pull_back_plane(fd, sample.point(n), &field.planes[sample.succ(n)]))
        .collect::<Result<Vec<_>>>()?;
    PlaneField::from_planes(planes)
}

/// `x ↦ F_{x_{-1}}(P_{f^{-1}(x)})`.
pub fn graph_transform_pushforward(field: &PlaneField, sample: &OrbitSample, fd: &SmoothedDerivative) -> Result<PlaneField> {
    let planes = (0..sample.len())
        .into_par_iter()
        .map(|n| {
            let p = sample.pred(n);
            field.planes[p].image(&fd.matrix(sample.point(p)))
        })
        .collect::<Result<Vec<_>>>()?;
    PlaneField::from_planes(planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{ModelSpace, Point};
    use crate::zoo::{self, Endomorphism};
    use nalgebra::{dmatrix, dvector, DVector};

    /// Formal linear map `diag(1/2, 2)` sampled at its fixed point only.
    fn diag_sample() -> (Endomorphism, OrbitSample) {
        let f = Endomorphism::custom(
            "diag",
            ModelSpace::torus(2),
            |x: &Point| DVector::from_vec(vec![0.5 * x[0], 2.0 * x[1]]),
            |_: &Point| dmatrix![0.5, 0.0; 0.0, 2.0],
        );
        let s = OrbitSample::from_links(&f, vec![dvector![0.0, 0.0]], vec![0], vec![0], 2, 2).unwrap();
        (f, s)
    }

    fn axes(idx: &[usize]) -> Subspace {
        Subspace::coordinate(4, idx)
    }

    #[test]
    fn stable_plane_is_fixed_to_order_delta() {
        let (f, s) = diag_sample();
        let fd = SmoothedDerivative::new(&f, 0.01).unwrap();
        // Stable eigenplane e_1 plus the second-block axes.
        let seed = PlaneField::constant(&s, &axes(&[0, 2, 3]));
        let once = graph_transform_pullback(&seed, &s, &fd).unwrap();
        assert!(once.distance(&seed, None) < 0.05);
        let mut p = seed.clone();
        for _ in 0..40 {
            p = graph_transform_pullback(&p, &s, &fd).unwrap();
        }
        assert!(p.distance(&seed, None) < 0.05);
        let again = graph_transform_pullback(&p, &s, &fd).unwrap();
        assert!(again.distance(&p, None) < 1e-12);
    }

    #[test]
    fn tilted_plane_contracts_at_the_linear_rate() {
        let (f, s) = diag_sample();
        let fd = SmoothedDerivative::new(&f, 0.01).unwrap();
        // Exact fixed point first.
        let mut fixed = PlaneField::constant(&s, &axes(&[0, 2, 3]));
        for _ in 0..60 {
            fixed = graph_transform_pullback(&fixed, &s, &fd).unwrap();
        }
        let t = 0.1f64;
        let tilt = dmatrix![t.cos(), 0.0, 0.0; t.sin(), 0.0, 0.0; 0.0, 1.0, 0.0; 0.0, 0.0, 1.0];
        let mut p = PlaneField::constant(&s, &Subspace::from_spanning(&tilt).unwrap());
        let mut d_prev = p.distance(&fixed, None);
        let mut ratios = Vec::new();
        for _ in 0..4 {
            p = graph_transform_pullback(&p, &s, &fd).unwrap();
            let d = p.distance(&fixed, None);
            ratios.push(d / d_prev);
            d_prev = d;
        }
        // Oracle: the gap between the expanding rate 2 and the weakest rate 1/2 on the plane.
        let m = fd.matrix(&dvector![0.0, 0.0]);
        let ev = m.clone().symmetric_eigen().eigenvalues;
        let mut mods: Vec<f64> = ev.iter().map(|e| e.abs()).collect();
        mods.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let rate = mods[1] / mods[0];
        for r in &ratios[1..] {
            assert!((r - rate).abs() < 0.02, "{r} vs {rate}");
        }
        assert!((rate - 0.25).abs() < 0.01);
    }

    #[test]
    fn doubling_line_fields_keep_dimension() {
        let f = zoo::doubling();
        let s = OrbitSample::lattice(&f, 15, 4, 4).unwrap();
        let fd = SmoothedDerivative::new(&f, 0.1).unwrap();
        let line = PlaneField::constant(&s, &Subspace::from_spanning(&dmatrix![1.0; 1.0]).unwrap());
        let back = graph_transform_pullback(&line, &s, &fd).unwrap();
        assert_eq!(back.dim, 1);
        let fwd = graph_transform_pushforward(&line, &s, &fd).unwrap();
        assert_eq!(fwd.dim, 1);
    }

    #[test]
    fn cat_map_unstable_plane_is_fixed() {
        let f = zoo::by_name("torus:2,1,1,1").unwrap();
        let s = OrbitSample::lattice(&f, 5, 3, 3).unwrap();
        let fd = SmoothedDerivative::new(&f, 0.01).unwrap();
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let e = Subspace::from_spanning(&dmatrix![1.0; phi; 0.0; 0.0]).unwrap();
        let mut p = PlaneField::constant(&s, &e);
        for _ in 0..30 {
            p = graph_transform_pushforward(&p, &s, &fd).unwrap();
        }
        assert!(p.distance(&PlaneField::constant(&s, &e), None) < 0.01);
        let q = graph_transform_pushforward(&p, &s, &fd).unwrap();
        assert!(q.distance(&p, None) < 1e-12);
    }

    #[test]
    fn push_forward_opens_the_angle_to_the_stable_plane() {
        let f = zoo::by_name("torus:2,1,1,1").unwrap();
        let s = OrbitSample::lattice(&f, 5, 3, 3).unwrap();
        let fd = SmoothedDerivative::new(&f, 0.01).unwrap();
        let mut st = PlaneField::constant(&s, &axes(&[2, 3]));
        for _ in 0..60 {
            st = graph_transform_pullback(&st, &s, &fd).unwrap();
        }
        // Seed: a line making a small angle with E^s.
        let es = &st.planes[0];
        let v = es.basis().column(0) * 1.0 + es.complement().basis().column(0) * 0.05;
        let seed = PlaneField::constant(&s, &Subspace::from_spanning(&DMatrix::from_column_slice(4, 1, v.as_slice())).unwrap());
        let pushed = graph_transform_pushforward(&seed, &s, &fd).unwrap();
        assert!(pushed.planes[0].min_angle(es) > seed.planes[0].min_angle(es));
    }

    #[test]
    fn fixed_points_move_by_order_delta() {
        let f = zoo::by_name("torus:2,1,1,1").unwrap();
        let s = OrbitSample::lattice(&f, 5, 3, 3).unwrap();
        let solve = |delta: f64| {
            let fd = SmoothedDerivative::new(&f, delta).unwrap();
            let mut p = PlaneField::constant(&s, &axes(&[0]));
            for _ in 0..60 {
                p = graph_transform_pushforward(&p, &s, &fd).unwrap();
            }
            p
        };
        let d = solve(0.01).distance(&solve(0.001), None);
        assert!(d > 0.0 && d < 0.02, "{d}");
    }

    #[test]
    fn preimage_handles_singular_maps() {
        let m = dmatrix![2.0, 0.0; 0.0, 0.0];
        let p = preimage(&m, &Subspace::coordinate(2, &[1])).unwrap();
        assert_eq!(p.dim(), 1);
        assert!(p.distance(&Subspace::coordinate(2, &[1])) < 1e-12);
    }
}
