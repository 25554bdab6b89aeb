use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::section::Section;
use crate::error::{Error, Result};
use crate::sample::OrbitSample;
use crate::smoothing::SmoothedDerivative;
use crate::zoo::Endomorphism;

/// Largest first-block displacement for which `exp^{-1}` is unambiguous on a torus.
pub const WRAP_LIMIT: f64 = 0.25;

/// `F^δ` and its backward matrix tabulated at every window.
#[derive(Debug, Clone)]
pub struct CocycleTable {
    pub forward: Vec<DMatrix<f64>>,
    pub backward: Vec<DMatrix<f64>>,
}

impl CocycleTable {
    pub fn new(sample: &OrbitSample, fd: &SmoothedDerivative) -> Self {
        let (forward, backward) = (0..sample.len())
            .into_par_iter()
            .map(|n| {
                let x = sample.point(n);
                (fd.matrix(x), fd.backward_matrix(x))
            })
            .unzip();
        Self { forward, backward }
    }
}

/// `(F_⋆ v)(x) = F^δ_{x_{-1}} v(f⃖^{-1} x)`.
pub fn f_star(v: &Section, sample: &OrbitSample, table: &CocycleTable) -> Section {
    Section::from_fn(sample.len(), |n| {
        let p = sample.pred(n);
        &table.forward[p] * &v.values[p]
    })
}

/// `(B v)(x) = (F^δ_x)^{-1} v(f⃖ x)`, a right inverse of `F_⋆` on graphs
/// where `pred ∘ succ` is the identity.
pub fn backward_star(v: &Section, sample: &OrbitSample, table: &CocycleTable) -> Section {
    Section::from_fn(sample.len(), |n| &table.backward[n] * &v.values[sample.succ(n)])
}

/// `Φ(w)(x) = exp^{-1}_{x_0}(g(x_{-1} + w_1(f⃖^{-1} x)))` in the first block, zero in the second.
pub fn phi_operator(w: &Section, sample: &OrbitSample, g: &Endomorphism) -> Result<Section> {
    let space = sample.space();
    let d = space.ambient_dim();
    let periodic = space.is_periodic();
    let out = (0..sample.len())
        .into_par_iter()
        .map(|n| {
            let p = sample.pred(n);
            let shift = w.values[p].rows(0, d).into_owned();
            if periodic && shift.amax() >= WRAP_LIMIT {
                return Err(Error::Wraparound(shift.amax()));
            }
            let y = g.eval(&(sample.point(p) + shift));
            let disp = space.log(sample.point(n), &y);
            if periodic && disp.amax() >= WRAP_LIMIT {
                return Err(Error::Wraparound(disp.amax()));
            }
            let mut v = DVector::zeros(2 * d);
            v.rows_mut(0, d).copy_from(&disp);
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Section { values: out })
}

/// `h_0(x) = x_0 + w_1(x)`, reduced to the model space.
pub fn extract_h0(w: &Section, sample: &OrbitSample) -> Result<Vec<DVector<f64>>> {
    let space = sample.space();
    let d = space.ambient_dim();
    (0..sample.len())
        .map(|n| {
            let shift = w.values[n].rows(0, d).into_owned();
            if space.is_periodic() && shift.amax() >= WRAP_LIMIT {
                return Err(Error::Wraparound(shift.amax()));
            }
            Ok(space.reduce(&(sample.point(n) + shift)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn doubling_setup(delta: f64) -> (OrbitSample, CocycleTable) {
        let f = zoo::doubling();
        let s = OrbitSample::lattice(&f, 63, 6, 6).unwrap();
        let t = CocycleTable::new(&s, &SmoothedDerivative::new(&f, delta).unwrap());
        (s, t)
    }

    #[test]
    fn phi_of_zero_vanishes_for_g_equal_f() {
        let f = zoo::doubling();
        let (s, _) = doubling_setup(0.0);
        let out = phi_operator(&Section::zeros(s.len(), 2), &s, &f).unwrap();
        assert!(out.c0_norm() < 1e-14);
    }

    #[test]
    fn phi_on_translated_doubling() {
        let f = zoo::doubling();
        let c = 0.01;
        let g = zoo::perturb_translation(&f, &[1.0]).at(c).unwrap();
        let (s, _) = doubling_setup(0.0);
        let out0 = phi_operator(&Section::zeros(s.len(), 2), &s, &g).unwrap();
        assert!(out0.values.iter().all(|v| (v[0] - c).abs() < 1e-14 && v[1] == 0.0));
        let a = -0.03;
        let out = phi_operator(&Section::constant(s.len(), dvector![a, 0.0]), &s, &g).unwrap();
        assert!(out.values.iter().all(|v| (v[0] - (2.0 * a + c)).abs() < 1e-14));
        let fixed = phi_operator(&Section::constant(s.len(), dvector![-c, 0.0]), &s, &g).unwrap();
        assert!(fixed.values.iter().all(|v| (v[0] + c).abs() < 1e-14));
    }

    #[test]
    fn phi_rejects_large_displacements() {
        let f = zoo::doubling();
        let (s, _) = doubling_setup(0.0);
        let w = Section::constant(s.len(), dvector![0.2, 0.0]);
        assert!(matches!(phi_operator(&w, &s, &f), Err(Error::Wraparound(_))));
    }

    #[test]
    fn f_star_on_constants() {
        let (s, t) = doubling_setup(0.0);
        let v = Section::constant(s.len(), dvector![0.3, 0.0]);
        let out = f_star(&v, &s, &t);
        assert!(out.values.iter().all(|u| (u - dvector![0.6, 0.0]).norm() < 1e-15));
        assert_eq!(f_star(&Section::zeros(s.len(), 2), &s, &t).c0_norm(), 0.0);
    }

    #[test]
    fn backward_is_a_right_inverse() {
        let (s, t) = doubling_setup(0.1);
        let v = Section::from_fn(s.len(), |n| dvector![s.point(n)[0].sin(), s.point(n)[0].cos()]);
        let back = f_star(&backward_star(&v, &s, &t), &s, &t);
        assert!(back.distance(&v) < 1e-12);
    }

    #[test]
    fn h0_of_zero_is_the_projection() {
        let (s, _) = doubling_setup(0.0);
        let h = extract_h0(&Section::zeros(s.len(), 2), &s).unwrap();
        assert!(h.iter().enumerate().all(|(n, p)| p == s.point(n)));
    }

    proptest! {
        #[test]
        fn f_star_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, k in 1u32..5) {
            let (s, t) = doubling_setup(0.05);
            let u = Section::from_fn(s.len(), |n| dvector![(k as f64 * s.point(n)[0]).sin(), 1.0]);
            let v = Section::from_fn(s.len(), |n| dvector![0.5, s.point(n)[0]]);
            let lhs = f_star(&u.combine(a, &v, b), &s, &t);
            let rhs = f_star(&u, &s, &t).combine(a, &f_star(&v, &s, &t), b);
            prop_assert!(lhs.distance(&rhs) < 1e-13);
        }
    }
}
