use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::phase_space::{spectral_norm, Point};
use crate::zoo::Endomorphism;

/// The bundle map `F^δ_x(v_1, v_2) = (Df_x v_1 + δ v_2, δ v_1)` on the doubled
/// trivialization `R^N x R^N`. Zoo maps are analytic, so `f_δ = f`.
#[derive(Debug, Clone)]
pub struct SmoothedDerivative {
    f: Endomorphism,
    delta: f64,
}

impl SmoothedDerivative {
    pub fn new(f: &Endomorphism, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("delta must be finite and >= 0, got {delta}")));
        }
        Ok(Self { f: f.clone(), delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn base(&self) -> &Endomorphism {
        &self.f
    }

    /// `N' = 2N`.
    pub fn doubled_dim(&self) -> usize {
        self.f.space().doubled_dim()
    }

    pub fn matrix(&self, x: &Point) -> DMatrix<f64> {
        let n = self.f.space().ambient_dim();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.f.derivative(x));
        for i in 0..n {
            m[(i, n + i)] = self.delta;
            m[(n + i, i)] = self.delta;
        }
        m
    }

    pub fn apply(&self, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        let n = self.f.space().ambient_dim();
        let df = self.f.derivative(x);
        let (v1, v2) = (v.rows(0, n), v.rows(n, n));
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&(&df * v1 + v2 * self.delta));
        out.rows_mut(n, n).copy_from(&(v1 * self.delta));
        out
    }

    /// Closed-form inverse `[[0, I/δ], [I/δ, -Df/δ²]]`.
    pub fn inverse_matrix(&self, x: &Point) -> Result<DMatrix<f64>> {
        if self.delta == 0.0 {
            return Err(Error::InvalidParameter("inverse undefined at delta = 0".into()));
        }
        let n = self.f.space().ambient_dim();
        let d = self.delta;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            m[(i, n + i)] = 1.0 / d;
            m[(n + i, i)] = 1.0 / d;
        }
        m.view_mut((n, n), (n, n)).copy_from(&(self.f.derivative(x) * (-1.0 / (d * d))));
        Ok(m)
    }

    pub fn apply_inverse(&self, x: &Point, u: &DVector<f64>) -> Result<DVector<f64>> {
        if self.delta == 0.0 {
            return Err(Error::InvalidParameter("inverse undefined at delta = 0".into()));
        }
        let n = self.f.space().ambient_dim();
        let d = self.delta;
        let (u1, u2) = (u.rows(0, n), u.rows(n, n));
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&(u2 / d));
        out.rows_mut(n, n)
            .copy_from(&((u1 - self.f.derivative(x) * u2 / d) / d));
        Ok(out)
    }

    /// The inverse for `δ > 0`; at `δ = 0` the Moore-Penrose inverse `Df^+ ⊕ 0`.
    pub fn backward_matrix(&self, x: &Point) -> DMatrix<f64> {
        if self.delta > 0.0 {
            return self.inverse_matrix(x).expect("delta > 0");
        }
        let n = self.f.space().ambient_dim();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        let pinv = self
            .f
            .derivative(x)
            .pseudo_inverse(1e-12)
            .expect("non-negative epsilon");
        m.view_mut((0, 0), (n, n)).copy_from(&pinv);
        m
    }

    /// Operator norm of the inverse at `x`.
    pub fn inverse_norm(&self, x: &Point) -> Result<f64> {
        Ok(spectral_norm(&self.inverse_matrix(x)?))
    }

    /// A priori bound `2/δ + ||Df_x||/δ²` on the inverse norm.
    pub fn inverse_norm_bound(&self, x: &Point) -> f64 {
        let d = self.delta;
        2.0 / d + spectral_norm(&self.f.derivative(x)) / (d * d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;
    use nalgebra::dvector;
    use proptest::prelude::*;

    #[test]
    fn doubling_example() {
        let f = SmoothedDerivative::new(&zoo::doubling(), 0.1).unwrap();
        assert_eq!(f.apply(&dvector![0.3], &dvector![1.0, 0.0]), dvector![2.0, 0.1]);
        assert_eq!(f.doubled_dim(), 2);
    }

    #[test]
    fn invertible_at_the_critical_point() {
        let q = zoo::quadratic(0.0).unwrap();
        let f = SmoothedDerivative::new(&q, 0.1).unwrap();
        let x = dvector![0.0];
        assert_eq!(f.apply(&x, &dvector![1.0, 0.0]), dvector![0.0, 0.1]);
        for d in [1e-1, 1e-2, 1e-3] {
            let f = SmoothedDerivative::new(&q, d).unwrap();
            let v = dvector![0.3, -1.7];
            let back = f.apply_inverse(&x, &f.apply(&x, &v)).unwrap();
            assert!((back - &v).norm() <= 1e-10 * v.norm());
        }
    }

    #[test]
    fn delta_zero_is_the_derivative() {
        let q = zoo::quadratic(0.0).unwrap();
        let f = SmoothedDerivative::new(&q, 0.0).unwrap();
        assert_eq!(f.apply(&dvector![0.25], &dvector![1.0, 5.0]), dvector![0.5, 0.0]);
        assert_eq!(f.apply(&dvector![0.0], &dvector![1.0, 5.0]), dvector![0.0, 0.0]);
        assert!(f.apply_inverse(&dvector![0.0], &dvector![1.0, 0.0]).is_err());
        let b = SmoothedDerivative::new(&zoo::doubling(), 0.0).unwrap().backward_matrix(&dvector![0.1]);
        assert_eq!(b, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]));
        assert!(SmoothedDerivative::new(&q, -1.0).is_err());
    }

    #[test]
    fn closed_form_inverse_matches_lu() {
        let f = SmoothedDerivative::new(&zoo::product_squares(), 0.01).unwrap();
        let x = dvector![0.3, 0.9, 0.0];
        let inv = f.inverse_matrix(&x).unwrap();
        let lu = f.matrix(&x).try_inverse().unwrap();
        assert!((inv - lu).amax() < 1e-6);
    }

    proptest! {
        #[test]
        fn round_trip_and_norms(x in 0.0f64..1.0, a in -1.0f64..1.0, b in -1.0f64..1.0, k in 0u32..4) {
            let delta = 10f64.powi(-(k as i32) - 1);
            for f in [zoo::doubling(), zoo::quadratic(0.0).unwrap()] {
                let s = SmoothedDerivative::new(&f, delta).unwrap();
                let p = dvector![x];
                let v = dvector![a, b];
                prop_assume!(v.norm() > 1e-3);
                let back = s.apply_inverse(&p, &s.apply(&p, &v)).unwrap();
                prop_assert!((back - &v).norm() <= 1e-10 * v.norm());
                // Augmentation is a perturbation of size at most sqrt(2) delta.
                let mut base = DMatrix::zeros(2, 2);
                base[(0, 0)] = f.derivative(&p)[(0, 0)];
                prop_assert!(spectral_norm(&(s.matrix(&p) - base)) <= 2f64.sqrt() * delta + 1e-15);
                prop_assert!(s.inverse_norm(&p).unwrap() <= s.inverse_norm_bound(&p) * (1.0 + 1e-12));
            }
        }
    }
}
