use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used when orthonormalizing spanning sets.
pub const RANK_TOL: f64 = 1e-12;

/// A linear subspace of `R^n`, stored as an orthonormal basis (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    pub fn zero(ambient: usize) -> Self {
        Self {
            basis: DMatrix::zeros(ambient, 0),
        }
    }

    pub fn full(ambient: usize) -> Self {
        Self {
            basis: DMatrix::identity(ambient, ambient),
        }
    }

    /// Span of the given coordinate axes.
    pub fn coordinate(ambient: usize, axes: &[usize]) -> Self {
        let mut basis = DMatrix::zeros(ambient, axes.len());
        for (j, &a) in axes.iter().enumerate() {
            basis[(a, j)] = 1.0;
        }
        Self { basis }
    }

    /// Orthonormalizes the columns of `spanning`, which must have full column rank.
    pub fn from_spanning(spanning: &DMatrix<f64>) -> Result<Self> {
        let k = spanning.ncols();
        let s = Self::span_of(spanning, RANK_TOL)?;
        if s.dim() < k {
            return Err(Error::RankCollapse(format!(
                "spanning set of {k} vectors has rank {}",
                s.dim()
            )));
        }
        Ok(s)
    }

    /// Column span of `m`, dropping directions with relative singular value below `tol`.
    pub fn span_of(m: &DMatrix<f64>, tol: f64) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() == 0 {
            return Ok(Self::zero(n));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::RankCollapse("non-finite spanning vector".into()));
        }
        let svd = m.clone().svd(true, false);
        let u = svd.u.expect("requested U");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        if smax == 0.0 {
            return Ok(Self::zero(n));
        }
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > tol * smax)
            .collect();
        let basis = DMatrix::from_fn(n, keep.len(), |r, c| u[(r, keep[c])]);
        Ok(Self { basis })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    /// Orthogonal projector `pi_P`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    /// Grassmannian distance `||pi_P - pi_Q||` (operator norm).
    pub fn distance(&self, other: &Subspace) -> f64 {
        spectral_norm_sym(&(self.projector() - other.projector()))
    }

    /// Sup over unit `u` in `self` of `dist(u, larger)`; zero iff `self` is contained in `larger`.
    pub fn containment_defect(&self, larger: &Subspace) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        let resid = &self.basis - larger.projector() * &self.basis;
        spectral_norm(&resid)
    }

    /// Minimal principal angle, in radians; `pi/2` if either space is trivial.
    pub fn min_angle(&self, other: &Subspace) -> f64 {
        if self.dim() == 0 || other.dim() == 0 {
            return std::f64::consts::FRAC_PI_2;
        }
        let c = spectral_norm(&(self.basis.transpose() * &other.basis)).min(1.0);
        c.acos()
    }

    /// Image `A(P)`; fails if `A` kills part of `P`.
    pub fn image(&self, a: &DMatrix<f64>) -> Result<Subspace> {
        let m = a * &self.basis;
        let s = Self::span_of(&m, 1e-10)?;
        if s.dim() < self.dim() {
            return Err(Error::RankCollapse(format!(
                "linear map reduces a {}-plane to rank {}",
                self.dim(),
                s.dim()
            )));
        }
        Ok(s)
    }

    /// Orthogonal complement.
    pub fn complement(&self) -> Subspace {
        let n = self.ambient();
        if self.dim() == 0 {
            return Self::full(n);
        }
        let p = DMatrix::identity(n, n) - self.projector();
        Self::span_of(&p, 1e-8).expect("finite projector")
    }

    /// Operator norm of `a` restricted to this subspace, and its smallest singular value.
    pub fn restricted_norms(&self, a: &DMatrix<f64>) -> (f64, f64) {
        if self.dim() == 0 {
            return (0.0, f64::INFINITY);
        }
        let sv = (a * &self.basis).singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        (max, min)
    }
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0, |a: f64, e| a.max(e.abs()))
}

/// Oblique projections onto `s` along `u` and onto `u` along `s`, for `s + u = R^n` direct.
pub fn oblique_projectors(s: &Subspace, u: &Subspace) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = s.ambient();
    if s.dim() + u.dim() != n {
        return Err(Error::InvalidParameter(format!(
            "dimensions {} + {} do not add up to {n}",
            s.dim(),
            u.dim()
        )));
    }
    let mut b = DMatrix::zeros(n, n);
    b.columns_mut(0, s.dim()).copy_from(s.basis());
    b.columns_mut(s.dim(), u.dim()).copy_from(u.basis());
    let inv = b
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankCollapse("stable and unstable planes are not transverse".into()))?;
    let ps = s.basis() * inv.rows(0, s.dim());
    let pu = u.basis() * inv.rows(s.dim(), u.dim());
    Ok((ps, pu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    #[test]
    fn distance_is_zero_on_equal_planes() {
        let p = Subspace::from_spanning(&dmatrix![1.0; 1.0; 0.0]).unwrap();
        assert!(p.distance(&p) < 1e-15);
        let q = Subspace::from_spanning(&dmatrix![2.0; 2.0; 0.0]).unwrap();
        assert!(p.distance(&q) < 1e-14);
    }

    #[test]
    fn distance_between_lines_is_sine_of_angle() {
        let a = Subspace::coordinate(2, &[0]);
        let t: f64 = 0.3;
        let b = Subspace::from_spanning(&dmatrix![t.cos(); t.sin()]).unwrap();
        assert!((a.distance(&b) - t.sin()).abs() < 1e-14);
        assert!((a.min_angle(&b) - t).abs() < 1e-12);
    }

    #[test]
    fn basis_is_orthonormal() {
        let p = Subspace::from_spanning(&dmatrix![1.0, 2.0; 0.5, 1.0; 3.0, 0.0]).unwrap();
        let g = p.basis().transpose() * p.basis();
        assert!((g - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn rank_collapse_is_reported() {
        let p = Subspace::coordinate(2, &[0]);
        let kill = dmatrix![0.0, 0.0; 0.0, 1.0];
        assert!(matches!(p.image(&kill), Err(Error::RankCollapse(_))));
        assert!(Subspace::from_spanning(&dmatrix![1.0, 2.0; 1.0, 2.0]).is_err());
    }

    #[test]
    fn containment() {
        let line = Subspace::coordinate(3, &[0]);
        let plane = Subspace::coordinate(3, &[0, 1]);
        assert_eq!(line.containment_defect(&plane), 0.0);
        assert!((plane.containment_defect(&line) - 1.0).abs() < 1e-14);
        assert_eq!(Subspace::zero(3).containment_defect(&line), 0.0);
    }

    #[test]
    fn oblique_projectors_sum_to_identity() {
        let s = Subspace::coordinate(2, &[0]);
        let u = Subspace::from_spanning(&dmatrix![1.0; 1.0]).unwrap();
        let (ps, pu) = oblique_projectors(&s, &u).unwrap();
        assert!((&ps + &pu - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        let v = DVector::from_vec(vec![0.0, 1.0]);
        assert!((&ps * &v - DVector::from_vec(vec![-1.0, 0.0])).norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn grassmann_distance_is_a_metric(
            a in prop::collection::vec(-1.0f64..1.0, 4),
            b in prop::collection::vec(-1.0f64..1.0, 4),
            c in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            let mk = |v: &[f64]| Subspace::span_of(&DMatrix::from_column_slice(4, 1, v), 1e-9).unwrap();
            let (p, q, r) = (mk(&a), mk(&b), mk(&c));
            prop_assume!(p.dim() == 1 && q.dim() == 1 && r.dim() == 1);
            prop_assert!((p.distance(&q) - q.distance(&p)).abs() < 1e-12);
            prop_assert!(p.distance(&r) <= p.distance(&q) + q.distance(&r) + 1e-12);
            prop_assert!(p.distance(&p) < 1e-12);
        }
    }
}
