use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::sample::OrbitSample;

/// A vector in `R^{N'}` at every window of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub values: Vec<DVector<f64>>,
}

/// Measured `d_∞`-Lipschitz constant with the pair attaining it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub pairs: usize,
    /// `(a, b, d_inf(a, b))` of the maximizing pair.
    pub witness: Option<(usize, usize, f64)>,
}

impl Section {
    pub fn zeros(len: usize, dim: usize) -> Self {
        Self {
            values: vec![DVector::zeros(dim); len],
        }
    }

    pub fn constant(len: usize, v: DVector<f64>) -> Self {
        Self { values: vec![v; len] }
    }

    pub fn from_fn(len: usize, f: impl Fn(usize) -> DVector<f64> + Sync) -> Self {
        Self {
            values: (0..len).into_par_iter().map(&f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|c| c.is_finite()))
    }

    /// `max_n |v_n|`.
    pub fn c0_norm(&self) -> f64 {
        self.values.par_iter().map(|v| v.norm()).reduce(|| 0.0, f64::max)
    }

    /// `max_n |v_n - u_n|`.
    pub fn distance(&self, other: &Section) -> f64 {
        self.values
            .par_iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .reduce(|| 0.0, f64::max)
    }

    pub fn add(&self, other: &Section) -> Section {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Section) -> Section {
        self.combine(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> Section {
        Section {
            values: self.values.par_iter().map(|v| v * a).collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Section, b: f64) -> Section {
        Section {
            values: self
                .values
                .par_iter()
                .zip(&other.values)
                .map(|(u, v)| u * a + v * b)
                .collect(),
        }
    }

    /// Sup of `|v_a - v_b| / d_inf(a, b)` over the sample's pairs.
    pub fn lambda_est(&self, sample: &OrbitSample) -> LipschitzEstimate {
        let pairs = sample.lipschitz_pairs();
        let best = pairs
            .par_iter()
            .map(|&(a, b, d)| {
                let q = (&self.values[a as usize] - &self.values[b as usize]).norm() / d;
                (q, a as usize, b as usize, d)
            })
            .reduce(|| (0.0, 0, 0, 0.0), |x, y| if y.0 > x.0 { y } else { x });
        LipschitzEstimate {
            value: best.0,
            pairs: pairs.len(),
            witness: (best.0 > 0.0).then_some((best.1, best.2, best.3)),
        }
    }

    /// CSV with the `x_0` coordinates of each window followed by the vector.
    pub fn to_csv(&self, sample: &OrbitSample) -> String {
        let d = sample.space().dim();
        let mut head: Vec<String> = (0..d).map(|c| format!("x{c}")).collect();
        head.extend((0..self.dim()).map(|c| format!("v{c}")));
        let mut out = head.join(",");
        out.push('\n');
        for (n, v) in self.values.iter().enumerate() {
            let row: Vec<String> = sample
                .point(n)
                .iter()
                .chain(v.iter())
                .map(|c| format!("{c:.17e}"))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;
    use nalgebra::dvector;
    use proptest::prelude::*;

    #[test]
    fn constants_have_zero_lipschitz_constant() {
        let s = OrbitSample::lattice(&zoo::doubling(), 63, 6, 6).unwrap();
        let w = Section::constant(s.len(), dvector![0.3, -0.1]);
        let est = w.lambda_est(&s);
        assert_eq!(est.value, 0.0);
        assert!(est.pairs >= 1000);
        assert!(est.witness.is_none());
    }

    #[test]
    fn lipschitz_of_a_periodic_function_is_at_most_one() {
        let s = OrbitSample::lattice(&zoo::doubling(), 63, 6, 6).unwrap();
        let tau = std::f64::consts::TAU;
        let w = Section::from_fn(s.len(), |n| dvector![(tau * s.point(n)[0]).sin() / tau, 0.0]);
        let est = w.lambda_est(&s);
        assert!(est.value <= 1.0 + 1e-12 && est.value > 0.5, "{}", est.value);
    }

    proptest! {
        #[test]
        fn combine_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, x in -1.0..1.0f64, y in -1.0..1.0f64) {
            let u = Section::constant(4, dvector![x, y]);
            let v = Section::constant(4, dvector![y, -x]);
            let c = u.combine(a, &v, b);
            let d = u.scale(a).add(&v.scale(b));
            prop_assert!(c.distance(&d) < 1e-14);
            prop_assert!(u.sub(&u).c0_norm() == 0.0);
        }
    }
}
