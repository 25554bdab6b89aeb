use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of a model space, in flat coordinates.
pub type Point = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Circle,
    Torus,
    Box,
}

/// Flat model manifold with the trivial tangent bundle `M x R^d`.
///
/// Circles and tori use the unit lattice, so `exp_x(v) = x + v mod 1`.
/// Boxes carry coordinate bounds and `exp_x(v) = x + v`. The projection
/// `p_x` onto the tangent space is the identity in every case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpace {
    kind: SpaceKind,
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ModelSpace {
    pub fn circle() -> Self {
        Self::torus(1).with_kind(SpaceKind::Circle)
    }

    pub fn torus(dim: usize) -> Self {
        assert!(dim >= 1, "torus dimension must be positive");
        Self {
            kind: SpaceKind::Torus,
            dim,
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn unit_box(dim: usize) -> Self {
        Self::bounded_box(vec![0.0; dim], vec![1.0; dim]).expect("unit box is valid")
    }

    pub fn bounded_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidParameter(
                "box bounds must be non-empty and of equal length".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidParameter("box lower bound must be below upper".into()));
        }
        Ok(Self {
            kind: SpaceKind::Box,
            dim: lower.len(),
            lower,
            upper,
        })
    }

    fn with_kind(mut self, kind: SpaceKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dimension `N` of the ambient trivialization (equal to `dim` on flat models).
    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    /// Dimension `2N` of the doubled trivialization used by the smoothed derivative.
    pub fn doubled_dim(&self) -> usize {
        2 * self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, SpaceKind::Circle | SpaceKind::Torus)
    }

    /// Diameter for the sup-of-coordinates metric.
    pub fn diameter(&self) -> f64 {
        if self.is_periodic() {
            0.5
        } else {
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| u - l)
                .fold(0.0, f64::max)
        }
    }

    /// Canonical representative: reduction mod 1 on tori, identity on boxes.
    pub fn reduce(&self, p: &Point) -> Point {
        if self.is_periodic() {
            p.map(|c| {
                let r = c.rem_euclid(1.0);
                if r >= 1.0 {
                    0.0
                } else {
                    r
                }
            })
        } else {
            p.clone()
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        if p.len() != self.dim {
            return false;
        }
        if self.is_periodic() {
            return p.iter().all(|c| c.is_finite());
        }
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(c, (l, u))| *c >= *l && *c <= *u)
    }

    pub fn exp(&self, x: &Point, v: &Point) -> Point {
        self.reduce(&(x + v))
    }

    /// Minimal displacement `v` with `exp_x(v) = y`.
    pub fn log(&self, x: &Point, y: &Point) -> Point {
        let d = y - x;
        if self.is_periodic() {
            d.map(wrap_signed)
        } else {
            d
        }
    }

    /// Sup over coordinates of the coordinate distance (circle distance on tori).
    pub fn dist(&self, x: &Point, y: &Point) -> f64 {
        self.log(x, y).iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn same_as(&self, other: &ModelSpace) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(self.to_string(), other.to_string()))
        }
    }
}

impl fmt::Display for ModelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SpaceKind::Circle => write!(f, "circle"),
            SpaceKind::Torus => write!(f, "torus({})", self.dim),
            SpaceKind::Box => write!(f, "box({})", self.dim),
        }
    }
}

/// Representative of `t mod 1` in `[-1/2, 1/2)`.
pub fn wrap_signed(t: f64) -> f64 {
    let r = (t + 0.5).rem_euclid(1.0) - 0.5;
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// Serializes a point as a plain array of coordinates.
pub fn ser_point<S: serde::Serializer>(p: &Point, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(p.iter())
}

/// Serializes a list of points as an array of coordinate arrays.
pub fn ser_points<S: serde::Serializer>(ps: &[Point], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(ps.iter().map(|p| p.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn exp_at_zero_is_identity() {
        let t = ModelSpace::torus(2);
        let x = dvector![0.3, 0.9];
        assert_eq!(t.exp(&x, &dvector![0.0, 0.0]), x);
        let b = ModelSpace::unit_box(2);
        assert_eq!(b.exp(&x, &dvector![0.0, 0.0]), x);
    }

    #[test]
    fn torus_distance_wraps() {
        let c = ModelSpace::circle();
        assert!((c.dist(&dvector![0.05], &dvector![0.95]) - 0.1).abs() < 1e-15);
        assert!((c.dist(&dvector![0.0], &dvector![0.5]) - 0.5).abs() < 1e-15);
        assert_eq!(c.diameter(), 0.5);
    }

    #[test]
    fn box_membership() {
        let b = ModelSpace::unit_box(3);
        assert!(b.contains(&dvector![0.0, 1.0, 0.5]));
        assert!(!b.contains(&dvector![0.0, 1.1, 0.5]));
        assert!(!b.contains(&dvector![0.0, 0.5]));
    }

    #[test]
    fn exp_is_local_isometry_on_circle() {
        let c = ModelSpace::circle();
        let x = dvector![0.9];
        for (v, w) in [(0.2, -0.2), (0.24, 0.01), (-0.1, 0.12)] {
            let a = c.exp(&x, &dvector![v]);
            let b = c.exp(&x, &dvector![w]);
            assert!((c.dist(&a, &b) - (v - w).abs()).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_box() {
        assert!(ModelSpace::bounded_box(vec![1.0], vec![0.0]).is_err());
        assert!(ModelSpace::bounded_box(vec![], vec![]).is_err());
    }
}
