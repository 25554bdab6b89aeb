use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::phase_space::{ser_points, Point};
use crate::zoo::{multipliers, sample_grid, Endomorphism};

pub const MAX_PERIOD: usize = 12;

/// Residual accepted for a refined periodic point.
pub const PERIODIC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    /// Points in dynamical order, starting from the lexicographically smallest.
    #[serde(serialize_with = "ser_points")]
    pub points: Vec<Point>,
    /// Eigenvalue moduli of the derivative of `f^period`, descending.
    pub multipliers: Vec<f64>,
}

impl PeriodicOrbit {
    pub fn period(&self) -> usize {
        self.points.len()
    }

    /// Number of multipliers of modulus above one.
    pub fn unstable_dim(&self) -> usize {
        self.multipliers.iter().filter(|m| **m > 1.0).count()
    }
}

fn newton(f: &Endomorphism, seed: &Point, period: usize) -> Option<Point> {
    let space = f.space();
    let d = space.dim();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut x = seed.clone();
    for _ in 0..60 {
        let r = space.log(&x, &f.iterate(&x, period));
        if r.amax() <= PERIODIC_TOLERANCE * 0.1 {
            break;
        }
        let jac = f.iterate_derivative(&x, period) - &eye;
        let step = jac.lu().solve(&r)?;
        x = space.reduce(&(x - step));
        if !x.iter().all(|c| c.is_finite()) {
            return None;
        }
        if !space.is_periodic() {
            let outside = x
                .iter()
                .zip(space.lower().iter().zip(space.upper()))
                .any(|(c, (l, u))| *c < l - 1e-9 || *c > u + 1e-9);
            if outside {
                return None;
            }
        }
    }
    if !space.is_periodic() {
        x = x
            .iter()
            .zip(space.lower().iter().zip(space.upper()))
            .map(|(c, (l, u))| c.clamp(*l, *u))
            .collect::<Vec<_>>()
            .into();
    }
    let r = space.dist(&f.iterate(&x, period), &x);
    (r <= PERIODIC_TOLERANCE).then_some(x)
}

fn lex_less(a: &Point, b: &Point) -> bool {
    a.iter().partial_cmp(b.iter()) == Some(std::cmp::Ordering::Less)
}

/// Periodic orbits of exact period `period`, found by Newton refinement from a
/// regular grid of `grid` seeds per axis.
pub fn find_periodic(f: &Endomorphism, period: usize, grid: usize) -> Result<Vec<PeriodicOrbit>> {
    if period == 0 || period > MAX_PERIOD {
        return Err(Error::InvalidParameter(format!("period must be in 1..={MAX_PERIOD}")));
    }
    let space = f.space();
    let roots: Vec<Point> = sample_grid(space, grid.max(2))
        .par_iter()
        .filter_map(|s| newton(f, s, period))
        .collect();
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for x in roots {
        // Exact period: no proper divisor returns to x.
        let minimal = (1..period)
            .filter(|k| period % k == 0)
            .all(|k| space.dist(&f.iterate(&x, k), &x) > 1e-9);
        if !minimal {
            continue;
        }
        let known = orbits
            .iter()
            .any(|o| o.points.iter().any(|p| space.dist(p, &x) < 1e-9));
        if known {
            continue;
        }
        let mut pts = Vec::with_capacity(period);
        let mut y = x.clone();
        for _ in 0..period {
            pts.push(y.clone());
            y = f.eval(&y);
        }
        let start = (0..period)
            .fold(0, |best, k| if lex_less(&pts[k], &pts[best]) { k } else { best });
        pts.rotate_left(start);
        let m = multipliers(&f.iterate_derivative(&pts[0], period));
        orbits.push(PeriodicOrbit { points: pts, multipliers: m });
    }
    orbits.sort_by(|a, b| {
        a.points[0]
            .iter()
            .partial_cmp(b.points[0].iter())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(orbits)
}
