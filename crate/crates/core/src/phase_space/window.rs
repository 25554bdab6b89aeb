use serde::{Deserialize, Serialize};

use super::space::{ModelSpace, Point};
use crate::error::{Error, Result};

/// Default pseudo-orbit tolerance for windows.
pub const ORBIT_TOLERANCE: f64 = 1e-10;

/// Default past and future window lengths.
pub const DEFAULT_WINDOW: usize = 24;

/// Finite truncation `(x_{-K_b}, ..., x_0, ..., x_{K_f})` of a point of the
/// inverse limit.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitWindow {
    space: ModelSpace,
    coords: Vec<Point>,
    k_back: usize,
    residual: f64,
}

impl OrbitWindow {
    /// Builds a window from its coordinates, with `coords[k_back]` playing `x_0`.
    ///
    /// The residual is the pseudo-orbit defect `max d(f(x_n), x_{n+1})` and is
    /// supplied by the caller, who owns the map.
    pub fn new(space: ModelSpace, coords: Vec<Point>, k_back: usize, residual: f64) -> Result<Self> {
        if k_back < 1 || coords.len() < k_back + 2 {
            return Err(Error::InvalidWindow(format!(
                "need K_b >= 1 and K_f >= 1 (got {} coords, K_b = {k_back})",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().find(|p| p.len() != space.dim()) {
            return Err(Error::InvalidWindow(format!(
                "coordinate of dimension {} in a {space}",
                bad.len()
            )));
        }
        if !residual.is_finite() || residual < 0.0 {
            return Err(Error::InvalidWindow(format!("bad residual {residual}")));
        }
        Ok(Self {
            space,
            coords,
            k_back,
            residual,
        })
    }

    /// Like [`OrbitWindow::new`] but computes the residual from `map`.
    pub fn from_map(
        space: ModelSpace,
        coords: Vec<Point>,
        k_back: usize,
        map: impl Fn(&Point) -> Point,
    ) -> Result<Self> {
        let residual = coords
            .windows(2)
            .map(|w| space.dist(&map(&w[0]), &w[1]))
            .fold(0.0, f64::max);
        Self::new(space, coords, k_back, residual)
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    pub fn k_back(&self) -> usize {
        self.k_back
    }

    pub fn k_fwd(&self) -> usize {
        self.coords.len() - 1 - self.k_back
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn check_residual(&self, tolerance: f64) -> Result<()> {
        if self.residual <= tolerance {
            Ok(())
        } else {
            Err(Error::OrbitDefect {
                residual: self.residual,
                tolerance,
            })
        }
    }

    /// Coordinate `x_n`, if `-K_b <= n <= K_f`.
    pub fn get(&self, n: isize) -> Option<&Point> {
        let idx = n + self.k_back as isize;
        if idx < 0 {
            return None;
        }
        self.coords.get(idx as usize)
    }

    pub fn x0(&self) -> &Point {
        &self.coords[self.k_back]
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    /// Iterator over `(n, x_n)`.
    pub fn indexed(&self) -> impl Iterator<Item = (isize, &Point)> {
        let kb = self.k_back as isize;
        self.coords.iter().enumerate().map(move |(i, p)| (i as isize - kb, p))
    }

    /// Certified bound on the `d_1` mass carried by the indices outside the window.
    pub fn tail_bound(&self) -> f64 {
        tail_mass(self.space.diameter(), self.k_back, self.k_fwd())
    }

    /// The window of `f^k(x)`: index `n` of the result is index `n + k` of `self`.
    ///
    /// Both sides lose `|k|` coordinates so the result stays inside the known range.
    pub fn shift(&self, k: isize) -> Result<Self> {
        let m = k.unsigned_abs();
        let available = self.k_back.min(self.k_fwd());
        if m >= available {
            return Err(Error::WindowTooShort {
                needed: m + 1,
                available,
            });
        }
        let new_kb = self.k_back - m;
        let new_kf = self.k_fwd() - m;
        let coords = (-(new_kb as isize)..=new_kf as isize)
            .map(|n| self.get(n + k).expect("index checked above").clone())
            .collect();
        Self::new(self.space.clone(), coords, new_kb, self.residual)
    }
}

fn tail_mass(diam: f64, k_back: usize, k_fwd: usize) -> f64 {
    diam / 2f64.powi(k_back as i32) + diam / 2f64.powi(k_fwd as i32)
}

/// `d_1` between two windows together with the certified tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductDistance {
    pub value: f64,
    pub tail_bound: f64,
}

/// `d_inf` over the overlap, flagging whether the sup was attained away from
/// the window ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupDistance {
    pub value: f64,
    pub interior: bool,
}

fn overlap(a: &OrbitWindow, b: &OrbitWindow) -> Result<(usize, usize)> {
    a.space.same_as(&b.space)?;
    Ok((a.k_back.min(b.k_back), a.k_fwd().min(b.k_fwd())))
}

/// Weighted product metric `sum_n d(a_n, b_n) / 2^|n|` over the common index range.
pub fn d1(a: &OrbitWindow, b: &OrbitWindow) -> Result<ProductDistance> {
    let (kb, kf) = overlap(a, b)?;
    let value = (-(kb as isize)..=kf as isize)
        .map(|n| {
            let d = a.space.dist(a.get(n).unwrap(), b.get(n).unwrap());
            d / 2f64.powi(n.unsigned_abs() as i32)
        })
        .sum();
    Ok(ProductDistance {
        value,
        tail_bound: tail_mass(a.space.diameter(), kb, kf),
    })
}

/// Sup metric `sup_n d(a_n, b_n)` over the common index range.
pub fn d_inf(a: &OrbitWindow, b: &OrbitWindow) -> Result<SupDistance> {
    let (kb, kf) = overlap(a, b)?;
    let lo = -(kb as isize);
    let hi = kf as isize;
    let mut best = (0.0, 0isize);
    for n in lo..=hi {
        let d = a.space.dist(a.get(n).unwrap(), b.get(n).unwrap());
        if d > best.0 {
            best = (d, n);
        }
    }
    // Ties with an endpoint value count as attained at the endpoint.
    let end_val = a
        .space
        .dist(a.get(lo).unwrap(), b.get(lo).unwrap())
        .max(a.space.dist(a.get(hi).unwrap(), b.get(hi).unwrap()));
    let interior = best.1 != lo && best.1 != hi && best.0 > end_val;
    Ok(SupDistance {
        value: best.0,
        interior: interior || best.0 == 0.0,
    })
}
