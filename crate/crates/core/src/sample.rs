//! Finite, shift-closed samples of the inverse limit.
//!
//! Every node carries a point `x_0` together with the index of its
//! predecessor (a node whose point maps onto `x_0`) and its successor (the
//! node holding `f(x_0)`). Walking these links yields full orbit windows, so
//! the shift and its inverse act on the sample itself. Two builders exist:
//! rational lattices for linear torus maps, where the map permutes the
//! lattice exactly, and trajectory graphs for box maps, where backward and
//! forward orbits of seed points are followed until they land on a periodic
//! orbit, which closes the graph.

use std::sync::OnceLock;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phase_space::{d_inf, ModelSpace, OrbitWindow, Point, ORBIT_TOLERANCE};
use crate::zoo::{sample_grid, Endomorphism, KnownPiece};

/// Distance at which a trajectory is considered to have landed on a cycle.
pub const CAPTURE_TOLERANCE: f64 = 1e-13;

/// Longest backward or forward trajectory followed from one seed.
pub const MAX_TRAJECTORY: usize = 600;

/// Smallest `d_inf` for pairs entering Lipschitz quotients.
pub const MIN_PAIR_DISTANCE: f64 = 1e-4;

#[derive(Debug)]
pub struct OrbitSample {
    space: ModelSpace,
    points: Vec<Point>,
    pred: Vec<usize>,
    succ: Vec<usize>,
    windows: Vec<OrbitWindow>,
    pairs: OnceLock<Vec<(u32, u32, f64)>>,
}

impl Clone for OrbitSample {
    fn clone(&self) -> Self {
        Self {
            space: self.space.clone(),
            points: self.points.clone(),
            pred: self.pred.clone(),
            succ: self.succ.clone(),
            windows: self.windows.clone(),
            pairs: OnceLock::new(),
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl OrbitSample {
    /// Builds a sample from explicit links and checks that every window is an orbit of `f`.
    pub fn from_links(
        f: &Endomorphism,
        points: Vec<Point>,
        pred: Vec<usize>,
        succ: Vec<usize>,
        k_back: usize,
        k_fwd: usize,
    ) -> Result<Self> {
        let n = points.len();
        if n == 0 || pred.len() != n || succ.len() != n {
            return Err(Error::InvalidParameter("sample links must cover every node".into()));
        }
        if pred.iter().chain(&succ).any(|&i| i >= n) {
            return Err(Error::InvalidParameter("sample link out of range".into()));
        }
        let space = f.space().clone();
        let windows = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut past = Vec::with_capacity(k_back);
                let mut j = i;
                for _ in 0..k_back {
                    j = pred[j];
                    past.push(points[j].clone());
                }
                past.reverse();
                let mut coords = past;
                let mut j = i;
                coords.push(points[j].clone());
                for _ in 0..k_fwd {
                    j = succ[j];
                    coords.push(points[j].clone());
                }
                let w = OrbitWindow::from_map(space.clone(), coords, k_back, |p| f.eval(p))?;
                w.check_residual(ORBIT_TOLERANCE)?;
                Ok(w)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            space,
            points,
            pred,
            succ,
            windows,
            pairs: OnceLock::new(),
        })
    }

    /// Rational lattice `(Z/m)^d` for a linear torus map permuting it.
    pub fn lattice(f: &Endomorphism, m: usize, k_back: usize, k_fwd: usize) -> Result<Self> {
        let space = f.space();
        if !space.is_periodic() {
            return Err(Error::Unsupported(format!("{}: lattice samples need a torus", f.name())));
        }
        let d = space.dim();
        let total = m
            .checked_pow(d as u32)
            .filter(|t| *t <= 1 << 20)
            .ok_or_else(|| Error::InvalidParameter(format!("lattice {m}^{d} too large")))?;
        let index_of = |p: &Point| -> Option<usize> {
            let mut idx = 0;
            for c in (0..d).rev() {
                let k = p[c] * m as f64;
                let r = k.round();
                if (k - r).abs() > 1e-6 {
                    return None;
                }
                idx = idx * m + (r as usize % m);
            }
            Some(idx)
        };
        let points: Vec<Point> = (0..total)
            .map(|mut idx| {
                DVector::from_fn(d, |_, _| {
                    let k = idx % m;
                    idx /= m;
                    k as f64 / m as f64
                })
            })
            .collect();
        let succ = points
            .iter()
            .map(|p| {
                index_of(&f.eval(p)).ok_or_else(|| {
                    Error::Unsupported(format!("{} does not preserve the 1/{m} lattice", f.name()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut pred = vec![usize::MAX; total];
        for (i, &s) in succ.iter().enumerate() {
            if pred[s] != usize::MAX {
                return Err(Error::InvalidParameter(format!(
                    "{} is not a bijection of the 1/{m} lattice; pick m coprime to the degree",
                    f.name()
                )));
            }
            pred[s] = i;
        }
        Self::from_links(f, points, pred, succ, k_back, k_fwd)
    }

    /// Trajectory graph through a grid of seeds, closed off on the given cycles.
    ///
    /// Seeds are taken on `f(M)` by applying `f` once to a regular grid.
    pub fn trajectories(
        f: &Endomorphism,
        per_axis: usize,
        cycles: &[Vec<Point>],
        k_back: usize,
        k_fwd: usize,
    ) -> Result<Self> {
        if !f.has_preimages() {
            return Err(Error::Unsupported(format!("{}: no preimage branches", f.name())));
        }
        if cycles.is_empty() {
            return Err(Error::InvalidParameter("trajectory sample needs at least one cycle".into()));
        }
        let space = f.space();
        let mut points: Vec<Point> = Vec::new();
        let mut pred: Vec<usize> = Vec::new();
        let mut succ: Vec<usize> = Vec::new();
        // Cycle nodes first.
        let mut cycle_nodes: Vec<(Point, usize)> = Vec::new();
        for cyc in cycles {
            let base = points.len();
            let p = cyc.len();
            for (k, x) in cyc.iter().enumerate() {
                points.push(x.clone());
                pred.push(base + (k + p - 1) % p);
                succ.push(base + (k + 1) % p);
                cycle_nodes.push((x.clone(), base + k));
            }
        }
        let captured = |x: &Point| -> Option<usize> {
            cycle_nodes
                .iter()
                .find(|(c, _)| space.dist(c, x) <= CAPTURE_TOLERANCE)
                .map(|(_, i)| *i)
        };

        let mut seeds: Vec<Point> = Vec::new();
        for g in sample_grid(space, per_axis.max(2)) {
            let s = f.eval(&g);
            if captured(&s).is_none() && !seeds.iter().any(|q| space.dist(q, &s) < 1e-12) {
                seeds.push(s);
            }
        }

        for seed in seeds {
            // Backward: s_0 = seed, s_1, s_2, ... preimages, ending at a node captured by a cycle.
            let mut back = vec![seed.clone()];
            let mut back_anchor = None;
            for _ in 0..MAX_TRAJECTORY {
                let last = back.last().unwrap();
                let Some(prev) = f.preimages(last).into_iter().next() else { break };
                if let Some(c) = captured(&prev) {
                    back_anchor = Some(pred[c]);
                    back.push(prev);
                    break;
                }
                back.push(prev);
            }
            let mut fwd = Vec::new();
            let mut fwd_anchor = None;
            let mut y = seed.clone();
            for _ in 0..MAX_TRAJECTORY {
                y = f.eval(&y);
                if let Some(c) = captured(&y) {
                    fwd_anchor = Some(succ[c]);
                    fwd.push(y.clone());
                    break;
                }
                fwd.push(y.clone());
            }
            let (Some(ba), Some(fa)) = (back_anchor, fwd_anchor) else { continue };
            // Node order: oldest past point first, then the seed, then the future.
            let base = points.len();
            let chain: Vec<Point> = back.into_iter().rev().chain(fwd).collect();
            let len = chain.len();
            for (k, x) in chain.into_iter().enumerate() {
                points.push(x);
                pred.push(if k == 0 { ba } else { base + k - 1 });
                succ.push(if k + 1 == len { fa } else { base + k + 1 });
            }
        }
        Self::from_links(f, points, pred, succ, k_back, k_fwd)
    }

    /// Default sample for a system: a lattice on tori, a trajectory graph on boxes.
    ///
    /// `density` is the lattice size per axis (adjusted to be coprime to the
    /// degree) or the number of seeds per axis.
    pub fn for_system(f: &Endomorphism, density: usize, k_back: usize, k_fwd: usize) -> Result<Self> {
        if density < 2 {
            return Err(Error::InvalidParameter("sample density must be at least 2".into()));
        }
        if f.space().is_periodic() {
            let a = f.derivative(&DVector::zeros(f.space().dim()));
            let det = a.determinant().round().abs() as u64;
            let mut m = density as u64;
            while gcd(m, det.max(1)) != 1 {
                m += 1;
            }
            return Self::lattice(f, m as usize, k_back, k_fwd);
        }
        let cycles: Vec<Vec<Point>> = match f.known() {
            Some(k) if !k.pieces.is_empty() => k
                .pieces
                .iter()
                .filter_map(|p| match p {
                    KnownPiece::Cycle { points, .. } => Some(points.clone()),
                    KnownPiece::Whole { .. } => None,
                })
                .collect(),
            _ => crate::hyperbolic::find_periodic(f, 1, 41)?
                .into_iter()
                .chain(crate::hyperbolic::find_periodic(f, 2, 41)?)
                .map(|o| o.points)
                .collect(),
        };
        Self::trajectories(f, density, &cycles, k_back, k_fwd)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Node holding `f^{-1}` of node `i` along the sampled branch.
    pub fn pred(&self, i: usize) -> usize {
        self.pred[i]
    }

    pub fn succ(&self, i: usize) -> usize {
        self.succ[i]
    }

    pub fn window(&self, i: usize) -> &OrbitWindow {
        &self.windows[i]
    }

    pub fn windows(&self) -> &[OrbitWindow] {
        &self.windows
    }

    pub fn k_back(&self) -> usize {
        self.windows[0].k_back()
    }

    pub fn k_fwd(&self) -> usize {
        self.windows[0].k_fwd()
    }

    /// Pairs `(i, j, d_inf)` with `i < j` and `d_inf >= MIN_PAIR_DISTANCE`.
    ///
    /// All pairs for small samples; otherwise a seeded random subset of about
    /// `MAX_PAIRS` pairs plus each node's nearest neighbours in `x_0`.
    pub fn lipschitz_pairs(&self) -> &[(u32, u32, f64)] {
        self.pairs.get_or_init(|| self.build_pairs())
    }

    fn build_pairs(&self) -> Vec<(u32, u32, f64)> {
        const MAX_PAIRS: usize = 400_000;
        let n = self.len();
        let dist = |i: usize, j: usize| d_inf(&self.windows[i], &self.windows[j]).expect("same space").value;
        let candidates: Vec<(usize, usize)> = if n * (n - 1) / 2 <= MAX_PAIRS {
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_u64 ^ n as u64);
            let mut c: Vec<(usize, usize)> = (0..MAX_PAIRS)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    let j = rng.random_range(0..n);
                    (i.min(j), i.max(j))
                })
                .filter(|(i, j)| i != j)
                .collect();
            // Close pairs dominate Lipschitz quotients; add neighbours in x_0 order.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                self.points[a]
                    .iter()
                    .partial_cmp(self.points[b].iter())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            for w in order.windows(4) {
                for k in 1..4 {
                    c.push((w[0].min(w[k]), w[0].max(w[k])));
                }
            }
            c.sort_unstable();
            c.dedup();
            c
        };
        candidates
            .into_par_iter()
            .filter_map(|(i, j)| {
                let d = dist(i, j);
                (d >= MIN_PAIR_DISTANCE).then_some((i as u32, j as u32, d))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::d1;
    use crate::zoo;
    use nalgebra::dvector;

    #[test]
    fn doubling_lattice_is_shift_closed() {
        let f = zoo::doubling();
        let s = OrbitSample::lattice(&f, 255, 24, 24).unwrap();
        assert_eq!(s.len(), 255);
        for i in 0..s.len() {
            assert_eq!(s.pred(s.succ(i)), i);
            let w = s.window(i);
            assert!(w.residual() < 1e-12);
            assert_eq!(w.get(1).unwrap(), s.point(s.succ(i)));
        }
        // 1/3 is in the lattice; its window is the period-2 orbit.
        let third = s.points().iter().position(|p| (p[0] - 1.0 / 3.0).abs() < 1e-12).unwrap();
        let zero = s.points().iter().position(|p| p[0] == 0.0).unwrap();
        let d = d1(s.window(zero), s.window(third)).unwrap();
        assert!((d.value - 1.0).abs() <= d.tail_bound + 1e-12);
        assert!(OrbitSample::lattice(&f, 256, 4, 4).is_err());
    }

    #[test]
    fn cat_map_lattice() {
        let f = zoo::by_name("torus:2,1,1,1").unwrap();
        let s = OrbitSample::for_system(&f, 13, 10, 10).unwrap();
        assert_eq!(s.len(), 169);
        assert!(s.windows().iter().all(|w| w.residual() < 1e-12));
    }

    #[test]
    fn quadratic_trajectories_close_on_fixed_points() {
        let f = zoo::quadratic(0.0).unwrap();
        let s = OrbitSample::for_system(&f, 20, 24, 24).unwrap();
        assert!(s.len() > 100);
        assert_eq!(s.point(0), &dvector![0.0]);
        assert_eq!(s.pred(0), 0);
        assert_eq!(s.point(1), &dvector![1.0]);
        for i in 0..s.len() {
            assert!((f.eval(s.point(i))[0] - s.point(s.succ(i))[0]).abs() <= 1e-12);
            let back = f.eval(s.point(s.pred(i)));
            assert!((back[0] - s.point(i)[0]).abs() <= CAPTURE_TOLERANCE);
        }
    }

    #[test]
    fn product_trajectories() {
        let f = zoo::product_squares();
        let s = OrbitSample::for_system(&f, 6, 12, 12).unwrap();
        assert!(s.points().iter().all(|p| p[2] == 0.0));
        assert!(s.len() > 4);
    }

    #[test]
    fn pairs_respect_threshold() {
        let f = zoo::doubling();
        let s = OrbitSample::lattice(&f, 63, 8, 8).unwrap();
        let pairs = s.lipschitz_pairs();
        assert_eq!(pairs.len(), 63 * 62 / 2);
        assert!(pairs.iter().all(|p| p.2 >= MIN_PAIR_DISTANCE));
    }
}
