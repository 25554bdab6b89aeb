//! Spectral decomposition, the order between basic pieces, adapted
//! filtrations and the open covers `W_i`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::periodic::{find_periodic, PeriodicOrbit};
use crate::error::{Error, Result};
use crate::phase_space::{ser_points, ModelSpace, Point};
use crate::zoo::{sample_grid, Endomorphism, KnownPiece, PieceTemplate};

/// Clustering resolution for periodic orbits.
pub const CLUSTER_RESOLUTION: f64 = 1e-3;

/// Forward steps allowed when shooting along unstable directions.
pub const SHOOTING_STEPS: usize = 200;

/// Default filtration depth `rho` (fraction of the attractor-repeller gap).
pub const FILTRATION_RHO: f64 = 0.1;

/// Default erosion margin between a cover set and its core.
pub const COVER_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Piece {
    /// Periodic points of the piece; empty when the piece is the whole space.
    #[serde(serialize_with = "ser_points")]
    pub points: Vec<Point>,
    pub whole: bool,
    pub unstable_dim: usize,
}

impl Piece {
    /// Distance from `x` to the piece (zero everywhere for a whole-space piece).
    pub fn distance(&self, space: &ModelSpace, x: &Point) -> f64 {
        if self.whole {
            return 0.0;
        }
        self.points.iter().map(|p| space.dist(p, x)).fold(f64::INFINITY, f64::min)
    }
}

/// Closed axis-aligned box; infinite bounds mean "no constraint".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisBox {
    pub bounds: Vec<(f64, f64)>,
}

impl AxisBox {
    pub fn whole(dim: usize) -> Self {
        Self {
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); dim],
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.bounds.iter().zip(p.iter()).all(|((l, u), c)| *c >= *l && *c <= *u)
    }

    /// Distance from `p` to the faces of the box that are not faces of the
    /// ambient space; negative outside, infinite for the whole space.
    pub fn depth(&self, space: &ModelSpace, p: &Point) -> f64 {
        let mut depth = f64::INFINITY;
        for (c, ((l, u), x)) in self.bounds.iter().zip(p.iter()).enumerate() {
            let (sl, su) = (space.lower()[c], space.upper()[c]);
            if l.is_finite() && !(space.is_periodic() || *l <= sl) {
                depth = depth.min(x - l);
            }
            if u.is_finite() && !(space.is_periodic() || *u >= su) {
                depth = depth.min(u - x);
            }
            if *x < *l || *x > *u {
                depth = depth.min(-(l - x).max(x - u));
            }
        }
        depth
    }

    /// Shrinks every face that is not a face of the space by `m`.
    pub fn eroded(&self, space: &ModelSpace, m: f64) -> Self {
        let bounds = self
            .bounds
            .iter()
            .enumerate()
            .map(|(c, &(l, u))| {
                let (sl, su) = (space.lower()[c], space.upper()[c]);
                let l2 = if l.is_finite() && !space.is_periodic() && l > sl { l + m } else { l };
                let u2 = if u.is_finite() && !space.is_periodic() && u < su { u - m } else { u };
                (l2, u2)
            })
            .collect();
        Self { bounds }
    }
}

/// Finite union of boxes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub boxes: Vec<AxisBox>,
}

impl Region {
    pub fn contains(&self, p: &Point) -> bool {
        self.boxes.iter().any(|b| b.contains(p))
    }

    /// Lower bound on the distance from `p` to the relative boundary.
    pub fn depth(&self, space: &ModelSpace, p: &Point) -> f64 {
        self.boxes.iter().map(|b| b.depth(space, p)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Open set `W_i` and its eroded core.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cover {
    pub region: AxisBox,
    pub core: AxisBox,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiltrationReport {
    pub rho: f64,
    pub grid_points: usize,
    /// Smallest depth of `f(p)` in `M_i` over grid points `p` of `M_i`.
    pub min_invariance_depth: f64,
    /// Largest distance to `Omega_i` among orbits that stay in `M_i \ M_{i-1}`.
    pub max_isolation_distance: f64,
    pub tightened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Filtration {
    pub masks: Vec<Region>,
    pub report: FiltrationReport,
}

/// Basic pieces in enumeration order, so that `i ≻ j` implies `i > j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasicPieceSet {
    pub pieces: Vec<Piece>,
    /// Edges `(i, j)` meaning piece `i` is above piece `j`, transitively closed.
    pub order: Vec<(usize, usize)>,
    /// Edges found by orbit shooting (before closure).
    pub shooting_edges: Vec<(usize, usize)>,
    pub template: Option<PieceTemplate>,
    pub filtration: Option<Filtration>,
    pub covers: Option<Vec<Cover>>,
}

impl BasicPieceSet {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Index of the piece nearest to `x`.
    pub fn nearest(&self, space: &ModelSpace, x: &Point) -> usize {
        (0..self.len())
            .min_by(|&a, &b| {
                self.pieces[a]
                    .distance(space, x)
                    .partial_cmp(&self.pieces[b].distance(space, x))
                    .unwrap()
            })
            .unwrap_or(0)
    }

    /// Spectral decomposition, filtration and covers in one go.
    pub fn analyze(f: &Endomorphism) -> Result<Self> {
        let mut set = spectral_decomposition(f)?;
        set.filtration = Some(build_filtration(&set, f)?);
        set.covers = Some(build_covers(&set, f, COVER_MARGIN)?);
        Ok(set)
    }

    pub fn covers(&self) -> Result<&[Cover]> {
        self.covers
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("covers have not been built".into()))
    }
}

fn cluster_orbits(space: &ModelSpace, orbits: Vec<PeriodicOrbit>) -> Result<Vec<Piece>> {
    let n = orbits.len();
    let gap = |a: &PeriodicOrbit, b: &PeriodicOrbit| {
        a.points
            .iter()
            .flat_map(|p| b.points.iter().map(move |q| (p, q)))
            .map(|(p, q)| space.dist(p, q))
            .fold(f64::INFINITY, f64::min)
    };
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            let g = gap(&orbits[i], &orbits[j]);
            if g <= CLUSTER_RESOLUTION {
                let (a, b) = (label[i], label[j]);
                for l in label.iter_mut() {
                    if *l == b {
                        *l = a;
                    }
                }
            } else if g <= 2.0 * CLUSTER_RESOLUTION {
                return Err(Error::AmbiguousClustering(format!(
                    "periodic orbits {g:.2e} apart; supply known pieces"
                )));
            }
        }
    }
    let labels: BTreeSet<usize> = label.iter().copied().collect();
    Ok(labels
        .into_iter()
        .map(|l| {
            let members: Vec<&PeriodicOrbit> = (0..n).filter(|&i| label[i] == l).map(|i| &orbits[i]).collect();
            Piece {
                points: members.iter().flat_map(|o| o.points.iter().cloned()).collect(),
                whole: false,
                unstable_dim: members[0].unstable_dim(),
            }
        })
        .collect())
}

/// Real eigenvectors of `m` for real eigenvalues of modulus above one.
fn unstable_eigenvectors(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let d = m.nrows();
    let mut out = Vec::new();
    for z in m.complex_eigenvalues().iter() {
        if z.im.abs() > 1e-9 || z.re.abs() <= 1.0 {
            continue;
        }
        let shifted = m - DMatrix::identity(d, d) * z.re;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let k = (0..d)
            .min_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap())
            .unwrap();
        let v = vt.row(k).transpose();
        if !out.iter().any(|w: &DVector<f64>| (w.dot(&v)).abs() > 1.0 - 1e-9) {
            out.push(v);
        }
    }
    out
}

fn shoot(f: &Endomorphism, pieces: &[Piece], from: usize) -> Vec<usize> {
    let space = f.space();
    let piece = &pieces[from];
    if piece.whole || piece.unstable_dim == 0 {
        return Vec::new();
    }
    let p = &piece.points[0];
    let m = f.iterate_derivative(p, piece.points.len());
    let mut targets = Vec::new();
    for v in unstable_eigenvectors(&m) {
        for sign in [1.0, -1.0] {
            let mut x = p + &v * (sign * 1e-4);
            if !space.is_periodic() && !space.contains(&x) {
                continue;
            }
            x = space.reduce(&x);
            for _ in 0..SHOOTING_STEPS {
                x = f.eval(&x);
            }
            for (j, other) in pieces.iter().enumerate() {
                if j != from && !other.whole && other.distance(space, &x) < CLUSTER_RESOLUTION {
                    targets.push(j);
                }
            }
        }
    }
    targets.sort_unstable();
    targets.dedup();
    targets
}

fn transitive_closure(q: usize, edges: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    let mut reach = vec![vec![false; q]; q];
    for &(i, j) in edges {
        reach[i][j] = true;
    }
    for k in 0..q {
        for i in 0..q {
            if reach[i][k] {
                for j in 0..q {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    if (0..q).any(|i| reach[i][i]) {
        return Err(Error::NotHyperbolic("cycle in the order between basic pieces".into()));
    }
    Ok((0..q)
        .flat_map(|i| (0..q).map(move |j| (i, j)))
        .filter(|&(i, j)| reach[i][j])
        .collect())
}

/// Basic pieces with the order `≻`, enumerated as a linear extension.
pub fn spectral_decomposition(f: &Endomorphism) -> Result<BasicPieceSet> {
    let space = f.space();
    let known = f.known().filter(|k| !k.pieces.is_empty());
    let (pieces, known_edges, template) = match known {
        Some(k) => {
            let pieces = k
                .pieces
                .iter()
                .map(|p| match p {
                    KnownPiece::Whole { unstable_dim } => Piece {
                        points: Vec::new(),
                        whole: true,
                        unstable_dim: *unstable_dim,
                    },
                    KnownPiece::Cycle { points, unstable_dim } => Piece {
                        points: points.clone(),
                        whole: false,
                        unstable_dim: *unstable_dim,
                    },
                })
                .collect();
            (pieces, k.order.clone(), k.template.clone())
        }
        None => {
            let grid = match space.dim() {
                1 => 201,
                2 => 41,
                _ => 13,
            };
            let mut orbits = Vec::new();
            for p in 1..=4 {
                orbits.extend(find_periodic(f, p, grid)?);
            }
            if orbits.is_empty() {
                return Err(Error::NotHyperbolic("no periodic orbits found".into()));
            }
            (cluster_orbits(space, orbits)?, Vec::new(), None)
        }
    };
    let q = pieces.len();
    let mut shooting = Vec::new();
    for i in 0..q {
        for j in shoot(f, &pieces, i) {
            shooting.push((i, j));
        }
    }
    let mut all: Vec<(usize, usize)> = shooting.clone();
    all.extend(known_edges.iter().copied());
    let closed = transitive_closure(q, &all)?;

    // Kahn: a piece is placed once every piece below it is placed.
    let mut placed = vec![false; q];
    let mut order = Vec::with_capacity(q);
    while order.len() < q {
        let next = (0..q)
            .filter(|&i| !placed[i])
            .filter(|&i| closed.iter().all(|&(a, b)| a != i || placed[b]))
            .min_by_key(|&i| (pieces[i].unstable_dim, i))
            .expect("closure is acyclic");
        placed[next] = true;
        order.push(next);
    }
    let mut position = vec![0; q];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    let remap = |e: &[(usize, usize)]| {
        let mut v: Vec<(usize, usize)> = e.iter().map(|&(a, b)| (position[a], position[b])).collect();
        v.sort_unstable();
        v
    };
    Ok(BasicPieceSet {
        pieces: order.iter().map(|&i| pieces[i].clone()).collect(),
        order: remap(&closed),
        shooting_edges: remap(&shooting),
        template,
        filtration: None,
        covers: None,
    })
}

/// Which split coordinates of the piece sit at the repeller.
fn piece_bits(set: &BasicPieceSet, splits: &[crate::zoo::CoordinateSplit]) -> Result<Vec<Vec<bool>>> {
    set.pieces
        .iter()
        .map(|p| {
            let x = p
                .points
                .first()
                .ok_or_else(|| Error::Filtration("coordinatewise template needs cycle pieces".into()))?;
            Ok(splits
                .iter()
                .map(|s| (x[s.coord] - s.repeller).abs() < (x[s.coord] - s.attractor).abs())
                .collect())
        })
        .collect()
}

fn verification_grid(space: &ModelSpace) -> Vec<Point> {
    let n = (1e4f64.powf(1.0 / space.dim() as f64)).ceil() as usize + 1;
    sample_grid(space, n)
}

fn check_filtration(f: &Endomorphism, set: &BasicPieceSet, masks: &[Region]) -> (f64, f64, usize) {
    let space = f.space();
    let grid = verification_grid(space);
    let min_depth = grid
        .par_iter()
        .map(|p| {
            let fp = f.eval(p);
            masks
                .iter()
                .filter(|m| m.contains(p))
                .map(|m| m.depth(space, &fp))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    let layer = |x: &Point| masks.iter().position(|m| m.contains(x));
    let isolation = grid
        .par_iter()
        .map(|q| {
            let p = f.eval(q);
            let Some(i) = layer(&p) else { return 0.0 };
            let mut y = p.clone();
            for _ in 0..40 {
                y = f.eval(&y);
                if layer(&y) != Some(i) {
                    return 0.0;
                }
            }
            let mut y = p.clone();
            for _ in 0..40 {
                match f.preimages(&y).into_iter().next() {
                    Some(prev) => y = prev,
                    None => break,
                }
                if layer(&y) != Some(i) {
                    return 0.0;
                }
            }
            set.pieces[i].distance(space, &p)
        })
        .reduce(|| 0.0, f64::max);
    (min_depth, isolation, grid.len())
}

fn coordinatewise_masks(
    f: &Endomorphism,
    set: &BasicPieceSet,
    splits: &[crate::zoo::CoordinateSplit],
    rho: f64,
) -> Result<Vec<Region>> {
    let space = f.space();
    let bits = piece_bits(set, splits)?;
    let boxes: Vec<AxisBox> = bits
        .iter()
        .map(|b| {
            let mut bounds: Vec<(f64, f64)> = space.lower().iter().copied().zip(space.upper().iter().copied()).collect();
            for (s, high) in splits.iter().zip(b) {
                if !high {
                    bounds[s.coord].1 = s.repeller - rho * (s.repeller - s.attractor);
                }
            }
            AxisBox { bounds }
        })
        .collect();
    Ok((1..=boxes.len())
        .map(|i| Region {
            boxes: boxes[..i].to_vec(),
        })
        .collect())
}

/// Adapted filtration `M_1 ⊂ ... ⊂ M_q` from the system's template, checked on
/// a grid of at least `10^4` points; `rho` is halved once on failure.
pub fn build_filtration(set: &BasicPieceSet, f: &Endomorphism) -> Result<Filtration> {
    let space = f.space();
    match &set.template {
        Some(PieceTemplate::Transitive) if set.len() == 1 => Ok(Filtration {
            masks: vec![Region {
                boxes: vec![AxisBox::whole(space.dim())],
            }],
            report: FiltrationReport {
                rho: 0.0,
                grid_points: 0,
                min_invariance_depth: f64::INFINITY,
                max_isolation_distance: 0.0,
                tightened: false,
            },
        }),
        Some(PieceTemplate::Coordinatewise { splits }) => {
            let mut rho = FILTRATION_RHO;
            for attempt in 0..2 {
                let masks = coordinatewise_masks(f, set, splits, rho)?;
                let (depth, iso, n) = check_filtration(f, set, &masks);
                if depth > 0.0 && iso <= CLUSTER_RESOLUTION {
                    return Ok(Filtration {
                        masks,
                        report: FiltrationReport {
                            rho,
                            grid_points: n,
                            min_invariance_depth: depth,
                            max_isolation_distance: iso,
                            tightened: attempt > 0,
                        },
                    });
                }
                if attempt == 1 {
                    return Err(Error::Filtration(format!(
                        "rho = {rho}: invariance depth {depth:e}, isolation distance {iso:e}"
                    )));
                }
                rho /= 2.0;
            }
            unreachable!()
        }
        _ => Err(Error::Unsupported(format!(
            "{}: no filtration template for this system",
            f.name()
        ))),
    }
}

/// Open covers `W_i ⊃ Ω_i` with cores eroded by `margin`.
///
/// For coordinatewise templates each split coordinate is covered by a low set
/// `[lo, b)` and a high set `(a, hi]` with `f(b) < a < b`, so the low set never
/// maps into the high one.
pub fn build_covers(set: &BasicPieceSet, f: &Endomorphism, margin: f64) -> Result<Vec<Cover>> {
    let space = f.space();
    match &set.template {
        Some(PieceTemplate::Transitive) if set.len() == 1 => {
            let w = AxisBox::whole(space.dim());
            Ok(vec![Cover {
                region: w.clone(),
                core: w,
                margin,
            }])
        }
        Some(PieceTemplate::Coordinatewise { splits }) => {
            let bits = piece_bits(set, splits)?;
            let mut thresholds = Vec::with_capacity(splits.len());
            let mut m = margin;
            for s in splits {
                let gap = s.repeller - s.attractor;
                let mut probe = DVector::zeros(space.dim());
                for t in splits {
                    probe[t.coord] = t.attractor;
                }
                // Threshold b with the widest overlap b - f(b), away from both ends.
                let (b, fb) = (5..=95)
                    .map(|k| {
                        let b = s.attractor + gap * k as f64 / 100.0;
                        probe[s.coord] = b;
                        (b, f.eval(&probe)[s.coord])
                    })
                    .max_by(|x, y| (x.0 - x.1).total_cmp(&(y.0 - y.1)))
                    .unwrap();
                let a = 0.5 * (fb + b);
                m = m.min(margin * gap).min((b - a) / 2.5);
                thresholds.push((a, b));
            }
            let covers = bits
                .iter()
                .map(|bv| {
                    let mut bounds: Vec<(f64, f64)> =
                        space.lower().iter().copied().zip(space.upper().iter().copied()).collect();
                    for ((s, &(a, b)), high) in splits.iter().zip(&thresholds).zip(bv) {
                        if *high {
                            bounds[s.coord].0 = a;
                        } else {
                            bounds[s.coord].1 = b;
                        }
                    }
                    let region = AxisBox { bounds };
                    let core = region.eroded(space, m);
                    Cover { region, core, margin: m }
                })
                .collect::<Vec<_>>();
            for (c, p) in covers.iter().zip(&set.pieces) {
                if !p.points.iter().all(|x| c.core.contains(x)) {
                    return Err(Error::CoverageGap("a basic piece is not inside its cover".into()));
                }
            }
            Ok(covers)
        }
        _ => Err(Error::Unsupported(format!("{}: no cover template for this system", f.name()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;
    use nalgebra::dvector;

    #[test]
    fn doubling_is_one_piece() {
        let set = BasicPieceSet::analyze(&zoo::doubling()).unwrap();
        assert_eq!(set.len(), 1);
        assert!(set.pieces[0].whole);
        assert!(set.order.is_empty());
        let m = &set.filtration.as_ref().unwrap().masks;
        assert_eq!(m.len(), 1);
        assert!(m[0].contains(&dvector![0.7]));
    }

    #[test]
    fn quadratic_two_pieces() {
        let f = zoo::quadratic(0.0).unwrap();
        let set = BasicPieceSet::analyze(&f).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.pieces[0].points[0], dvector![0.0]);
        assert_eq!(set.pieces[1].points[0], dvector![1.0]);
        assert_eq!(set.order, vec![(1, 0)]);
        assert_eq!(set.shooting_edges, vec![(1, 0)]);
        let filt = set.filtration.as_ref().unwrap();
        assert_eq!(filt.report.rho, 0.1);
        assert!(filt.report.grid_points >= 10_000);
        assert!(filt.masks[0].contains(&dvector![0.9]));
        assert!(!filt.masks[0].contains(&dvector![0.95]));
        assert!(filt.report.min_invariance_depth > 0.0);
        let covers = set.covers().unwrap();
        // b = 1/2 maximizes b - b^2; a = (b^2 + b)/2.
        assert!((covers[0].region.bounds[0].1 - 0.5).abs() < 1e-12);
        assert!((covers[1].region.bounds[0].0 - 0.375).abs() < 1e-12);
        assert!((covers[0].margin - 0.05).abs() < 1e-12);
    }

    #[test]
    fn quadratic_discovered_without_known_data() {
        let q = zoo::quadratic(0.0).unwrap();
        let bare = Endomorphism::custom("bare", q.space().clone(), |x| x.map(|c| c * c), |x| {
            DMatrix::from_element(1, 1, 2.0 * x[0])
        });
        let set = spectral_decomposition(&bare).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.order, vec![(1, 0)]);
        assert!(build_filtration(&set, &bare).is_err());
    }

    #[test]
    fn product_square_order() {
        let f = zoo::product_squares();
        let set = BasicPieceSet::analyze(&f).unwrap();
        let pts: Vec<Vec<f64>> = set.pieces.iter().map(|p| p.points[0].as_slice().to_vec()).collect();
        assert_eq!(
            pts,
            vec![vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0]]
        );
        for &(i, j) in &set.order {
            assert!(i > j);
        }
        let mut expected = vec![(1, 0), (2, 0), (3, 0), (3, 1), (3, 2)];
        expected.sort_unstable();
        assert_eq!(set.order, expected);
        assert_eq!(set.filtration.as_ref().unwrap().masks.len(), 4);
        assert_eq!(set.covers().unwrap().len(), 4);
    }

    #[test]
    fn masks_are_nested_and_invariant() {
        for f in [zoo::quadratic(0.0).unwrap(), zoo::product_squares(), zoo::delay(1, 2, 0.0).unwrap()] {
            let set = BasicPieceSet::analyze(&f).unwrap();
            let masks = &set.filtration.as_ref().unwrap().masks;
            for p in verification_grid(f.space()) {
                for i in 1..masks.len() {
                    if masks[i - 1].contains(&p) {
                        assert!(masks[i].contains(&p));
                    }
                }
                for m in masks {
                    if m.contains(&p) {
                        assert!(m.depth(f.space(), &f.eval(&p)) > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn covers_never_climb() {
        // Images of points in W_i never land in a W_j with j > i unless already in it.
        let f = zoo::product_squares();
        let set = BasicPieceSet::analyze(&f).unwrap();
        let covers = set.covers().unwrap();
        let top = |x: &Point| (0..covers.len()).rev().find(|&i| covers[i].region.contains(x));
        for p in sample_grid(f.space(), 41) {
            assert!(top(&f.eval(&p)) <= top(&p));
        }
    }
}
