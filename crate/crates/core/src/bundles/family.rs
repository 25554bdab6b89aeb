use nalgebra::DMatrix;
use serde::Serialize;

use super::field::{pull_back_plane, PlaneField};
use crate::error::{Error, Result};
use crate::hyperbolic::{cone_iterate_unstable, stable_subspace, AxisBox, BasicPieceSet};
use crate::phase_space::{oblique_projectors, ModelSpace, Point, Subspace};
use crate::sample::OrbitSample;
use crate::smoothing::{PartitionOfUnity, SmoothedDerivative};
use crate::zoo::{Endomorphism, PieceTemplate};

/// Stop when a sweep moves no plane by more than this.
pub const SWEEP_TOLERANCE: f64 = 1e-9;

/// Largest allowed `d_G` between a solved plane and its seed.
pub const BALL_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BundleParams {
    pub ball_radius: f64,
    pub max_sweeps: usize,
}

impl Default for BundleParams {
    fn default() -> Self {
        Self {
            ball_radius: BALL_RADIUS,
            max_sweeps: 2000,
        }
    }
}

/// Stable and unstable families of one basic piece.
#[derive(Debug, Clone)]
pub struct PieceBundles {
    pub stable: PlaneField,
    pub unstable: PlaneField,
    /// Nodes whose `x_0` lies in the cover set `W_i`.
    pub member: Vec<bool>,
    pub stable_sweeps: usize,
    pub unstable_sweeps: usize,
}

/// Bundle families of every piece at one value of `δ`.
#[derive(Debug, Clone)]
pub struct BundleFamily {
    pub delta: f64,
    pub pieces: Vec<PieceBundles>,
    /// Edges `(i, j)` with piece `i` above piece `j`.
    pub order: Vec<(usize, usize)>,
}

impl BundleFamily {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Oblique projectors `(π^s, π^u)` of piece `i` at node `n`.
    pub fn projectors(&self, i: usize, n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let p = &self.pieces[i];
        oblique_projectors(&p.stable.planes[n], &p.unstable.planes[n])
    }
}

/// Membership in a cover set, reading boxes modulo 1 on tori.
pub fn in_region(space: &ModelSpace, b: &AxisBox, p: &Point) -> bool {
    b.bounds.iter().zip(p.iter()).all(|(&(l, u), &c)| {
        let hit = |x: f64| x >= l && x <= u;
        hit(c) || (space.is_periodic() && (hit(c - 1.0) || hit(c + 1.0)))
    })
}

/// Tangent stable and unstable directions of each piece, in `R^N`.
pub fn tangent_seeds(f: &Endomorphism, sample: &OrbitSample, pieces: &BasicPieceSet) -> Result<Vec<(Subspace, Subspace)>> {
    let d = f.space().dim();
    match &pieces.template {
        Some(PieceTemplate::Transitive) => {
            let piece = &pieces.pieces[0];
            let u = piece.unstable_dim;
            let w = sample.window(0);
            let iters = w.k_back().min(w.k_fwd()).min(30);
            let unstable = if u == 0 {
                Subspace::zero(d)
            } else if u == d {
                Subspace::full(d)
            } else {
                let seed = crate::hyperbolic::generic_frame(d, u, 11)?;
                cone_iterate_unstable(f, w, &seed, iters)?.subspace
            };
            let stable = stable_subspace(f, w, u, iters, 13)?;
            Ok(vec![(stable, unstable)])
        }
        Some(PieceTemplate::Coordinatewise { splits }) => pieces
            .pieces
            .iter()
            .map(|piece| {
                let p = piece
                    .points
                    .first()
                    .ok_or_else(|| Error::Unsupported("coordinatewise piece without points".into()))?;
                let unstable_axes: Vec<usize> = splits
                    .iter()
                    .filter(|s| (p[s.coord] - s.repeller).abs() < (p[s.coord] - s.attractor).abs())
                    .map(|s| s.coord)
                    .collect();
                let stable_axes: Vec<usize> = (0..d).filter(|c| !unstable_axes.contains(c)).collect();
                Ok((Subspace::coordinate(d, &stable_axes), Subspace::coordinate(d, &unstable_axes)))
            })
            .collect(),
        None => Err(Error::Unsupported(format!(
            "{}: bundle seeds need a piece template",
            f.name()
        ))),
    }
}

/// `E ⊕ 0` (`second = false`) or `E ⊕ R^N` (`second = true`) in `R^{2N}`.
fn doubled(e: &Subspace, second: bool) -> Subspace {
    let n = e.ambient();
    let extra = if second { n } else { 0 };
    let mut b = DMatrix::zeros(2 * n, e.dim() + extra);
    b.view_mut((0, 0), (n, e.dim())).copy_from(e.basis());
    for k in 0..extra {
        b[(n + k, e.dim() + k)] = 1.0;
    }
    Subspace::from_spanning(&b).expect("orthonormal blocks")
}

fn membership(sample: &OrbitSample, pieces: &BasicPieceSet) -> Result<Vec<Vec<bool>>> {
    let covers = pieces.covers()?;
    Ok(covers
        .iter()
        .map(|c| {
            (0..sample.len())
                .map(|n| in_region(sample.space(), &c.region, sample.point(n)))
                .collect()
        })
        .collect())
}

/// Image of `seed` under the `γ`-weighted blend of the given projectors.
fn blend(
    seed: &Subspace,
    projectors: &[(f64, DMatrix<f64>)],
) -> Result<Option<Subspace>> {
    let total: f64 = projectors.iter().map(|(w, _)| w).sum();
    if !(total > 0.0) {
        return Ok(None);
    }
    let n = seed.ambient();
    let mut p = DMatrix::zeros(n, n);
    for (w, q) in projectors {
        p += q * (*w / total);
    }
    let img = Subspace::span_of(&(p * seed.basis()), 1e-9)?;
    if img.dim() < seed.dim() {
        return Err(Error::RankCollapse(format!(
            "blended projection drops a {}-plane to rank {}",
            seed.dim(),
            img.dim()
        )));
    }
    Ok(Some(img))
}

fn sweep_stable(
    sample: &OrbitSample,
    fd: &SmoothedDerivative,
    member: &[bool],
    field: &mut [Subspace],
) -> Result<f64> {
    let mut change: f64 = 0.0;
    for n in (0..sample.len()).rev() {
        if !member[n] {
            continue;
        }
        let new = pull_back_plane(fd, sample.point(n), &field[sample.succ(n)])?;
        change = change.max(new.distance(&field[n]));
        field[n] = new;
    }
    Ok(change)
}

fn sweep_unstable(
    sample: &OrbitSample,
    fd: &SmoothedDerivative,
    member: &[bool],
    field: &mut [Subspace],
) -> Result<f64> {
    let mut change: f64 = 0.0;
    for n in 0..sample.len() {
        if !member[n] {
            continue;
        }
        let p = sample.pred(n);
        let new = field[p].image(&fd.matrix(sample.point(p)))?;
        change = change.max(new.distance(&field[n]));
        field[n] = new;
    }
    Ok(change)
}

fn check_ball(field: &[Subspace], seed: &Subspace, member: &[bool], radius: f64, what: &str) -> Result<()> {
    for (n, p) in field.iter().enumerate() {
        if member[n] {
            let d = p.distance(seed);
            if d > radius {
                return Err(Error::LeftBall(format!(
                    "{what}: plane at node {n} is {d:.3} from its seed (radius {radius})"
                )));
            }
        }
    }
    Ok(())
}

/// Stable families `E_i^s` in increasing piece order.
///
/// On `W_i` the family is the fixed point of the pull-back; off `W_i` it is
/// the seed `δ-block ⊕ E^s_tangent` projected onto the stable planes of the
/// lower pieces, blended with the partition of unity.
pub fn solve_stable_family(
    f: &Endomorphism,
    sample: &OrbitSample,
    pieces: &BasicPieceSet,
    partition: &PartitionOfUnity,
    fd: &SmoothedDerivative,
    params: &BundleParams,
) -> Result<(Vec<PlaneField>, Vec<usize>)> {
    let seeds = tangent_seeds(f, sample, pieces)?;
    let member = membership(sample, pieces)?;
    let mut out: Vec<PlaneField> = Vec::with_capacity(pieces.len());
    let mut sweeps = Vec::with_capacity(pieces.len());
    for i in 0..pieces.len() {
        let seed = doubled(&seeds[i].0, true);
        let lower: Vec<usize> = pieces.order.iter().filter(|(a, _)| *a == i).map(|(_, b)| *b).collect();
        let mut field = Vec::with_capacity(sample.len());
        for n in 0..sample.len() {
            let proj: Vec<(f64, DMatrix<f64>)> = lower
                .iter()
                .filter(|&&j| partition.gamma[j][n] > 0.0)
                .map(|&j| (partition.gamma[j][n], out[j].planes[n].projector()))
                .collect();
            let glued = if member[i][n] { None } else { blend(&seed, &proj)? };
            field.push(glued.unwrap_or_else(|| seed.clone()));
        }
        let mut k = 0;
        loop {
            let change = sweep_stable(sample, fd, &member[i], &mut field)?;
            k += 1;
            check_ball(&field, &seed, &member[i], params.ball_radius, "stable family")?;
            if change < SWEEP_TOLERANCE {
                break;
            }
            if k >= params.max_sweeps {
                return Err(Error::Divergence(format!(
                    "stable family of piece {i} still moving by {change:.2e} after {k} sweeps"
                )));
            }
        }
        out.push(PlaneField::from_planes(field)?);
        sweeps.push(k);
    }
    Ok((out, sweeps))
}

/// Unstable families `E_i^u` in decreasing piece order.
///
/// On `W_i` the family is the fixed point of the push-forward; off `W_i` it
/// is `E^u_tangent ⊕ 0` projected onto the unstable planes of the higher
/// pieces (parallel to their stable planes), blended with the partition.
pub fn solve_unstable_family(
    f: &Endomorphism,
    sample: &OrbitSample,
    pieces: &BasicPieceSet,
    partition: &PartitionOfUnity,
    fd: &SmoothedDerivative,
    stable: &[PlaneField],
    params: &BundleParams,
) -> Result<(Vec<PlaneField>, Vec<usize>)> {
    let seeds = tangent_seeds(f, sample, pieces)?;
    let member = membership(sample, pieces)?;
    let q = pieces.len();
    let mut out: Vec<Option<PlaneField>> = vec![None; q];
    let mut sweeps = vec![0; q];
    for i in (0..q).rev() {
        let seed = doubled(&seeds[i].1, false);
        if seed.dim() == 0 {
            out[i] = Some(PlaneField::constant(sample, &seed));
            continue;
        }
        let higher: Vec<usize> = pieces.order.iter().filter(|(_, b)| *b == i).map(|(a, _)| *a).collect();
        let mut field = Vec::with_capacity(sample.len());
        for n in 0..sample.len() {
            let glued = if member[i][n] {
                None
            } else {
                let proj = higher
                    .iter()
                    .filter(|&&j| partition.gamma[j][n] > 0.0)
                    .map(|&j| {
                        let uj = &out[j].as_ref().expect("higher pieces first").planes[n];
                        let (_, pu) = oblique_projectors(&stable[j].planes[n], uj)?;
                        Ok((partition.gamma[j][n], pu))
                    })
                    .collect::<Result<Vec<_>>>()?;
                blend(&seed, &proj)?
            };
            field.push(glued.unwrap_or_else(|| seed.clone()));
        }
        let mut k = 0;
        loop {
            let change = sweep_unstable(sample, fd, &member[i], &mut field)?;
            k += 1;
            check_ball(&field, &seed, &member[i], params.ball_radius, "unstable family")?;
            if change < SWEEP_TOLERANCE {
                break;
            }
            if k >= params.max_sweeps {
                return Err(Error::Divergence(format!(
                    "unstable family of piece {i} still moving by {change:.2e} after {k} sweeps"
                )));
            }
        }
        out[i] = Some(PlaneField::from_planes(field)?);
        sweeps[i] = k;
    }
    Ok((out.into_iter().map(|p| p.expect("all pieces solved")).collect(), sweeps))
}

/// Both families for every piece.
pub fn solve_family(
    f: &Endomorphism,
    sample: &OrbitSample,
    pieces: &BasicPieceSet,
    partition: &PartitionOfUnity,
    delta: f64,
    params: &BundleParams,
) -> Result<BundleFamily> {
    let fd = SmoothedDerivative::new(f, delta)?;
    let (stable, s_sweeps) = solve_stable_family(f, sample, pieces, partition, &fd, params)?;
    let (unstable, u_sweeps) = solve_unstable_family(f, sample, pieces, partition, &fd, &stable, params)?;
    let member = membership(sample, pieces)?;
    let pieces_out = stable
        .into_iter()
        .zip(unstable)
        .zip(member)
        .enumerate()
        .map(|(i, ((stable, unstable), member))| PieceBundles {
            stable,
            unstable,
            member,
            stable_sweeps: s_sweeps[i],
            unstable_sweeps: u_sweeps[i],
        })
        .collect();
    Ok(BundleFamily {
        delta,
        pieces: pieces_out,
        order: pieces.order.clone(),
    })
}
