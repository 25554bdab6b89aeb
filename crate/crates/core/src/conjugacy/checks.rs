use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::right_inverse::RightInverse;
use super::section::Section;
use crate::sample::OrbitSample;

#[derive(Debug, Clone, Serialize)]
pub struct RobbinReport {
    pub lambda: f64,
    pub eta: f64,
    pub pass: bool,
    pub pairs: usize,
    /// The window pair attaining `Λ(w)`, as `(a, b, d_inf)`.
    pub witness: Option<(usize, usize, f64)>,
}

/// Passes iff `Λ(w) ≤ η`.
pub fn robbin_injectivity_check(w: &Section, sample: &OrbitSample, eta: f64) -> RobbinReport {
    let est = w.lambda_est(sample);
    RobbinReport {
        lambda: est.value,
        eta,
        pass: est.value <= eta,
        pairs: est.pairs,
        witness: est.witness,
    }
}

/// One observation `(Λ(v_i^σ), |v_i^σ|, Λ(J_{iσ} v_i^σ))`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LemmaPoint {
    pub draw: usize,
    pub piece: usize,
    pub sigma: usize,
    pub lambda_in: f64,
    pub norm_in: f64,
    pub lambda_out: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaFit {
    pub a: f64,
    pub b_delta: f64,
    pub delta: f64,
    /// Every point satisfies `Λ_out ≤ 1.1 (A Λ_in + B_δ |v|)` with its group's constants.
    pub holds: bool,
    pub groups: Vec<GroupFit>,
    pub points: Vec<LemmaPoint>,
}

/// Random smooth section: a constant plus one Fourier mode in each coordinate of `x_0`.
pub fn random_section(sample: &OrbitSample, dim: usize, rng: &mut ChaCha8Rng, constant_only: bool) -> Section {
    let d = sample.space().dim();
    let base = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    if constant_only {
        return Section::constant(sample.len(), base);
    }
    let amp = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    let freq: Vec<f64> = (0..d).map(|_| rng.random_range(1..4) as f64).collect();
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    Section::from_fn(sample.len(), |n| {
        let x = sample.point(n);
        let t: f64 = x.iter().zip(&freq).map(|(c, k)| c * k).sum::<f64>() * std::f64::consts::TAU + phase;
        &base + &amp * t.sin()
    })
}

/// Tightest affine upper envelope: minimizes `Σ (A x_1 + B x_2 - y)` subject to
/// `A x_1 + B x_2 ≥ y` at every point and `A, B ≥ 0`. The optimum of this
/// two-variable linear program sits on a vertex, so the vertices are enumerated.
fn fit_envelope(points: &[LemmaPoint]) -> (f64, f64) {
    let feasible = |a: f64, b: f64| {
        a >= 0.0 && b >= 0.0 && points.iter().all(|p| a * p.lambda_in + b * p.norm_in >= p.lambda_out * (1.0 - 1e-12))
    };
    let cost = |a: f64, b: f64| points.iter().map(|p| a * p.lambda_in + b * p.norm_in).sum::<f64>();
    let mut cands = Vec::new();
    for p in points {
        if p.lambda_in > 0.0 {
            cands.push((p.lambda_out / p.lambda_in, 0.0));
        }
        if p.norm_in > 0.0 {
            cands.push((0.0, p.lambda_out / p.norm_in));
        }
    }
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let det = p.lambda_in * q.norm_in - q.lambda_in * p.norm_in;
            if det.abs() > 1e-14 {
                let a = (p.lambda_out * q.norm_in - q.lambda_out * p.norm_in) / det;
                let b = (p.lambda_in * q.lambda_out - q.lambda_in * p.lambda_out) / det;
                cands.push((a, b));
            }
        }
    }
    cands
        .into_iter()
        .filter(|&(a, b)| feasible(a, b))
        .min_by(|x, y| cost(x.0, x.1).total_cmp(&cost(y.0, y.1)))
        .unwrap_or((0.0, 0.0))
}

/// Constants fitted to one `(piece, σ)` group.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GroupFit {
    pub piece: usize,
    pub sigma: usize,
    pub a: f64,
    pub b_delta: f64,
    pub holds: bool,
}

/// Fits `Λ(J_{iσ} v_i^σ) ≤ A Λ(v_i^σ) + B_δ |v_i^σ|` over a batch of random
/// sections, separately for each piece and side; `a` and `b_delta` are the
/// largest group constants.
///
/// The constants are the tightest envelope of the even-numbered draws; the
/// bound is then checked, with a factor 1.1, on the odd-numbered ones.
pub fn lipschitz_lemma_measurement(j: &RightInverse, batch: usize, constant_only: bool, seed: u64) -> LemmaFit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = &j.sample;
    let mut points = Vec::new();
    for draw in 0..batch {
        let v = random_section(sample, j.doubled_dim(), &mut rng, constant_only);
        for piece in 0..j.pieces.len() {
            for sigma in 0..2 {
                let vc = j.component(piece, sigma, &v);
                let norm_in = vc.c0_norm();
                if norm_in == 0.0 {
                    continue;
                }
                let out = j.component_series(piece, sigma, &vc);
                points.push(LemmaPoint {
                    draw,
                    piece,
                    sigma,
                    lambda_in: vc.lambda_est(sample).value,
                    norm_in,
                    lambda_out: out.lambda_est(sample).value,
                });
            }
        }
    }
    let mut groups = Vec::new();
    for piece in 0..j.pieces.len() {
        for sigma in 0..2 {
            let pts: Vec<LemmaPoint> = points
                .iter()
                .filter(|p| p.piece == piece && p.sigma == sigma)
                .copied()
                .collect();
            if pts.is_empty() {
                continue;
            }
            let train: Vec<LemmaPoint> = pts.iter().filter(|p| p.draw % 2 == 0).copied().collect();
            let (a, b_delta) = fit_envelope(if train.is_empty() { &pts } else { &train });
            let holds = pts
                .iter()
                .all(|p| p.lambda_out <= 1.1 * (a * p.lambda_in + b_delta * p.norm_in) + 1e-12);
            groups.push(GroupFit { piece, sigma, a, b_delta, holds });
        }
    }
    LemmaFit {
        a: groups.iter().map(|g| g.a).fold(0.0, f64::max),
        b_delta: groups.iter().map(|g| g.b_delta).fold(0.0, f64::max),
        delta: j.fd.delta(),
        holds: groups.iter().all(|g| g.holds),
        groups,
        points,
    }
}
