use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::checks::{robbin_injectivity_check, RobbinReport};
use super::operators::{extract_h0, f_star, phi_operator};
use super::right_inverse::{RightInverse, Truncation};
use super::section::Section;
use crate::bundles::{solve_family, BundleParams};
use crate::error::{Error, Result};
use crate::hyperbolic::BasicPieceSet;
use crate::phase_space::{d1, OrbitWindow, Point};
use crate::sample::OrbitSample;
use crate::smoothing::PartitionOfUnity;
use crate::zoo::Endomorphism;

/// Default injectivity threshold on flat models.
pub const DEFAULT_ETA: f64 = 0.1;

/// Changes below this are at round-off level and are not used to measure the contraction factor.
const RATIO_FLOOR: f64 = 1e-12;

/// Candidates for the δ pre-pass, largest first.
pub const DELTA_CANDIDATES: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// Contraction factor the δ pre-pass asks for.
pub const PREPASS_FACTOR: f64 = 0.9;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolveParams {
    pub eta: f64,
    pub max_iters: usize,
    /// Stop when the C^0 change of `φ` drops below this.
    pub tolerance: f64,
    /// Random g-windows drawn for the surjectivity statistic; 0 skips it.
    pub coverage_samples: usize,
    pub seed: u64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            max_iters: 200,
            tolerance: 1e-10,
            coverage_samples: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub contraction_factor: f64,
    pub c1_defect: f64,
    pub c2_value: f64,
    pub c3_value: f64,
    pub injectivity_pass: bool,
    pub surjectivity_coverage: Option<f64>,
    pub delta: f64,
    pub eta: f64,
    pub c2_pass: bool,
    pub c3_pass: bool,
    pub residuals: Vec<f64>,
    pub truncation: Truncation,
    pub robbin: RobbinReport,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub phi: Section,
    pub w: Section,
    pub h0: Vec<Point>,
    pub report: SolveReport,
}

/// `T(φ) = F_⋆(Jφ) - Φ(Jφ)`.
fn step(phi: &Section, j: &RightInverse, g: &Endomorphism) -> Result<(Section, Section)> {
    let w = j.apply(phi);
    let next = f_star(&w, &j.sample, &j.table).sub(&phi_operator(&w, &j.sample, g)?);
    Ok((next, w))
}

/// Iterates `φ ← F_⋆(Jφ) - Φ(Jφ)` from `φ = 0`; returns `w = Jφ`, `h_0` and the report.
pub fn solve_conjugacy(g: &Endomorphism, j: &RightInverse, params: &SolveParams) -> Result<Solution> {
    let sample = &j.sample;
    sample.space().same_as(g.space())?;
    let mut phi = Section::zeros(sample.len(), j.doubled_dim());
    let mut residuals = Vec::new();
    let mut factor: f64 = 0.0;
    let mut rising = 0;
    let mut converged = false;
    for _ in 0..params.max_iters {
        let (next, w) = step(&phi, j, g)?;
        if w.c0_norm() > 2.0 * params.eta {
            return Err(Error::LeftBall(format!(
                "|Jφ| = {:.3e} exceeds 2η = {:.3e} after {} iterations",
                w.c0_norm(),
                2.0 * params.eta,
                residuals.len()
            )));
        }
        let change = next.distance(&phi);
        if !change.is_finite() {
            return Err(Error::Divergence("non-finite iterate".into()));
        }
        if let Some(&prev) = residuals.last() {
            if prev > RATIO_FLOOR && change > RATIO_FLOOR {
                let r: f64 = change / prev;
                factor = factor.max(r);
                rising = if r >= 1.0 { rising + 1 } else { 0 };
                if rising >= 3 {
                    return Err(Error::Divergence(format!("measured contraction factor {r:.3} ≥ 1")));
                }
            }
        }
        residuals.push(change);
        phi = next;
        if change < params.tolerance {
            converged = true;
            break;
        }
    }
    let w = j.apply(&phi);
    let h0 = extract_h0(&w, sample)?;
    let report = build_report(g, j, &w, &h0, residuals, factor, converged, params)?;
    Ok(Solution { phi, w, h0, report })
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    g: &Endomorphism,
    j: &RightInverse,
    w: &Section,
    h0: &[Point],
    residuals: Vec<f64>,
    factor: f64,
    converged: bool,
    params: &SolveParams,
) -> Result<SolveReport> {
    let sample = &j.sample;
    let space = sample.space();
    let c1_defect = (0..sample.len())
        .into_par_iter()
        .map(|n| space.dist(&h0[n], &g.eval(&h0[sample.pred(n)])))
        .reduce(|| 0.0, f64::max);
    let d = space.ambient_dim();
    let c2_value = w.values.iter().map(|v| v.rows(0, d).norm()).fold(0.0, f64::max);
    let robbin = robbin_injectivity_check(w, sample, params.eta);
    let surjectivity_coverage = if params.coverage_samples > 0 && g.has_preimages() {
        Some(surjectivity_coverage(g, sample, h0, c1_defect, params.coverage_samples, params.seed)?)
    } else {
        None
    };
    Ok(SolveReport {
        converged,
        iterations: residuals.len(),
        final_residual: residuals.last().copied().unwrap_or(0.0),
        contraction_factor: factor,
        c1_defect,
        c2_value,
        c3_value: robbin.lambda,
        injectivity_pass: robbin.pass,
        surjectivity_coverage,
        delta: j.fd.delta(),
        eta: params.eta,
        c2_pass: c2_value <= params.eta,
        c3_pass: robbin.pass,
        residuals,
        truncation: j.truncation.clone(),
        robbin,
    })
}

/// Window `(h_0(f⃖^n x))_n` through sample node `n`.
pub fn conjugate_window(sample: &OrbitSample, h0: &[Point], n: usize, residual: f64) -> Result<OrbitWindow> {
    let (kb, kf) = (sample.k_back(), sample.k_fwd());
    let mut past = Vec::with_capacity(kb);
    let mut m = n;
    for _ in 0..kb {
        m = sample.pred(m);
        past.push(h0[m].clone());
    }
    past.reverse();
    let mut coords = past;
    coords.push(h0[n].clone());
    let mut m = n;
    for _ in 0..kf {
        m = sample.succ(m);
        coords.push(h0[m].clone());
    }
    OrbitWindow::new(sample.space().clone(), coords, kb, residual)
}

/// Fraction of random `g`-windows lying within twice the sample's resolution
/// of some conjugated window `h(x̲)`, in `d_1`.
///
/// The resolution is the largest nearest-neighbour `d_1` distance over up to
/// 500 sample windows.
pub fn surjectivity_coverage(
    g: &Endomorphism,
    sample: &OrbitSample,
    h0: &[Point],
    residual: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let space = sample.space();
    let (kb, kf) = (sample.k_back(), sample.k_fwd());
    let hwin = (0..sample.len())
        .map(|n| conjugate_window(sample, h0, n, residual))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5u64);
    let stride = (sample.len() / 500).max(1);
    let windows = sample.windows();
    let resolution = (0..sample.len())
        .step_by(stride)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&a| {
            (0..sample.len())
                .filter(|&b| b != a)
                .map(|b| d1(&windows[a], &windows[b]).map(|d| d.value).unwrap_or(f64::INFINITY))
                .filter(|d| *d > 0.0)
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max);
    let lo = space.lower().to_vec();
    let hi = space.upper().to_vec();
    let gwin: Vec<OrbitWindow> = (0..draws)
        .filter_map(|_| {
            let y = DVector::from_fn(space.dim(), |i, _| rng.random_range(lo[i]..hi[i]));
            let x0 = g.eval(&g.eval(&y));
            g.window_through(&x0, kb, kf).ok()
        })
        .collect();
    if gwin.is_empty() {
        return Ok(0.0);
    }
    let covered = gwin
        .par_iter()
        .filter(|yw| {
            hwin.iter()
                .any(|hw| d1(hw, yw).map(|d| d.value < 2.0 * resolution).unwrap_or(false))
        })
        .count();
    Ok(covered as f64 / gwin.len() as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaChoice {
    pub delta: f64,
    /// `(δ, measured factor)`; `None` where the bundles or `J` could not be built.
    pub trials: Vec<(f64, Option<f64>)>,
}

/// Largest `δ` among the candidates whose measured contraction factor is below 0.9.
#[allow(clippy::too_many_arguments)]
pub fn choose_delta(
    f: &Endomorphism,
    g: &Endomorphism,
    sample: &OrbitSample,
    pieces: &BasicPieceSet,
    partition: &PartitionOfUnity,
    candidates: &[f64],
    truncation_tol: f64,
    params: &SolveParams,
) -> Result<DeltaChoice> {
    let probe = SolveParams {
        max_iters: 8,
        coverage_samples: 0,
        ..*params
    };
    let mut trials = Vec::new();
    for &delta in candidates {
        let factor = solve_family(f, sample, pieces, partition, delta, &BundleParams::default())
            .and_then(|fam| RightInverse::new(f, sample, &fam, partition, truncation_tol))
            .and_then(|j| solve_conjugacy(g, &j, &probe))
            .ok()
            .map(|s| s.report.contraction_factor);
        trials.push((delta, factor));
        if factor.is_some_and(|c| c < PREPASS_FACTOR) {
            return Ok(DeltaChoice { delta, trials });
        }
    }
    Err(Error::Divergence(format!(
        "no δ in {candidates:?} gives a contraction factor below {PREPASS_FACTOR}: {trials:?}"
    )))
}
