use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::mollify::BumpKernel;
use crate::error::{Error, Result};
use crate::phase_space::{d1, ModelSpace, Point};
use crate::sample::OrbitSample;

/// Longest half-window perturbed by the Monte Carlo ball sampler.
pub const MAX_CONVOLUTION_WINDOW: usize = 12;

/// Smallest accepted fraction of Monte Carlo draws landing in `M`.
pub const MASS_GUARD: f64 = 1e-9;

const RADIAL_BINS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvolutionParams {
    pub r: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Draws of `y - x` distributed like `ρ(d_1(x, y)/r) dy`, restricted to the
/// coordinates `-K..=K`; the remaining coordinates of `y` equal those of `x`.
///
/// The ball of the weighted norm `N(z) = Σ_n 2^-|n| |z_n|_∞` is sampled
/// exactly: per-block radii are Gamma distributed, directions uniform on the
/// cube surface, and the overall radius follows `t^{D-1} ρ(t)`.
#[derive(Debug, Clone)]
pub struct BallSampler {
    space: ModelSpace,
    half_window: usize,
    r: f64,
    offsets: Vec<f64>,
    samples: usize,
    log_scale: f64,
}

fn radial_table(dim: usize) -> (Vec<f64>, f64) {
    let k = BumpKernel;
    let h = 1.0 / RADIAL_BINS as f64;
    let dens: Vec<f64> = (0..RADIAL_BINS)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            t.powi(dim as i32 - 1) * k.value(t)
        })
        .collect();
    let mut cdf = Vec::with_capacity(RADIAL_BINS + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for p in &dens {
        acc += p * h;
        cdf.push(acc);
    }
    // Z = D ∫ t^{D-1} ρ(t) dt
    let z = dim as f64 * acc;
    for c in cdf.iter_mut() {
        *c /= acc;
    }
    (cdf, z)
}

fn invert_cdf(cdf: &[f64], u: f64) -> f64 {
    let i = cdf.partition_point(|c| *c < u).clamp(1, cdf.len() - 1);
    let (a, b) = (cdf[i - 1], cdf[i]);
    let frac = if b > a { (u - a) / (b - a) } else { 0.5 };
    ((i - 1) as f64 + frac) / (cdf.len() - 1) as f64
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

impl BallSampler {
    pub fn new(space: &ModelSpace, max_half_window: usize, params: &ConvolutionParams) -> Result<Self> {
        let r = params.r;
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
        }
        if params.samples == 0 {
            return Err(Error::InvalidParameter("need at least one Monte Carlo sample".into()));
        }
        let reach = if space.is_periodic() {
            0.5
        } else {
            0.5 * space
                .lower()
                .iter()
                .zip(space.upper())
                .map(|(l, u)| u - l)
                .fold(f64::INFINITY, f64::min)
        };
        if r > reach {
            return Err(Error::InvalidParameter(format!("radius {r} exceeds {reach}")));
        }
        let mut k = 0;
        while k < max_half_window.min(MAX_CONVOLUTION_WINDOW) && r * 2f64.powi(k as i32 + 1) <= reach {
            k += 1;
        }
        let d = space.dim();
        let blocks = 2 * k + 1;
        let dim = d * blocks;
        let (cdf, z_const) = radial_table(dim);

        let weights: Vec<f64> = (0..blocks).map(|b| 0.5f64.powi((b as isize - k as isize).unsigned_abs() as i32)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut offsets = vec![0.0; params.samples * dim];
        for chunk in offsets.chunks_mut(dim) {
            let mut norm = 0.0;
            for (b, w) in weights.iter().enumerate() {
                let s: f64 = (0..d).map(|_| -(1.0 - rng.random::<f64>()).ln()).sum::<f64>() / w;
                let face = rng.random_range(0..d);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                for c in 0..d {
                    let u = if c == face { sign } else { rng.random_range(-1.0..1.0) };
                    chunk[b * d + c] = s * u;
                }
                norm += w * s;
            }
            let t = invert_cdf(&cdf, rng.random::<f64>());
            let scale = r * t / norm;
            for v in chunk.iter_mut() {
                *v *= scale;
            }
        }

        // log of vol_N(r) Z / vol(M)^blocks
        let log_block_ball: f64 = weights
            .iter()
            .map(|w| d as f64 * (2.0 / w).ln() + ln_factorial(d))
            .sum();
        let log_vol_m: f64 = space
            .lower()
            .iter()
            .zip(space.upper())
            .map(|(l, u)| (u - l).ln())
            .sum::<f64>()
            * blocks as f64;
        let log_scale = dim as f64 * r.ln() + log_block_ball - ln_factorial(dim) + z_const.ln() - log_vol_m;

        Ok(Self {
            space: space.clone(),
            half_window: k,
            r,
            offsets,
            samples: params.samples,
            log_scale,
        })
    }

    /// Number `K` of past and future coordinates that are perturbed.
    pub fn half_window(&self) -> usize {
        self.half_window
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// `log(μ̃-mass factor)` converting Monte Carlo means to integrals.
    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Writes draw `s` around the window `coords` into `buf` and returns its
    /// importance weight, or `None` if it falls outside `M`.
    ///
    /// On boxes a coordinate leaving `M` is mirrored through `x`, which keeps
    /// `N(z)`; the weight halves for every coordinate whose mirror image is
    /// outside `M`, so the estimator stays unbiased for the integral over `M`.
    pub fn draw(&self, s: usize, coords: &[Point], k_back: usize, buf: &mut [Point]) -> Option<f64> {
        let d = self.space.dim();
        let k = self.half_window;
        let dim = d * (2 * k + 1);
        let z = &self.offsets[s * dim..(s + 1) * dim];
        let mut w = 1.0;
        for b in 0..2 * k + 1 {
            let idx = k_back + b - k;
            let x = &coords[idx];
            let y = &mut buf[idx];
            for c in 0..d {
                let dz = z[b * d + c];
                if self.space.is_periodic() {
                    y[c] = (x[c] + dz).rem_euclid(1.0);
                    if y[c] >= 1.0 {
                        y[c] = 0.0;
                    }
                } else {
                    let (l, u) = (self.space.lower()[c], self.space.upper()[c]);
                    let plus = x[c] + dz;
                    let minus = x[c] - dz;
                    let (pin, min) = ((l..=u).contains(&plus), (l..=u).contains(&minus));
                    match (pin, min) {
                        (true, true) => y[c] = plus,
                        (true, false) => {
                            y[c] = plus;
                            w *= 0.5;
                        }
                        (false, true) => {
                            y[c] = minus;
                            w *= 0.5;
                        }
                        (false, false) => return None,
                    }
                }
            }
        }
        Some(w)
    }
}

/// Weighted Monte Carlo sums at one window for `k` integrands.
#[derive(Debug, Clone)]
pub(crate) struct Sums {
    pub w: f64,
    pub w2: f64,
    pub gw: Vec<f64>,
    pub gw2: Vec<f64>,
    pub g2w2: Vec<f64>,
    pub accepted: usize,
    pub sup_g: f64,
}

/// Accumulates `Σ w g_j(ỹ)` and friends at every window of the sample.
pub(crate) fn accumulate<G>(sample: &OrbitSample, sampler: &BallSampler, k: usize, g: G) -> Result<Vec<Sums>>
where
    G: Fn(&[Point], usize, &mut [f64]) + Sync,
{
    let need = sampler.half_window();
    if sample.k_back() < need || sample.k_fwd() < need {
        return Err(Error::WindowTooShort {
            needed: need,
            available: sample.k_back().min(sample.k_fwd()),
        });
    }
    let out = sample
        .windows()
        .par_iter()
        .map(|win| {
            let kb = win.k_back();
            let mut buf = win.coords().to_vec();
            let mut vals = vec![0.0; k];
            let mut s = Sums {
                w: 0.0,
                w2: 0.0,
                gw: vec![0.0; k],
                gw2: vec![0.0; k],
                g2w2: vec![0.0; k],
                accepted: 0,
                sup_g: 0.0,
            };
            for i in 0..sampler.samples() {
                let Some(w) = sampler.draw(i, win.coords(), kb, &mut buf) else {
                    continue;
                };
                s.accepted += 1;
                g(&buf, kb, &mut vals);
                s.w += w;
                s.w2 += w * w;
                for j in 0..k {
                    let v = vals[j];
                    s.sup_g = s.sup_g.max(v.abs());
                    s.gw[j] += w * v;
                    s.gw2[j] += w * w * v;
                    s.g2w2[j] += w * w * v * v;
                }
            }
            s
        })
        .collect();
    Ok(out)
}

/// `φ_r` and `1_r` on every window of a sample.
#[derive(Debug, Clone, Serialize)]
pub struct Convolution {
    pub params: ConvolutionParams,
    pub half_window: usize,
    /// Unnormalized `φ_r`.
    pub phi_r: Vec<f64>,
    /// Unnormalized `1_r`.
    pub one_r: Vec<f64>,
    /// `φ_r / 1_r`.
    pub normalized: Vec<f64>,
    /// Monte Carlo standard error of `normalized`.
    pub sigma: Vec<f64>,
    /// Largest `|φ|` seen at any draw.
    pub sup_phi: f64,
    /// Measured `d_1`-Lipschitz constant of `φ_r` over the sample's pairs.
    pub lipschitz_d1: f64,
    /// `(L/r) sup|φ|`.
    pub lipschitz_bound: f64,
    /// Measured `d_1`-Lipschitz constant of `φ_r / 1_r`.
    pub normalized_lipschitz_d1: f64,
}

impl Convolution {
    /// Largest distance to `supp φ` among windows where `φ_r ≠ 0`.
    pub fn support_inflation(&self, sample: &OrbitSample, dist_to_support: impl Fn(usize) -> f64) -> f64 {
        (0..sample.len())
            .filter(|&i| self.phi_r[i] != 0.0)
            .map(dist_to_support)
            .fold(0.0, f64::max)
    }
}

fn d1_lipschitz(sample: &OrbitSample, values: &[f64]) -> f64 {
    sample
        .lipschitz_pairs()
        .par_iter()
        .map(|&(i, j, _)| {
            let (i, j) = (i as usize, j as usize);
            let d = d1(sample.window(i), sample.window(j)).expect("same space").value;
            (values[i] - values[j]).abs() / d
        })
        .reduce(|| 0.0, f64::max)
}

/// Monte Carlo convolution `φ_r(x) = ∫ φ(y) ρ(d_1(x,y)/r) dμ̃(y)` with `μ̃`
/// the uniform product measure, evaluated at every window of `sample`.
///
/// `phi` receives the coordinates of a (perturbed) window and the index of its
/// `x_0`. The same draws are shared by all windows.
pub fn convolve_on_inverse_limit<F>(sample: &OrbitSample, phi: F, params: &ConvolutionParams) -> Result<Convolution>
where
    F: Fn(&[Point], usize) -> f64 + Sync,
{
    let horizon = sample.k_back().min(sample.k_fwd());
    let sampler = BallSampler::new(sample.space(), horizon, params)?;
    let sums = accumulate(sample, &sampler, 1, |c, kb, out: &mut [f64]| out[0] = phi(c, kb))?;
    let n = params.samples as f64;
    let scale = sampler.log_scale().exp();
    let mut phi_r = Vec::with_capacity(sums.len());
    let mut one_r = Vec::with_capacity(sums.len());
    let mut normalized = Vec::with_capacity(sums.len());
    let mut sigma = Vec::with_capacity(sums.len());
    let mut sup_phi: f64 = 0.0;
    for s in &sums {
        if (s.accepted as f64) < MASS_GUARD * n || s.w <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "1_r vanishes at a window: r = {} is too small for {} samples",
                params.r, params.samples
            )));
        }
        let ratio = s.gw[0] / s.w;
        let var = (s.g2w2[0] - 2.0 * ratio * s.gw2[0] + ratio * ratio * s.w2).max(0.0);
        phi_r.push(scale * s.gw[0] / n);
        one_r.push(scale * s.w / n);
        normalized.push(ratio);
        sigma.push(var.sqrt() / s.w);
        sup_phi = sup_phi.max(s.sup_g);
    }
    let lipschitz_d1 = d1_lipschitz(sample, &phi_r);
    let normalized_lipschitz_d1 = d1_lipschitz(sample, &normalized);
    Ok(Convolution {
        params: *params,
        half_window: sampler.half_window(),
        phi_r,
        one_r,
        normalized,
        sigma,
        sup_phi,
        lipschitz_d1,
        lipschitz_bound: BumpKernel.derivative_bound() / params.r * sup_phi,
        normalized_lipschitz_d1,
    })
}
