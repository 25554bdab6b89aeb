use rayon::prelude::*;
use serde::Serialize;

use super::convolution::{accumulate, BallSampler, ConvolutionParams};
use crate::error::{Error, Result};
use crate::hyperbolic::{AxisBox, Cover};
use crate::phase_space::{ModelSpace, Point};
use crate::sample::OrbitSample;

/// Functions `γ_i` on the windows of a sample with `Σ γ_i = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionOfUnity {
    pub r: f64,
    pub samples: usize,
    /// `gamma[i][n]` is `γ_i` at window `n`.
    pub gamma: Vec<Vec<f64>>,
    /// Measured `d_∞`-Lipschitz constant of each `γ_i`.
    pub lipschitz: Vec<f64>,
    /// Windows with `γ_i > 0` whose `x_0` lies outside `W_i`.
    pub support_violations: Vec<usize>,
    /// `max_n |Σ_i γ_i(n) - 1|`.
    pub max_sum_defect: f64,
}

impl PartitionOfUnity {
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// `γ_i` at window `n`.
    pub fn value(&self, i: usize, n: usize) -> f64 {
        self.gamma[i][n]
    }

    /// CSV table with one row per window: `x_0` coordinates then `γ_i`.
    pub fn to_csv(&self, sample: &OrbitSample) -> String {
        let d = sample.space().dim();
        let mut out = String::new();
        let head: Vec<String> = (0..d)
            .map(|c| format!("x{c}"))
            .chain((0..self.len()).map(|i| format!("gamma{i}")))
            .collect();
        out.push_str(&head.join(","));
        out.push('\n');
        for n in 0..sample.len() {
            let row: Vec<String> = sample
                .point(n)
                .iter()
                .map(|c| format!("{c:.17e}"))
                .chain(self.gamma.iter().map(|g| format!("{:.17e}", g[n])))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Box membership; on tori a coordinate may match after a shift by ±1, so a
/// box like `[-0.1, 0.3]` is an arc across the seam.
fn in_box(space: &ModelSpace, b: &AxisBox, p: &Point) -> bool {
    b.bounds.iter().zip(p.iter()).all(|(&(l, u), &c)| {
        let hit = |x: f64| x >= l && x <= u;
        hit(c) || (space.is_periodic() && (hit(c - 1.0) || hit(c + 1.0)))
    })
}

/// Normalized mollified indicators of the cover cores, smoothed at
/// `r = margin / 2` with the Monte Carlo convolution on the inverse limit.
pub fn partition_of_unity(sample: &OrbitSample, covers: &[Cover], samples: usize, seed: u64) -> Result<PartitionOfUnity> {
    if covers.is_empty() {
        return Err(Error::CoverageGap("empty cover".into()));
    }
    let margin = covers.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    if !(margin > 0.0) {
        return Err(Error::InvalidParameter(format!("cover margin must be positive, got {margin}")));
    }
    let r = margin / 2.0;
    let params = ConvolutionParams { r, samples, seed };
    let horizon = sample.k_back().min(sample.k_fwd());
    let sampler = BallSampler::new(sample.space(), horizon, &params)?;
    let k = covers.len();
    let space = sample.space();
    let sums = accumulate(sample, &sampler, k, |coords, kb, out: &mut [f64]| {
        let y0 = &coords[kb];
        for (o, c) in out.iter_mut().zip(covers) {
            *o = if in_box(space, &c.core, y0) { 1.0 } else { 0.0 };
        }
    })?;

    let mut gamma = vec![vec![0.0; sample.len()]; k];
    let mut max_sum_defect: f64 = 0.0;
    for (n, s) in sums.iter().enumerate() {
        let total: f64 = s.gw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::CoverageGap(format!(
                "no cover core within r = {r} of the window at x_0 = {:?}",
                sample.point(n).as_slice()
            )));
        }
        let mut sum = 0.0;
        for i in 0..k {
            gamma[i][n] = s.gw[i] / total;
            sum += gamma[i][n];
        }
        max_sum_defect = max_sum_defect.max((sum - 1.0).abs());
    }

    let pairs = sample.lipschitz_pairs();
    let lipschitz = gamma
        .iter()
        .map(|g| {
            pairs
                .par_iter()
                .map(|&(a, b, d)| (g[a as usize] - g[b as usize]).abs() / d)
                .reduce(|| 0.0, f64::max)
        })
        .collect();
    let support_violations = gamma
        .iter()
        .zip(covers)
        .map(|(g, c)| {
            (0..sample.len())
                .filter(|&n| g[n] > 0.0 && !in_box(space, &c.region, sample.point(n)))
                .count()
        })
        .collect();

    Ok(PartitionOfUnity {
        r,
        samples,
        gamma,
        lipschitz,
        support_violations,
        max_sum_defect,
    })
}
