use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::operators::{backward_star, f_star, CocycleTable};
use super::section::Section;
use crate::bundles::BundleFamily;
use crate::error::{Error, Result};
use crate::phase_space::spectral_norm;
use crate::sample::OrbitSample;
use crate::smoothing::{PartitionOfUnity, SmoothedDerivative};
use crate::zoo::Endomorphism;

/// Number of powers measured when fitting `D` and `λ`.
pub const MEASURED_POWERS: usize = 60;

/// Hard cap on the number of series terms.
pub const MAX_TERMS: usize = 2000;

/// Measured constants of the geometric bounds `||F_⋆^n Π^s|| ≤ C D λ^n`
/// and `||B^n Π^u|| ≤ C D λ^n`, and the truncation they imply.
#[derive(Debug, Clone, Serialize)]
pub struct Truncation {
    pub tolerance: f64,
    /// `sup ||π_i^σ||` over pieces, sides and windows where `γ_i > 0`.
    pub c: f64,
    /// `sup ||Σ_i γ_i π_i^σ||`.
    pub c_combined: f64,
    pub d: f64,
    pub lambda: f64,
    /// Number of pieces.
    pub q: usize,
    /// Highest power kept in each series.
    pub terms: usize,
    /// Relative tail bound `2 C D λ^{terms+1} / (1 - λ)`.
    pub tail_bound: f64,
    /// `2 C D q / (1 - λ)`.
    pub norm_bound: f64,
    pub stable_powers: Vec<f64>,
    pub unstable_powers: Vec<f64>,
}

/// Projectors of one piece at every window.
#[derive(Debug, Clone)]
pub struct PieceProjectors {
    /// `γ_i π_i^s` and `γ_i π_i^u`.
    pub weighted_stable: Vec<DMatrix<f64>>,
    pub weighted_unstable: Vec<DMatrix<f64>>,
    /// `π_i^s` and `π_i^u` where the step into the window stays inside
    /// `W_i`, the identity elsewhere; reapplied after every step of the series.
    pub stable: Vec<DMatrix<f64>>,
    pub unstable: Vec<DMatrix<f64>>,
}

/// `J = Σ_{i,σ} J_{iσ}`, the right inverse of `F_⋆ - id` on a sample.
///
/// Inside `W_i` each power in the series is projected back onto the piece's
/// stable or unstable plane. The planes are invariant there, so this changes
/// nothing but round-off, which `(F^δ)^{-1}` would otherwise amplify by about
/// `δ^{-1}` per step along `E^s`.
#[derive(Debug, Clone)]
pub struct RightInverse {
    pub sample: OrbitSample,
    pub fd: SmoothedDerivative,
    pub table: CocycleTable,
    pub pieces: Vec<PieceProjectors>,
    pub truncation: Truncation,
}

/// Output of one application of `J`.
#[derive(Debug, Clone)]
pub struct JOutput {
    pub value: Section,
    pub tail_bound: f64,
    /// `||J v|| / ||v||`.
    pub gain: f64,
}

fn sum_matrices(ms: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let mut acc = ms[0].clone();
    for m in &ms[1..] {
        acc += *m;
    }
    acc
}

fn sup_norm(ms: &[DMatrix<f64>]) -> f64 {
    ms.par_iter()
        .map(|m| if m.iter().all(|x| x.is_finite()) { spectral_norm(m) } else { f64::INFINITY })
        .reduce(|| 0.0, f64::max)
}

/// `sup_n ||Σ_i M_{i,k}(n)||` for `k = 0..=powers`, where `M_{i,0}` is given
/// and `M_{i,k+1} = step(i, n, M_{i,k})`.
fn propagate_norms(
    start: Vec<Vec<DMatrix<f64>>>,
    powers: usize,
    step: impl Fn(usize, usize, &[DMatrix<f64>]) -> DMatrix<f64> + Sync,
) -> Vec<f64> {
    let total = |cur: &[Vec<DMatrix<f64>>]| {
        let sums: Vec<DMatrix<f64>> = (0..cur[0].len())
            .into_par_iter()
            .map(|n| sum_matrices(&cur.iter().map(|m| &m[n]).collect::<Vec<_>>()))
            .collect();
        sup_norm(&sums)
    };
    let mut cur = start;
    let mut out = vec![total(&cur)];
    for _ in 0..powers {
        cur = cur
            .iter()
            .enumerate()
            .map(|(i, m)| (0..m.len()).into_par_iter().map(|n| step(i, n, m)).collect())
            .collect();
        let t = total(&cur);
        out.push(t);
        if !t.is_finite() {
            break;
        }
    }
    out
}

/// Powers below this fraction of the first one are round-off.
const ROUND_OFF: f64 = 1e-14;

/// Worst average decay rate over the tail windows `[j, K]` with `j ≥ K/2`.
fn tail_rate(c: &[f64]) -> Option<f64> {
    let k = c.len().checked_sub(1)?;
    if k < 4 {
        return None;
    }
    Some(
        (k / 2..k)
            .map(|j| (c[k] / c[j]).powf(1.0 / (k - j) as f64))
            .fold(0.0, f64::max),
    )
}

/// Decay of one series: the fitted rate, and the index where the powers
/// reach round-off level, if they do within the measured range.
fn side_decay(c: &[f64]) -> (Option<f64>, Option<usize>) {
    let floor = c[0].max(f64::MIN_POSITIVE) * ROUND_OFF;
    match c.iter().position(|&x| x <= floor) {
        Some(k) => (tail_rate(&c[..k]), Some(k)),
        None => (tail_rate(c), None),
    }
}

impl RightInverse {
    pub fn new(
        f: &Endomorphism,
        sample: &OrbitSample,
        family: &BundleFamily,
        partition: &PartitionOfUnity,
        tolerance: f64,
    ) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!("truncation tolerance must be positive, got {tolerance}")));
        }
        if family.len() != partition.len() {
            return Err(Error::InvalidParameter(format!(
                "{} bundle pieces but {} partition functions",
                family.len(),
                partition.len()
            )));
        }
        let fd = SmoothedDerivative::new(f, family.delta)?;
        let table = CocycleTable::new(sample, &fd);
        let len = sample.len();
        let np = fd.doubled_dim();
        let mut c: f64 = 0.0;
        let mut pieces = Vec::with_capacity(family.len());
        for i in 0..family.len() {
            let mats = (0..len)
                .into_par_iter()
                .map(|n| family.projectors(i, n))
                .collect::<Result<Vec<_>>>()?;
            let mut p = PieceProjectors {
                weighted_stable: Vec::with_capacity(len),
                weighted_unstable: Vec::with_capacity(len),
                stable: Vec::with_capacity(len),
                unstable: Vec::with_capacity(len),
            };
            let m = &family.pieces[i].member;
            let id = DMatrix::identity(np, np);
            for (n, (ps, pu)) in mats.into_iter().enumerate() {
                let gamma = partition.value(i, n);
                if gamma > 0.0 {
                    c = c.max(spectral_norm(&ps)).max(spectral_norm(&pu));
                }
                p.weighted_stable.push(&ps * gamma);
                p.weighted_unstable.push(&pu * gamma);
                p.stable.push(if m[n] && m[sample.pred(n)] { ps } else { id.clone() });
                p.unstable.push(if m[n] && m[sample.succ(n)] { pu } else { id.clone() });
            }
            pieces.push(p);
        }

        let stable_powers = propagate_norms(
            pieces.iter().map(|p| p.weighted_stable.clone()).collect(),
            MEASURED_POWERS,
            |i, n, cur| {
                let p = sample.pred(n);
                &pieces[i].stable[n] * (&table.forward[p] * &cur[p])
            },
        );
        let unstable_powers = propagate_norms(
            pieces.iter().map(|p| p.weighted_unstable.clone()).collect(),
            MEASURED_POWERS,
            |i, n, cur| &pieces[i].unstable[n] * (&table.backward[n] * &cur[sample.succ(n)]),
        );
        let c_combined = stable_powers[0].max(unstable_powers[0]);
        let truncation = fit_truncation(tolerance, c, c_combined, family.len(), stable_powers, unstable_powers)?;
        Ok(Self {
            sample: sample.clone(),
            fd,
            table,
            pieces,
            truncation,
        })
    }

    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.is_empty()
    }

    pub fn doubled_dim(&self) -> usize {
        self.fd.doubled_dim()
    }

    fn apply_field(m: &[DMatrix<f64>], v: &Section) -> Section {
        Section::from_fn(v.len(), |n| &m[n] * &v.values[n])
    }

    /// `-Σ_{n=0}^{N} F_⋆^n vs + Σ_{n=1}^{N} B^n vu` for piece `i`, either part optional.
    pub fn series(&self, i: usize, vs: Option<&Section>, vu: Option<&Section>) -> Section {
        let s = &self.sample;
        let p = &self.pieces[i];
        let dim = self.doubled_dim();
        let mut acc = vs.map_or_else(|| Section::zeros(s.len(), dim), |v| v.scale(-1.0));
        let mut t = vs.cloned();
        let mut b = vu.cloned();
        for _ in 0..self.truncation.terms {
            if let Some(tv) = &t {
                let next = Self::apply_field(&p.stable, &f_star(tv, s, &self.table));
                acc = acc.sub(&next);
                t = Some(next);
            }
            if let Some(bv) = &b {
                let next = Self::apply_field(&p.unstable, &backward_star(bv, s, &self.table));
                acc = acc.add(&next);
                b = Some(next);
            }
        }
        acc
    }

    /// `v_i^σ = γ_i π_i^σ v`, with `σ = 0` stable and `σ = 1` unstable.
    pub fn component(&self, i: usize, sigma: usize, v: &Section) -> Section {
        let p = &self.pieces[i];
        Self::apply_field(if sigma == 0 { &p.weighted_stable } else { &p.weighted_unstable }, v)
    }

    /// `J_{iσ}` applied to a component already projected by `γ_i π_i^σ`.
    pub fn component_series(&self, i: usize, sigma: usize, vc: &Section) -> Section {
        if sigma == 0 {
            self.series(i, Some(vc), None)
        } else {
            self.series(i, None, Some(vc))
        }
    }

    pub fn apply(&self, v: &Section) -> Section {
        (0..self.pieces.len())
            .map(|i| self.series(i, Some(&self.component(i, 0, v)), Some(&self.component(i, 1, v))))
            .reduce(|a, b| a.add(&b))
            .unwrap_or_else(|| Section::zeros(v.len(), v.dim()))
    }
}

fn fit_truncation(
    tolerance: f64,
    c: f64,
    c_combined: f64,
    q: usize,
    stable_powers: Vec<f64>,
    unstable_powers: Vec<f64>,
) -> Result<Truncation> {
    let scale = c_combined.max(f64::MIN_POSITIVE);
    // The unstable series starts at n = 1; shift its cut index back accordingly.
    let (rs, ks) = side_decay(&stable_powers);
    let (ru, ku) = side_decay(&unstable_powers[1..]);
    let ku = ku.map(|k| k + 1);
    let lambda = rs.into_iter().chain(ru).fold(0.0, f64::max);
    if !(lambda < 1.0) {
        return Err(Error::NotHyperbolic(format!(
            "measured decay rate λ = {lambda:.4} of the cocycle powers is not below 1"
        )));
    }
    let upto = |p: &[f64], k: Option<usize>| p[..k.unwrap_or(p.len())].to_vec();
    let kept: Vec<(usize, f64)> = upto(&stable_powers, ks)
        .into_iter()
        .enumerate()
        .chain(upto(&unstable_powers, ku).into_iter().enumerate())
        .collect();
    let d = if lambda > 0.0 {
        kept.iter()
            .map(|&(k, x)| x / (scale * lambda.powi(k as i32)))
            .fold(0.0, f64::max)
    } else {
        kept.iter().map(|&(_, x)| x / scale).fold(0.0, f64::max)
    };
    let geometric_tail = |n: usize| scale * d * lambda.powi(n as i32 + 1) / (1.0 - lambda);
    let side = |cut: Option<usize>| -> Result<(usize, f64)> {
        if let Some(k) = cut {
            return Ok((k, ROUND_OFF * scale / (1.0 - lambda)));
        }
        let mut n = 1;
        while 2.0 * geometric_tail(n) > tolerance {
            n += 1;
            if n > MAX_TERMS {
                return Err(Error::NotHyperbolic(format!(
                    "λ = {lambda:.4}, D = {d:.3e}: more than {MAX_TERMS} terms needed for tolerance {tolerance:e}"
                )));
            }
        }
        Ok((n, geometric_tail(n)))
    };
    let (ns, ts) = side(ks)?;
    let (nu, tu) = side(ku)?;
    Ok(Truncation {
        tolerance,
        c,
        c_combined,
        d,
        lambda,
        q,
        terms: ns.max(nu).max(1),
        tail_bound: ts + tu,
        norm_bound: 2.0 * c * d * q as f64 / (1.0 - lambda),
        stable_powers,
        unstable_powers,
    })
}

/// Truncated `J v` with its certified tail bound.
pub fn right_inverse_j(v: &Section, j: &RightInverse) -> JOutput {
    let value = j.apply(v);
    let nv = v.c0_norm();
    JOutput {
        tail_bound: j.truncation.tail_bound * nv,
        gain: if nv > 0.0 { value.c0_norm() / nv } else { 0.0 },
        value,
    }
}

/// `||(F_⋆ - id)(J v) - v||_{C^0}`.
pub fn verify_right_inverse(jv: &Section, v: &Section, j: &RightInverse) -> f64 {
    f_star(jv, &j.sample, &j.table).sub(jv).distance(v)
}
