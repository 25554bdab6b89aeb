use std::sync::OnceLock;

use crate::error::{Error, Result};

/// The bump `ρ(t) = exp(1/(t² - 1))` on `(-1, 1)`, zero elsewhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct BumpKernel;

impl BumpKernel {
    pub fn value(&self, t: f64) -> f64 {
        if t.abs() >= 1.0 {
            0.0
        } else {
            (1.0 / (t * t - 1.0)).exp()
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t.abs() >= 1.0 {
            0.0
        } else {
            let s = t * t - 1.0;
            self.value(t) * (-2.0 * t / (s * s))
        }
    }

    /// `L = sup |ρ'|`, evaluated once on a fine grid.
    pub fn derivative_bound(&self) -> f64 {
        static L: OnceLock<f64> = OnceLock::new();
        *L.get_or_init(|| {
            let n = 200_000;
            (0..=n)
                .map(|i| BumpKernel.derivative(i as f64 / n as f64).abs())
                .fold(0.0, f64::max)
        })
    }
}

/// Samples of a function on a uniform 1-d grid `lo + i h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1 {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl Grid1 {
    pub fn sample(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let h = (hi - lo) / (n - 1) as f64;
        Self {
            lo,
            hi,
            values: (0..n).map(|i| f(lo + i as f64 * h)).collect(),
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.spacing()
    }

    /// Piecewise-linear interpolation, clamped to the grid.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = ((x - self.lo) / self.spacing()).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// Value at any integer index, extended by point reflection across the ends.
    fn extended(&self, j: isize) -> f64 {
        let n = self.values.len() as isize;
        if j < 0 {
            2.0 * self.values[0] - self.values[(-j) as usize]
        } else if j >= n {
            2.0 * self.values[(n - 1) as usize] - self.values[(2 * (n - 1) - j) as usize]
        } else {
            self.values[j as usize]
        }
    }
}

/// Samples on a uniform 2-d grid, row-major in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl Grid2 {
    pub fn sample(lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let hx = (hi[0] - lo[0]) / (nx - 1) as f64;
        let hy = (hi[1] - lo[1]) / (ny - 1) as f64;
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(lo[0] + i as f64 * hx, lo[1] + j as f64 * hy));
            }
        }
        Self { lo, hi, nx, ny, values }
    }

    pub fn spacing(&self) -> [f64; 2] {
        [
            (self.hi[0] - self.lo[0]) / (self.nx - 1) as f64,
            (self.hi[1] - self.lo[1]) / (self.ny - 1) as f64,
        ]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    fn row(&self, j: usize) -> Grid1 {
        Grid1 {
            lo: self.lo[0],
            hi: self.hi[0],
            values: self.values[j * self.nx..(j + 1) * self.nx].to_vec(),
        }
    }

    fn column(&self, i: usize) -> Grid1 {
        Grid1 {
            lo: self.lo[1],
            hi: self.hi[1],
            values: (0..self.ny).map(|j| self.at(i, j)).collect(),
        }
    }
}

fn check_scale(delta: f64, h: f64, extent: f64) -> Result<()> {
    if !(delta >= h) {
        return Err(Error::InvalidParameter(format!(
            "mollifier width {delta} is below the grid spacing {h}"
        )));
    }
    if delta >= extent {
        return Err(Error::InvalidParameter(format!(
            "mollifier width {delta} exceeds the grid extent {extent}"
        )));
    }
    Ok(())
}

fn weights(delta: f64, h: f64) -> Vec<f64> {
    let k = (delta / h).floor() as usize;
    let raw: Vec<f64> = (0..=2 * k)
        .map(|i| BumpKernel.value((i as f64 - k as f64) * h / delta))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn mollify_line(g: &Grid1, w: &[f64]) -> Grid1 {
    let k = (w.len() / 2) as isize;
    let values = (0..g.values.len() as isize)
        .map(|i| {
            w.iter()
                .enumerate()
                .map(|(m, wm)| wm * g.extended(i + m as isize - k))
                .sum()
        })
        .collect();
    Grid1 {
        lo: g.lo,
        hi: g.hi,
        values,
    }
}

/// Discrete convolution with the normalized bump of half-width `delta`.
///
/// Near the ends the data are extended by point reflection, which keeps
/// affine functions fixed.
pub fn mollify_1d(g: &Grid1, delta: f64) -> Result<Grid1> {
    let h = g.spacing();
    check_scale(delta, h, g.hi - g.lo)?;
    Ok(mollify_line(g, &weights(delta, h)))
}

/// Product-kernel convolution on a 2-d grid, one axis at a time.
pub fn mollify_2d(g: &Grid2, delta: f64) -> Result<Grid2> {
    let [hx, hy] = g.spacing();
    check_scale(delta, hx.max(hy), (g.hi[0] - g.lo[0]).min(g.hi[1] - g.lo[1]))?;
    let (wx, wy) = (weights(delta, hx), weights(delta, hy));
    let mut pass = g.clone();
    for j in 0..g.ny {
        let r = mollify_line(&g.row(j), &wx);
        pass.values[j * g.nx..(j + 1) * g.nx].copy_from_slice(&r.values);
    }
    let mut out = pass.clone();
    for i in 0..g.nx {
        let c = mollify_line(&pass.column(i), &wy);
        for j in 0..g.ny {
            out.values[j * g.nx + i] = c.values[j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_shape() {
        let k = BumpKernel;
        assert_eq!(k.value(1.0), 0.0);
        assert_eq!(k.value(-1.5), 0.0);
        assert!((k.value(0.0) - (-1f64).exp()).abs() < 1e-15);
        let l = k.derivative_bound();
        assert!(l > 0.5 && l < 1.0, "{l}");
        let h = 1e-6;
        for t in [-0.7, -0.2, 0.3, 0.8] {
            let fd = (k.value(t + h) - k.value(t - h)) / (2.0 * h);
            assert!((fd - k.derivative(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn affine_data_are_fixed() {
        let g = Grid1::sample(0.0, 1.0, 201, |x| 3.0 * x - 1.0);
        let m = mollify_1d(&g, 0.1).unwrap();
        for (a, b) in g.values.iter().zip(&m.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let g2 = Grid2::sample([0.0, 0.0], [1.0, 2.0], 51, 101, |x, y| x - 2.0 * y + 0.5);
        let m2 = mollify_2d(&g2, 0.1).unwrap();
        for (a, b) in g2.values.iter().zip(&m2.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kink_is_smoothed_within_delta_half() {
        let g = Grid1::sample(0.0, 1.0, 1001, |x| (x - 0.5).abs());
        let m = mollify_1d(&g, 0.1).unwrap();
        let err = g.values.iter().zip(&m.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 0.05, "{err}");
        assert!(err > 0.0);
        assert!((m.eval(0.5) - m.eval(0.5 + 1e-3)).abs() < 1e-3);
    }

    #[test]
    fn rejects_sub_grid_width() {
        let g = Grid1::sample(0.0, 1.0, 11, |x| x);
        assert!(mollify_1d(&g, 0.05).is_err());
        assert!(mollify_1d(&g, 2.0).is_err());
    }
}
