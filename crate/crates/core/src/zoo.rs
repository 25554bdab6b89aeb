//! Catalog of concrete hyperbolic endomorphisms with analytically known
//! invariants, plus perturbation families.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_space::{wrap_signed, ModelSpace, OrbitWindow, Point};

pub type MapFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;
pub type PreimageFn = Arc<dyn Fn(&Point) -> Vec<Point> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Analytic,
    C1,
}

/// A basic piece known in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum KnownPiece {
    /// The whole space is one transitive piece.
    Whole { unstable_dim: usize },
    /// A periodic orbit, listed in dynamical order.
    Cycle { points: Vec<Point>, unstable_dim: usize },
}

impl KnownPiece {
    pub fn unstable_dim(&self) -> usize {
        match self {
            KnownPiece::Whole { unstable_dim } | KnownPiece::Cycle { unstable_dim, .. } => *unstable_dim,
        }
    }
}

/// Split of one coordinate into an attracting and a repelling fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSplit {
    pub coord: usize,
    pub attractor: f64,
    pub repeller: f64,
}

/// Semi-algebraic template from which filtrations and covers are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PieceTemplate {
    /// Single transitive piece; filtration and cover are the whole space.
    Transitive,
    /// Product of one-dimensional attractor/repeller pairs; the remaining
    /// coordinates sit at 0 on the inverse limit.
    Coordinatewise { splits: Vec<CoordinateSplit> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointData {
    pub point: Point,
    /// Moduli of the eigenvalues of the derivative, descending.
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnownData {
    pub fixed_points: Vec<FixedPointData>,
    pub pieces: Vec<KnownPiece>,
    /// Edges `(i, j)` meaning piece `i` is above piece `j`, indices into `pieces`.
    pub order: Vec<(usize, usize)>,
    pub template: Option<PieceTemplate>,
}

/// A smooth self-map of a flat model space, possibly non-invertible and with critical points.
#[derive(Clone)]
pub struct Endomorphism {
    name: String,
    space: ModelSpace,
    eval: MapFn,
    derivative: JacobianFn,
    preimages: Option<PreimageFn>,
    smoothness: Smoothness,
    known: Option<KnownData>,
}

impl fmt::Debug for Endomorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Endomorphism")
            .field("name", &self.name)
            .field("space", &self.space)
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

impl Endomorphism {
    pub fn custom(
        name: impl Into<String>,
        space: ModelSpace,
        eval: impl Fn(&Point) -> Point + Send + Sync + 'static,
        derivative: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            space,
            eval: Arc::new(eval),
            derivative: Arc::new(derivative),
            preimages: None,
            smoothness: Smoothness::Analytic,
            known: None,
        }
    }

    pub fn with_preimages(mut self, pre: impl Fn(&Point) -> Vec<Point> + Send + Sync + 'static) -> Self {
        self.preimages = Some(Arc::new(pre));
        self
    }

    pub fn with_known(mut self, known: KnownData) -> Self {
        self.known = Some(known);
        self
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> Self {
        self.smoothness = s;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn known(&self) -> Option<&KnownData> {
        self.known.as_ref()
    }

    pub fn eval(&self, x: &Point) -> Point {
        self.space.reduce(&(self.eval)(x))
    }

    pub fn derivative(&self, x: &Point) -> DMatrix<f64> {
        (self.derivative)(x)
    }

    pub fn has_preimages(&self) -> bool {
        self.preimages.is_some()
    }

    /// Preimages of `x` that themselves lie in the image, i.e. admissible past
    /// coordinates of inverse-limit points. Empty if unsupported.
    pub fn preimages(&self, x: &Point) -> Vec<Point> {
        self.preimages.as_ref().map(|p| p(x)).unwrap_or_default()
    }

    /// `n`-fold iterate.
    pub fn iterate(&self, x: &Point, n: usize) -> Point {
        let mut y = x.clone();
        for _ in 0..n {
            y = self.eval(&y);
        }
        y
    }

    /// Derivative of the `n`-fold iterate, chained along the orbit.
    pub fn iterate_derivative(&self, x: &Point, n: usize) -> DMatrix<f64> {
        let d = self.space.dim();
        let mut m = DMatrix::identity(d, d);
        let mut y = x.clone();
        for _ in 0..n {
            m = self.derivative(&y) * m;
            y = self.eval(&y);
        }
        m
    }

    /// Window around `x0` built from `k_fwd` forward images and `k_back` steps
    /// along the first admissible preimage branch.
    pub fn window_through(&self, x0: &Point, k_back: usize, k_fwd: usize) -> Result<OrbitWindow> {
        let mut past = Vec::with_capacity(k_back);
        let mut y = self.space.reduce(x0);
        for _ in 0..k_back {
            y = self
                .preimages(&y)
                .into_iter()
                .next()
                .ok_or_else(|| Error::Unsupported(format!("{}: no admissible preimage", self.name)))?;
            past.push(y.clone());
        }
        past.reverse();
        let mut coords = past;
        let mut y = self.space.reduce(x0);
        coords.push(y.clone());
        for _ in 0..k_fwd {
            y = self.eval(&y);
            coords.push(y.clone());
        }
        OrbitWindow::from_map(self.space.clone(), coords, k_back, |p| self.eval(p))
    }

    /// Rank of the derivative at `x`.
    pub fn derivative_rank(&self, x: &Point) -> usize {
        self.derivative(x).rank(1e-10)
    }

    /// Checks fixed-point equations and multipliers recorded in the known data.
    pub fn verify_known_data(&self) -> Result<()> {
        let Some(k) = &self.known else { return Ok(()) };
        for fp in &k.fixed_points {
            let r = self.space.dist(&self.eval(&fp.point), &fp.point);
            if r > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "{}: recorded fixed point {:?} has defect {r:e}",
                    self.name,
                    fp.point.as_slice()
                )));
            }
            let m = multipliers(&self.derivative(&fp.point));
            let ok = m.len() == fp.multipliers.len()
                && m.iter().zip(&fp.multipliers).all(|(a, b)| (a - b).abs() <= 1e-10);
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "{}: multipliers {m:?} differ from recorded {:?}",
                    self.name, fp.multipliers
                )));
            }
        }
        for piece in &k.pieces {
            if let KnownPiece::Cycle { points, .. } = piece {
                for (i, p) in points.iter().enumerate() {
                    let next = &points[(i + 1) % points.len()];
                    if self.space.dist(&self.eval(p), next) > 1e-12 {
                        return Err(Error::InvalidParameter(format!("{}: cycle defect", self.name)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Eigenvalue moduli, sorted descending.
pub fn multipliers(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

fn integer_matrix(rows: &[Vec<i64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidParameter("integer matrix must be square and non-empty".into()));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j] as f64))
}

/// `x -> A x mod 1` on the `d`-torus.
pub fn torus_linear(rows: &[Vec<i64>]) -> Result<Endomorphism> {
    let a = integer_matrix(rows)?;
    let d = a.nrows();
    let eig = a.complex_eigenvalues();
    if let Some(z) = eig.iter().find(|z| (z.norm() - 1.0).abs() <= 1e-8) {
        return Err(Error::NotHyperbolic(format!("eigenvalue {z} has modulus 1")));
    }
    let det = a.determinant().round();
    if det == 0.0 {
        return Err(Error::NotHyperbolic("singular integer matrix".into()));
    }
    let inv = a.clone().try_inverse().expect("nonzero determinant");
    let degree = det.abs() as usize;
    let space = if d == 1 { ModelSpace::circle() } else { ModelSpace::torus(d) };
    let unstable_dim = eig.iter().filter(|z| z.norm() > 1.0).count();
    let name = if d == 1 && rows[0][0] == 2 {
        "doubling".to_string()
    } else {
        format!(
            "torus:{}",
            rows.iter().flatten().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        )
    };

    let a_eval = a.clone();
    let a_der = a.clone();
    let pre_space = space.clone();
    let f = Endomorphism::custom(name, space, move |x| &a_eval * x, move |_| a_der.clone())
        .with_preimages(move |x| torus_preimages(&pre_space, &inv, degree, x))
        .with_known(KnownData {
            fixed_points: vec![FixedPointData {
                point: DVector::zeros(d),
                multipliers: multipliers(&a),
            }],
            pieces: vec![KnownPiece::Whole { unstable_dim }],
            order: vec![],
            template: Some(PieceTemplate::Transitive),
        });
    f.verify_known_data()?;
    Ok(f)
}

fn torus_preimages(space: &ModelSpace, inv: &DMatrix<f64>, degree: usize, x: &Point) -> Vec<Point> {
    let d = x.len();
    let mut found: Vec<Point> = Vec::with_capacity(degree);
    // Translates by lattice vectors in [0, degree)^d cover every coset of A Z^d.
    let total = degree.pow(d as u32);
    for idx in 0..total {
        let mut k = DVector::zeros(d);
        let mut r = idx;
        for c in 0..d {
            k[c] = (r % degree) as f64;
            r /= degree;
        }
        let y = space.reduce(&(inv * (x + k)));
        if !found.iter().any(|p| space.dist(p, &y) < 1e-9) {
            found.push(y);
        }
        if found.len() == degree {
            break;
        }
    }
    found
}

/// Circle map `x -> 2x mod 1`.
pub fn doubling() -> Endomorphism {
    torus_linear(&[vec![2]]).expect("doubling map is hyperbolic")
}

/// Fixed points `(alpha, beta)` of `x^2 + c`, `alpha <= beta`.
fn quadratic_fixed_points(c: f64) -> Result<(f64, f64)> {
    let disc = 1.0 - 4.0 * c;
    if disc <= 0.0 {
        return Err(Error::InvalidParameter(format!("x^2 + {c} has no real fixed points")));
    }
    let s = disc.sqrt();
    Ok(((1.0 - s) / 2.0, (1.0 + s) / 2.0))
}

fn quadratic_lower(c: f64) -> f64 {
    c.min(0.0)
}

fn in_period_one_window(c: f64) -> bool {
    c > -0.75 && c < 0.25
}

fn in_period_two_window(c: f64) -> bool {
    c > -1.25 && c < -0.75
}

/// `(x_i) -> (x_m^2 + c, x_1, ..., x_{m-1}, 0, ..., 0)` on `[min(c,0), beta]^n`.
pub fn delay(m: usize, n: usize, c: f64) -> Result<Endomorphism> {
    if m < 1 || m > n {
        return Err(Error::InvalidParameter(format!("delay map needs 1 <= m <= n (m={m}, n={n})")));
    }
    let (alpha, beta) = quadratic_fixed_points(c)?;
    let lo = quadratic_lower(c);
    let space = ModelSpace::bounded_box(vec![lo; n], vec![beta; n])?;
    let name = if m == 1 && n == 1 {
        format!("quadratic:c={c}")
    } else {
        format!("delay:m={m},n={n},c={c}")
    };
    let eval = move |x: &Point| {
        let mut y = DVector::zeros(n);
        y[0] = x[m - 1] * x[m - 1] + c;
        for i in 1..m {
            y[i] = x[i - 1];
        }
        y
    };
    let der = move |x: &Point| {
        let mut j = DMatrix::zeros(n, n);
        j[(0, m - 1)] = 2.0 * x[m - 1];
        for i in 1..m {
            j[(i, i - 1)] = 1.0;
        }
        j
    };
    let pre = move |y: &Point| {
        if (m..n).any(|i| y[i] != 0.0) {
            return Vec::new();
        }
        let t = y[0] - c;
        if t < -1e-15 {
            return Vec::new();
        }
        let r = t.max(0.0).sqrt();
        let mut out = Vec::new();
        for root in [r, -r] {
            // The past coordinate must itself be a value of the map.
            if root < c - 1e-15 || root > beta + 1e-15 || (root == -r && r == 0.0 && !out.is_empty()) {
                continue;
            }
            let mut x = DVector::zeros(n);
            x[m - 1] = root.clamp(lo, beta);
            for i in 1..m {
                x[i - 1] = y[i];
            }
            out.push(x);
        }
        out
    };

    let mut known = KnownData::default();
    let fixed = |v: f64| {
        let mut p = DVector::zeros(n);
        for i in 0..m {
            p[i] = v;
        }
        p
    };
    for v in [alpha, beta] {
        let p = fixed(v);
        let mult = multipliers(&der(&p));
        known.fixed_points.push(FixedPointData { point: p, multipliers: mult });
    }
    if in_period_one_window(c) {
        known.pieces = vec![
            KnownPiece::Cycle { points: vec![fixed(alpha)], unstable_dim: 0 },
            KnownPiece::Cycle { points: vec![fixed(beta)], unstable_dim: 1 },
        ];
        known.order = vec![(1, 0)];
        if m == 1 {
            known.template = Some(PieceTemplate::Coordinatewise {
                splits: vec![CoordinateSplit { coord: 0, attractor: alpha, repeller: beta }],
            });
        }
    } else if in_period_two_window(c) && m == 1 {
        // Attracting 2-cycle solves x^2 + x + c + 1 = 0.
        let s = (-3.0 - 4.0 * c).sqrt();
        let (p, q) = ((-1.0 - s) / 2.0, (-1.0 + s) / 2.0);
        known.pieces = vec![
            KnownPiece::Cycle { points: vec![fixed(p), fixed(q)], unstable_dim: 0 },
            KnownPiece::Cycle { points: vec![fixed(alpha)], unstable_dim: 1 },
            KnownPiece::Cycle { points: vec![fixed(beta)], unstable_dim: 1 },
        ];
        known.order = vec![(1, 0), (2, 0)];
    }
    let f = Endomorphism::custom(name, space, eval, der)
        .with_preimages(pre)
        .with_known(known);
    f.verify_known_data()?;
    Ok(f)
}

/// `x -> x^2 + c` on its bounded invariant interval.
pub fn quadratic(c: f64) -> Result<Endomorphism> {
    delay(1, 1, c)
}

/// `(x, y, z) -> (x^2, y^2, 0)` on `[0,1]^3`.
pub fn product_squares() -> Endomorphism {
    let eval = |p: &Point| DVector::from_vec(vec![p[0] * p[0], p[1] * p[1], 0.0]);
    let der = |p: &Point| DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 * p[0], 2.0 * p[1], 0.0]));
    let pre = |p: &Point| {
        if p[2] != 0.0 || p[0] < 0.0 || p[1] < 0.0 {
            return Vec::new();
        }
        vec![DVector::from_vec(vec![p[0].sqrt(), p[1].sqrt(), 0.0])]
    };
    let pt = |x: f64, y: f64| DVector::from_vec(vec![x, y, 0.0]);
    let pieces = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];
    let known = KnownData {
        fixed_points: pieces
            .iter()
            .map(|&(x, y)| FixedPointData {
                point: pt(x, y),
                multipliers: {
                    let mut m = vec![2.0 * x, 2.0 * y, 0.0];
                    m.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    m
                },
            })
            .collect(),
        pieces: pieces
            .iter()
            .map(|&(x, y)| KnownPiece::Cycle {
                points: vec![pt(x, y)],
                unstable_dim: (x + y) as usize,
            })
            .collect(),
        order: vec![(3, 1), (3, 2), (3, 0), (1, 0), (2, 0)],
        template: Some(PieceTemplate::Coordinatewise {
            splits: vec![
                CoordinateSplit { coord: 0, attractor: 0.0, repeller: 1.0 },
                CoordinateSplit { coord: 1, attractor: 0.0, repeller: 1.0 },
            ],
        }),
    };
    let f = Endomorphism::custom("product_squares", ModelSpace::unit_box(3), eval, der)
        .with_preimages(pre)
        .with_known(known);
    f.verify_known_data().expect("product_squares known data");
    f
}

fn parse_kv(s: &str) -> Result<Vec<(String, f64)>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{t}`")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad number `{v}`")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn lookup(kv: &[(String, f64)], key: &str, default: Option<f64>) -> Result<f64> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .or(default)
        .ok_or_else(|| Error::Parse(format!("missing parameter `{key}`")))
}

/// Names accepted by [`by_name`], with one example each.
pub const ZOO_NAMES: &[(&str, &str)] = &[
    ("doubling", "circle map x -> 2x mod 1"),
    ("quadratic:c=0", "x -> x^2 + c on its invariant interval"),
    ("delay:m=1,n=2,c=0", "(x_i) -> (x_m^2 + c, x_1, ..., x_{m-1}, 0, ..., 0)"),
    ("product_squares", "(x, y, z) -> (x^2, y^2, 0) on [0,1]^3"),
    ("torus:2,1,1,1", "x -> A x mod 1, A given row-major"),
];

/// Looks up a zoo member by its CLI name.
pub fn by_name(spec: &str) -> Result<Endomorphism> {
    let spec = spec.trim();
    let (head, args) = spec.split_once(':').unwrap_or((spec, ""));
    match head {
        "doubling" => Ok(doubling()),
        "product_squares" => Ok(product_squares()),
        "quadratic" => {
            let kv = parse_kv(args)?;
            quadratic(lookup(&kv, "c", Some(0.0))?)
        }
        "delay" => {
            let kv = parse_kv(args)?;
            let m = lookup(&kv, "m", None)?;
            let n = lookup(&kv, "n", None)?;
            if m.fract() != 0.0 || n.fract() != 0.0 || m < 0.0 || n < 0.0 {
                return Err(Error::Parse("m and n must be non-negative integers".into()));
            }
            delay(m as usize, n as usize, lookup(&kv, "c", Some(0.0))?)
        }
        "torus" => {
            let entries = args
                .split(',')
                .map(|t| t.trim().parse::<i64>().map_err(|_| Error::Parse(format!("bad entry `{t}`"))))
                .collect::<Result<Vec<_>>>()?;
            let d = (entries.len() as f64).sqrt().round() as usize;
            if d * d != entries.len() || d == 0 {
                return Err(Error::Parse(format!("{} entries do not form a square matrix", entries.len())));
            }
            let rows: Vec<Vec<i64>> = entries.chunks(d).map(|r| r.to_vec()).collect();
            torus_linear(&rows)
        }
        other => Err(Error::Unsupported(format!("unknown zoo member `{other}`"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PerturbationKind {
    /// `g(x) = f(x) + eps * v`.
    Translation { direction: [f64; 3] },
    /// `g_i(x) = f_i(x) + eps * sin(2 pi k x_i)`.
    Fourier { k: u32 },
}

/// One-parameter family `g_eps` with `g_0 = f`.
#[derive(Debug, Clone)]
pub struct PerturbationFamily {
    base: Endomorphism,
    kind: PerturbationKind,
}

/// Tolerance on how far a perturbed box map may push the box outward, as a fraction of its diameter.
const BOX_SLACK: f64 = 0.05;

impl PerturbationFamily {
    pub fn base(&self) -> &Endomorphism {
        &self.base
    }

    pub fn kind(&self) -> PerturbationKind {
        self.kind
    }

    fn offset(&self, x: &Point, eps: f64) -> Point {
        let d = x.len();
        match self.kind {
            PerturbationKind::Translation { direction } => {
                DVector::from_fn(d, |i, _| eps * direction.get(i).copied().unwrap_or(0.0))
            }
            PerturbationKind::Fourier { k } => {
                let w = 2.0 * std::f64::consts::PI * k as f64;
                x.map(|c| eps * (w * c).sin())
            }
        }
    }

    fn offset_derivative(&self, x: &Point, eps: f64) -> DMatrix<f64> {
        let d = x.len();
        match self.kind {
            PerturbationKind::Translation { .. } => DMatrix::zeros(d, d),
            PerturbationKind::Fourier { k } => {
                let w = 2.0 * std::f64::consts::PI * k as f64;
                DMatrix::from_diagonal(&x.map(|c| eps * w * (w * c).cos()))
            }
        }
    }

    /// The perturbed map `g_eps`. At `eps = 0` this is the base map itself.
    pub fn at(&self, eps: f64) -> Result<Endomorphism> {
        if eps == 0.0 {
            return Ok(self.base.clone());
        }
        let space = self.base.space().clone();
        if !space.is_periodic() {
            let overshoot = sample_grid(&space, 21)
                .iter()
                .map(|p| {
                    let y = (self.base.eval)(p) + self.offset(p, eps);
                    y.iter()
                        .zip(space.lower().iter().zip(space.upper()))
                        .map(|(c, (l, u))| (l - c).max(c - u).max(0.0))
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if overshoot > BOX_SLACK * space.diameter() {
                return Err(Error::InvalidParameter(format!(
                    "perturbation of size {eps} pushes the invariant region out by {overshoot}"
                )));
            }
        }
        let fam = self.clone();
        let fam_d = self.clone();
        let fam_p = self.clone();
        let name = format!("{}+{}({eps})", self.base.name(), self.kind_name());
        let g = Endomorphism::custom(
            name,
            space,
            move |x| (fam.base.eval)(x) + fam.offset(x, eps),
            move |x| fam_d.base.derivative(x) + fam_d.offset_derivative(x, eps),
        )
        .with_smoothness(self.base.smoothness());
        if !self.base.has_preimages() {
            return Ok(g);
        }
        let g2 = g.clone();
        Ok(g.with_preimages(move |y| {
            fam_p
                .base
                .preimages(y)
                .into_iter()
                .filter_map(|seed| newton_preimage(&g2, y, seed))
                .collect()
        }))
    }

    fn kind_name(&self) -> &'static str {
        match self.kind {
            PerturbationKind::Translation { .. } => "translation",
            PerturbationKind::Fourier { .. } => "fourier",
        }
    }

    /// Measured `C^1` distance between `g_eps` and `f` on a sample grid.
    pub fn c1_size(&self, eps: f64) -> f64 {
        let space = self.base.space();
        let n = if space.dim() >= 3 { 11 } else { 101 };
        sample_grid(space, n)
            .iter()
            .map(|p| {
                let c0 = self.offset(p, eps).amax();
                let c1 = crate::phase_space::spectral_norm(&self.offset_derivative(p, eps));
                c0.max(c1)
            })
            .fold(0.0, f64::max)
    }
}

fn newton_preimage(g: &Endomorphism, y: &Point, seed: Point) -> Option<Point> {
    let space = g.space();
    let mut x = seed;
    for _ in 0..50 {
        let r = space.log(y, &(g.eval)(&x));
        if r.amax() < 1e-14 {
            return Some(space.reduce(&x));
        }
        let step = g.derivative(&x).lu().solve(&r)?;
        x -= step;
    }
    let r = space.log(y, &(g.eval)(&x));
    (r.amax() < 1e-12).then(|| space.reduce(&x))
}

pub fn perturb_translation(base: &Endomorphism, direction: &[f64]) -> PerturbationFamily {
    let mut dir = [0.0; 3];
    for (d, v) in dir.iter_mut().zip(direction) {
        *d = *v;
    }
    PerturbationFamily {
        base: base.clone(),
        kind: PerturbationKind::Translation { direction: dir },
    }
}

pub fn perturb_fourier(base: &Endomorphism, k: u32) -> PerturbationFamily {
    PerturbationFamily {
        base: base.clone(),
        kind: PerturbationKind::Fourier { k },
    }
}

/// Regular grid with `n` points per axis over the space (periodic axes skip the endpoint).
pub fn sample_grid(space: &ModelSpace, n: usize) -> Vec<Point> {
    let d = space.dim();
    let axis = |c: usize, i: usize| {
        let (l, u) = (space.lower()[c], space.upper()[c]);
        if space.is_periodic() {
            l + (u - l) * i as f64 / n as f64
        } else {
            l + (u - l) * i as f64 / (n - 1).max(1) as f64
        }
    };
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            DVector::from_fn(d, |c, _| {
                let i = idx % n;
                idx /= n;
                axis(c, i)
            })
        })
        .collect()
}

/// Signed circle-lifted difference helper for one-dimensional periodic maps.
pub fn lifted_difference(a: f64, b: f64) -> f64 {
    wrap_signed(a - b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check_derivative(f: &Endomorphism) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let space = f.space().clone();
        let h = 1e-7;
        for _ in 0..1000 {
            let x = DVector::from_fn(space.dim(), |c, _| {
                let (l, u) = (space.lower()[c], space.upper()[c]);
                rng.random_range(l + 2.0 * h..u - 2.0 * h)
            });
            let j = f.derivative(&x);
            for c in 0..space.dim() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                let col = space.log(&f.eval(&xm), &f.eval(&xp)) / (2.0 * h);
                for r in 0..space.dim() {
                    assert!(
                        (col[r] - j[(r, c)]).abs() <= 1e-6,
                        "{}: d{r}/d{c} at {:?}",
                        f.name(),
                        x.as_slice()
                    );
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for f in [
            doubling(),
            quadratic(0.0).unwrap(),
            quadratic(-0.3).unwrap(),
            delay(1, 2, 0.0).unwrap(),
            delay(2, 3, 0.0).unwrap(),
            product_squares(),
            torus_linear(&[vec![2, 1], vec![1, 1]]).unwrap(),
        ] {
            check_derivative(&f);
        }
    }

    #[test]
    fn doubling_basics() {
        let f = doubling();
        assert_eq!(f.eval(&dvector![0.25])[0], 0.5);
        assert_eq!(f.derivative(&dvector![0.7]), dmatrix![2.0]);
        let k = f.known().unwrap();
        assert_eq!(k.fixed_points[0].point, dvector![0.0]);
        assert_eq!(k.fixed_points[0].multipliers, vec![2.0]);
        assert_eq!(f.preimages(&dvector![0.3]).len(), 2);
        assert_eq!(f.derivative_rank(&dvector![0.3]), 1);
    }

    #[test]
    fn quadratic_at_zero() {
        let f = quadratic(0.0).unwrap();
        let k = f.known().unwrap();
        let pts: Vec<f64> = k.fixed_points.iter().map(|p| p.point[0]).collect();
        assert_eq!(pts, vec![0.0, 1.0]);
        assert_eq!(k.fixed_points[0].multipliers, vec![0.0]);
        assert_eq!(k.fixed_points[1].multipliers, vec![2.0]);
        assert_eq!(f.derivative_rank(&dvector![0.0]), 0);
        assert_eq!(f.space().lower(), &[0.0]);
        assert_eq!(f.space().upper(), &[1.0]);
    }

    #[test]
    fn delay_reduces_to_quadratic() {
        let d = delay(1, 1, 0.0).unwrap();
        let q = quadratic(0.0).unwrap();
        for x in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(d.eval(&dvector![x]), q.eval(&dvector![x]));
        }
        let d2 = delay(1, 2, 0.0).unwrap();
        assert_eq!(d2.eval(&dvector![0.5, 0.9]), dvector![0.25, 0.0]);
        assert_eq!(d2.derivative(&dvector![1.0, 0.0]), dmatrix![2.0, 0.0; 0.0, 0.0]);
        assert_eq!(d2.derivative_rank(&dvector![0.4, 0.2]), 1);
        assert!(delay(3, 2, 0.0).is_err());
        assert!(delay(0, 2, 0.0).is_err());
    }

    #[test]
    fn product_squares_fixed_points() {
        let f = product_squares();
        let k = f.known().unwrap();
        assert_eq!(k.pieces.len(), 4);
        assert_eq!(
            f.derivative(&dvector![1.0, 1.0, 0.0]),
            DMatrix::from_diagonal(&dvector![2.0, 2.0, 0.0])
        );
        for fp in &k.fixed_points {
            assert_eq!(f.eval(&fp.point), fp.point);
        }
    }

    #[test]
    fn torus_cat_map() {
        let f = torus_linear(&[vec![2, 1], vec![1, 1]]).unwrap();
        let m = multipliers(&f.derivative(&dvector![0.1, 0.2]));
        assert!((m[0] - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
        assert_eq!(f.preimages(&dvector![0.3, 0.6]).len(), 1);
        assert!(torus_linear(&[vec![1, 1], vec![0, 1]]).is_err());
        assert_eq!(by_name("torus:2").unwrap().name(), "doubling");
        let g = torus_linear(&[vec![2, 0], vec![0, 3]]).unwrap();
        assert_eq!(g.preimages(&dvector![0.1, 0.2]).len(), 6);
    }

    #[test]
    fn names_resolve() {
        for (name, _) in ZOO_NAMES {
            by_name(name).unwrap();
        }
        assert!(by_name("nonsense").is_err());
        assert!(by_name("torus:1,2,3").is_err());
        assert!(by_name("quadratic:c=abc").is_err());
    }

    #[test]
    fn zero_perturbation_is_the_base() {
        let f = doubling();
        let fam = perturb_fourier(&f, 1);
        let g = fam.at(0.0).unwrap();
        for x in [0.1, 0.4, 0.9] {
            assert_eq!(g.eval(&dvector![x]), f.eval(&dvector![x]));
        }
        assert_eq!(fam.c1_size(0.0), 0.0);
    }

    #[test]
    fn translation_sizes() {
        let f = doubling();
        let fam = perturb_translation(&f, &[1.0]);
        let g = fam.at(0.01).unwrap();
        assert!((g.eval(&dvector![0.2])[0] - 0.41).abs() < 1e-15);
        assert_eq!(g.derivative(&dvector![0.2]), dmatrix![2.0]);
        assert!((fam.c1_size(0.01) - 0.01).abs() < 1e-15);
        let pre = g.preimages(&dvector![0.41]);
        assert!(pre.iter().any(|p| (p[0] - 0.2).abs() < 1e-12));

        let q = quadratic(0.0).unwrap();
        let fam = perturb_translation(&q, &[1.0]);
        let g = fam.at(1e-3).unwrap();
        assert!((g.eval(&dvector![0.5])[0] - 0.251).abs() < 1e-15);
        assert!((fam.c1_size(1e-3) - 1e-3).abs() < 1e-15);
        assert!(fam.at(0.5).is_err());
    }

    #[test]
    fn window_through_is_an_orbit() {
        let f = quadratic(0.0).unwrap();
        let w = f.window_through(&dvector![0.5], 10, 10).unwrap();
        w.check_residual(1e-12).unwrap();
        assert!(w.get(-10).unwrap()[0] > 0.99);
    }
}
