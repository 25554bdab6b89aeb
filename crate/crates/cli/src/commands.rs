use invlim::bundles::{solve_family, verify_principal, BundleFamily, BundleParams, PrincipalReport};
use invlim::conjugacy::{choose_delta, solve_conjugacy, DeltaChoice, RightInverse, SolveParams, Solution, DELTA_CANDIDATES};
use invlim::hyperbolic::{hyperbolic_splitting, verify_axiom_a, AxiomAReport, HyperbolicSplitting, Piece};
use invlim::smoothing::{partition_of_unity, PartitionOfUnity, SmoothedDerivative};
use invlim::zoo::ZOO_NAMES;
use invlim::{BasicPieceSet, Endomorphism, OrbitSample, OrbitWindow, Point};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::exit::{self, Failure};
use crate::report::{num, Writer};

/// Window length for the cone iteration of `hyperbolic` when none is configured.
pub const HYPERBOLIC_WINDOW: usize = 40;
/// Window length of the solver sample when none is configured.
pub const SOLVER_WINDOW: usize = 6;
/// Windows drawn from a whole-space piece for the splitting.
const MAX_WHOLE_WINDOWS: usize = 256;
/// Margin asked of contraction and expansion in the Axiom A check.
const AXIOM_A_MARGIN: f64 = 1e-3;

fn core<T>(r: invlim::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::from_core)
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
}

/// Writes the error report and metadata for a failed run, then passes the failure on.
fn fail(mut out: Writer, name: &str, e: Failure) -> Result<u8, Failure> {
    out.report(name, e.code, &ErrorReport { error: &e.message })?;
    out.finish()?;
    Err(e)
}

/// Window along a periodic orbit through `p`, following the orbit backwards.
fn periodic_window(f: &Endomorphism, orbit: &[Point], p: &Point, kb: usize, kf: usize) -> Result<OrbitWindow, Failure> {
    let space = f.space();
    let mut past = Vec::with_capacity(kb);
    let mut y = p.clone();
    for _ in 0..kb {
        y = orbit
            .iter()
            .min_by(|a, b| space.dist(&f.eval(a), &y).total_cmp(&space.dist(&f.eval(b), &y)))
            .expect("orbit is not empty")
            .clone();
        past.push(y.clone());
    }
    past.reverse();
    let mut coords = past;
    let mut y = p.clone();
    coords.push(y.clone());
    for _ in 0..kf {
        y = f.eval(&y);
        coords.push(y.clone());
    }
    core(OrbitWindow::from_map(space.clone(), coords, kb, |x| f.eval(x)))
}

#[derive(Serialize)]
struct HyperbolicReport<'a> {
    system: &'a str,
    pieces: &'a BasicPieceSet,
    windows: usize,
    iterations: usize,
    axiom_a: AxiomAReport,
    pass: bool,
}

/// Windows on the non-wandering set with their unstable dimensions, and the
/// periodic points they represent.
fn omega_windows(
    f: &Endomorphism,
    pieces: &[Piece],
    density: usize,
    kb: usize,
    kf: usize,
) -> Result<(Vec<OrbitWindow>, Vec<usize>, Vec<Point>), Failure> {
    let (mut windows, mut dims, mut periodic) = (Vec::new(), Vec::new(), Vec::new());
    for piece in pieces {
        if piece.whole {
            // Lattice points of a torus sample are periodic, so they stand for Per(f) as well.
            let sample = core(OrbitSample::for_system(f, density, kb, kf))?;
            let stride = (sample.len() / MAX_WHOLE_WINDOWS).max(1);
            for w in sample.windows().iter().step_by(stride) {
                periodic.push(w.x0().clone());
                windows.push(w.clone());
                dims.push(piece.unstable_dim);
            }
        } else {
            for p in &piece.points {
                windows.push(periodic_window(f, &piece.points, p, kb, kf)?);
                dims.push(piece.unstable_dim);
                periodic.push(p.clone());
            }
        }
    }
    Ok((windows, dims, periodic))
}

fn splitting_rows(s: &HyperbolicSplitting) -> Vec<Vec<String>> {
    let basis = |b: &invlim::Subspace| b.basis().iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ");
    let mut rows = vec![vec!["window", "x0", "stable_basis", "unstable_basis", "angle"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()];
    for (i, w) in s.windows.iter().enumerate() {
        rows.push(vec![
            i.to_string(),
            w.x0().iter().map(|c| num(*c)).collect::<Vec<_>>().join(" "),
            basis(&s.stable[i]),
            basis(&s.unstable[i]),
            num(s.stable[i].min_angle(&s.unstable[i])),
        ]);
    }
    rows
}

/// Pieces, filtration, covers and the Axiom A check; exit 0 iff all pass.
pub fn hyperbolic(cfg: &ExperimentConfig) -> Result<u8, Failure> {
    let f = cfg.endomorphism()?;
    let out = Writer::new(cfg, "hyperbolic")?;
    let set = match core(BasicPieceSet::analyze(&f)) {
        Ok(s) => s,
        Err(e) => return fail(out, "hyperbolic.json", e),
    };
    let (kb, kf) = cfg.window_lengths(HYPERBOLIC_WINDOW);
    let run = omega_windows(&f, &set.pieces, cfg.density(&f), kb, kf).and_then(|(windows, dims, periodic)| {
        let s = core(hyperbolic_splitting(&f, &windows, &dims, kb.min(kf)))?;
        Ok((s, periodic))
    });
    let (split, periodic) = match run {
        Ok(x) => x,
        Err(e) => return fail(out, "hyperbolic.json", e),
    };
    let axiom_a = verify_axiom_a(&f, &split, &periodic, AXIOM_A_MARGIN);
    let pass = axiom_a.pass;
    let code = if pass { exit::OK } else { exit::CHECK };
    let mut out = out;
    out.report(
        "hyperbolic.json",
        code,
        &HyperbolicReport {
            system: f.name(),
            pieces: &set,
            windows: split.windows.len(),
            iterations: kb.min(kf),
            axiom_a,
            pass,
        },
    )?;
    out.csv("splitting.csv", &splitting_rows(&split))?;
    out.finish()?;
    Ok(code)
}

/// Sample, pieces and partition of unity shared by `bundles` and `conjugacy`.
pub struct Pipeline {
    pub f: Endomorphism,
    pub sample: OrbitSample,
    pub set: BasicPieceSet,
    pub pu: PartitionOfUnity,
}

impl Pipeline {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, Failure> {
        let f = cfg.endomorphism()?;
        let (kb, kf) = cfg.window_lengths(SOLVER_WINDOW);
        let sample = core(OrbitSample::for_system(&f, cfg.density(&f), kb, kf))?;
        let set = core(BasicPieceSet::analyze(&f))?;
        let pu = core(partition_of_unity(&sample, core(set.covers())?, cfg.solver.partition_samples, cfg.seed))?;
        Ok(Self { f, sample, set, pu })
    }

    pub fn family(&self, delta: f64) -> Result<BundleFamily, Failure> {
        core(solve_family(&self.f, &self.sample, &self.set, &self.pu, delta, &BundleParams::default()))
    }

    pub fn principal(&self, delta: f64) -> Result<(BundleFamily, PrincipalReport), Failure> {
        let fam = self.family(delta)?;
        let fd = core(SmoothedDerivative::new(&self.f, delta))?;
        let rep = verify_principal(&fam, &self.sample, &self.set, &fd);
        Ok((fam, rep))
    }
}

fn bundles_delta(cfg: &ExperimentConfig, delta: Option<f64>) -> Result<f64, Failure> {
    delta
        .or(cfg.solver.delta)
        .ok_or_else(|| Failure::config("bundles needs solver.delta > 0 (the inverse is undefined at δ=0)"))
}

/// Item-by-item principal-bundle report; exit 0 iff every item passes.
pub fn bundles(cfg: &ExperimentConfig) -> Result<u8, Failure> {
    let delta = bundles_delta(cfg, None)?;
    let mut out = Writer::new(cfg, "bundles")?;
    let run = Pipeline::new(cfg).and_then(|p| p.principal(delta).map(|r| (p, r)));
    let (p, (fam, rep)) = match run {
        Ok(x) => x,
        Err(e) => return fail(out, "bundles.json", e),
    };
    let code = if rep.passed() { exit::OK } else { exit::CHECK };
    out.report("bundles.json", code, &rep)?;
    out.text("partition.csv", &p.pu.to_csv(&p.sample))?;
    for (i, b) in fam.pieces.iter().enumerate() {
        out.text(&format!("stable_{i}.csv"), &b.stable.to_csv())?;
        out.text(&format!("unstable_{i}.csv"), &b.unstable.to_csv())?;
    }
    out.finish()?;
    Ok(code)
}

#[derive(Serialize)]
pub struct Conditions {
    pub converged: bool,
    pub c1_pass: bool,
    pub c1_tolerance: f64,
    pub c2_pass: bool,
    pub c3_pass: bool,
}

/// One full conjugacy run: pre-pass (unless `δ` is fixed), `J`, fixed point.
pub struct ConjugacyRun {
    pub code: u8,
    pub sample: OrbitSample,
    pub choice: Option<DeltaChoice>,
    pub solution: Result<Solution, Failure>,
}

impl ConjugacyRun {
    pub fn conditions(&self, c1_tol: f64) -> Option<Conditions> {
        self.solution.as_ref().ok().map(|s| Conditions {
            converged: s.report.converged,
            c1_pass: s.report.c1_defect <= c1_tol,
            c1_tolerance: c1_tol,
            c2_pass: s.report.c2_pass,
            c3_pass: s.report.c3_pass,
        })
    }
}

pub fn run_conjugacy(cfg: &ExperimentConfig, delta: Option<f64>, epsilon: Option<f64>) -> Result<ConjugacyRun, Failure> {
    let p = Pipeline::new(cfg)?;
    let g = cfg.perturbed(epsilon)?;
    let s = &cfg.solver;
    let params = SolveParams {
        eta: s.eta,
        max_iters: s.max_iters,
        tolerance: s.tolerance,
        coverage_samples: s.coverage_samples,
        seed: cfg.seed,
    };
    let (delta, choice) = match delta.or(s.delta) {
        Some(d) => (d, None),
        None => {
            match choose_delta(&p.f, &g, &p.sample, &p.set, &p.pu, &DELTA_CANDIDATES, s.truncation_tol, &params) {
                Ok(c) => (c.delta, Some(c)),
                Err(e) => {
                    let e = Failure::from_core(e);
                    return Ok(ConjugacyRun { code: e.code, sample: p.sample, choice: None, solution: Err(e) });
                }
            }
        }
    };
    let solution = p
        .family(delta)
        .and_then(|fam| core(RightInverse::new(&p.f, &p.sample, &fam, &p.pu, s.truncation_tol)))
        .and_then(|j| core(solve_conjugacy(&g, &j, &params)));
    let code = match &solution {
        Err(e) => e.code,
        Ok(sol) => {
            let r = &sol.report;
            if !r.converged {
                exit::DIVERGENCE
            } else if r.c1_defect > s.c1_tol || !r.c2_pass || !r.c3_pass {
                exit::CONDITION
            } else {
                exit::OK
            }
        }
    };
    Ok(ConjugacyRun { code, sample: p.sample, choice, solution })
}

#[derive(Serialize)]
struct ConjugacyReport<'a> {
    delta_choice: Option<&'a DeltaChoice>,
    conditions: Option<Conditions>,
    solve: Option<&'a invlim::SolveReport>,
    error: Option<&'a str>,
}

/// Full pipeline; exit 0 iff converged with C1 within tolerance, (C2) and (C3).
pub fn conjugacy(cfg: &ExperimentConfig) -> Result<u8, Failure> {
    let mut out = Writer::new(cfg, "conjugacy")?;
    let run = match run_conjugacy(cfg, None, None) {
        Ok(r) => r,
        Err(e) => return fail(out, "conjugacy.json", e),
    };
    let report = ConjugacyReport {
        delta_choice: run.choice.as_ref(),
        conditions: run.conditions(cfg.solver.c1_tol),
        solve: run.solution.as_ref().ok().map(|s| &s.report),
        error: run.solution.as_ref().err().map(|e| e.message.as_str()),
    };
    out.report("conjugacy.json", run.code, &report)?;
    if let Ok(sol) = &run.solution {
        out.text("w.csv", &sol.w.to_csv(&run.sample))?;
        out.text("phi.csv", &sol.phi.to_csv(&run.sample))?;
        let mut rows = vec![vec!["iteration".to_string(), "residual".to_string()]];
        rows.extend(sol.report.residuals.iter().enumerate().map(|(i, r)| vec![(i + 1).to_string(), num(*r)]));
        out.csv("residuals.csv", &rows)?;
    }
    out.finish()?;
    match run.solution {
        Err(e) => Err(e),
        Ok(_) => Ok(run.code),
    }
}

const SWEEP_HEADER: [&str; 18] = [
    "run",
    "command",
    "delta",
    "epsilon",
    "exit_code",
    "status",
    "expansion_constant",
    "contraction_rate",
    "items_passed",
    "converged",
    "iterations",
    "contraction_factor",
    "c1_defect",
    "c2_value",
    "c3_value",
    "lambda",
    "terms",
    "error",
];

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn sweep_row(cfg: &ExperimentConfig, command: &str, delta: Option<f64>, epsilon: Option<f64>) -> Vec<String> {
    let mut row = vec![String::new(); SWEEP_HEADER.len()];
    row[1] = command.to_string();
    row[2] = opt(delta);
    row[3] = opt(epsilon);
    let fill_err = |row: &mut Vec<String>, e: &Failure| {
        row[4] = e.code.to_string();
        row[5] = "error".into();
        row[17] = e.message.clone();
    };
    if command == "bundles" {
        match bundles_delta(cfg, delta).and_then(|d| Pipeline::new(cfg)?.principal(d)) {
            Err(e) => fill_err(&mut row, &e),
            Ok((_, rep)) => {
                let code = if rep.passed() { exit::OK } else { exit::CHECK };
                row[4] = code.to_string();
                row[5] = if code == 0 { "pass" } else { "fail" }.into();
                row[6] = num(rep.expansion_constant());
                row[7] = num(rep.contraction_rate());
                row[8] = rep.items.iter().filter(|b| **b).count().to_string();
            }
        }
        return row;
    }
    match run_conjugacy(cfg, delta, epsilon) {
        Err(e) => fill_err(&mut row, &e),
        Ok(run) => match &run.solution {
            Err(e) => fill_err(&mut row, e),
            Ok(sol) => {
                let r = &sol.report;
                row[2] = num(r.delta);
                row[4] = run.code.to_string();
                row[5] = if run.code == 0 { "pass" } else { "fail" }.into();
                row[9] = r.converged.to_string();
                row[10] = r.iterations.to_string();
                row[11] = num(r.contraction_factor);
                row[12] = num(r.c1_defect);
                row[13] = num(r.c2_value);
                row[14] = num(r.c3_value);
                row[15] = num(r.truncation.lambda);
                row[16] = r.truncation.terms.to_string();
            }
        },
    }
    row
}

/// Runs the grid in parallel (at most `jobs` at once); exit 0 if any run succeeds.
pub fn sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<u8, Failure> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::config("sweep needs a [sweep] table"))?;
    let deltas: Vec<Option<f64>> = sw.delta.iter().copied().map(Some).collect();
    let epsilons: Vec<Option<f64>> = sw.epsilon.iter().copied().map(Some).collect();
    if deltas.is_empty() && epsilons.is_empty() {
        return Err(Failure::config("empty parameter grid"));
    }
    if sw.command == "bundles" && deltas.is_empty() {
        return Err(Failure::config("a bundles sweep needs a delta grid"));
    }
    let deltas = if deltas.is_empty() { vec![None] } else { deltas };
    let epsilons = if epsilons.is_empty() || sw.command == "bundles" { vec![None] } else { epsilons };
    let grid: Vec<(Option<f64>, Option<f64>)> =
        deltas.iter().flat_map(|d| epsilons.iter().map(move |e| (*d, *e))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    let rows: Vec<Vec<String>> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, &(d, e))| {
                let mut row = sweep_row(cfg, &sw.command, d, e);
                row[0] = i.to_string();
                row
            })
            .collect()
    });
    let ok = rows.iter().filter(|r| r[4] == "0").count();
    let mut out = Writer::new(cfg, "sweep")?;
    let mut table = vec![SWEEP_HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    table.extend(rows);
    out.csv("sweep.csv", &table)?;
    out.finish()?;
    Ok(if ok > 0 { exit::OK } else { exit::CHECK })
}

pub fn zoo_list() -> String {
    ZOO_NAMES.iter().map(|(n, d)| format!("{n}\t{d}\n")).collect()
}
