use nalgebra::dvector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::bundles::{solve_family, BundleParams};
use crate::hyperbolic::BasicPieceSet;
use crate::sample::OrbitSample;
use crate::smoothing::{partition_of_unity, PartitionOfUnity};
use crate::zoo::{self, Endomorphism};

struct Setup {
    f: Endomorphism,
    sample: OrbitSample,
    set: BasicPieceSet,
    pu: PartitionOfUnity,
}

fn setup(f: Endomorphism, density: usize, k: usize) -> Setup {
    let sample = OrbitSample::for_system(&f, density, k, k).unwrap();
    let set = BasicPieceSet::analyze(&f).unwrap();
    let pu = partition_of_unity(&sample, set.covers().unwrap(), 400, 11).unwrap();
    Setup { f, sample, set, pu }
}

impl Setup {
    fn j(&self, delta: f64, tol: f64) -> RightInverse {
        let fam = solve_family(&self.f, &self.sample, &self.set, &self.pu, delta, &BundleParams::default()).unwrap();
        RightInverse::new(&self.f, &self.sample, &fam, &self.pu, tol).unwrap()
    }
}

#[test]
fn doubling_j_of_a_constant_is_the_geometric_sum() {
    let s = setup(zoo::doubling(), 63, 6);
    let j = s.j(0.0, 1e-10);
    assert!(j.truncation.lambda <= 0.5 + 1e-12, "{:?}", j.truncation);
    let c = 0.37;
    let v = Section::constant(s.sample.len(), dvector![c, 0.0]);
    let out = right_inverse_j(&v, &j);
    // Σ_{n≥1} 2^{-n} c = c.
    assert!(out.value.values.iter().all(|u| (u[0] - c).abs() < 1e-10 && u[1].abs() < 1e-12));
    assert!(verify_right_inverse(&out.value, &v, &j) <= 1e-10);
    let zero = Section::zeros(s.sample.len(), 2);
    assert_eq!(right_inverse_j(&zero, &j).value.c0_norm(), 0.0);
}

#[test]
fn right_inverse_identity_on_random_sections() {
    let tol = 1e-10;
    for (f, density, delta) in [(zoo::doubling(), 63, 0.1), (zoo::quadratic(0.0).unwrap(), 30, 0.01)] {
        let s = setup(f, density, 6);
        let j = s.j(delta, tol);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let v = random_section(&s.sample, 2, &mut rng, false);
            let out = right_inverse_j(&v, &j);
            let defect = verify_right_inverse(&out.value, &v, &j);
            assert!(defect <= tol * v.c0_norm() + 1e-10, "{}: {defect}", s.f.name());
            assert!(out.value.c0_norm() <= j.truncation.norm_bound * v.c0_norm());
        }
    }
}

#[test]
fn j_is_linear() {
    let s = setup(zoo::doubling(), 63, 6);
    let j = s.j(0.05, 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u = random_section(&s.sample, 2, &mut rng, false);
    let v = random_section(&s.sample, 2, &mut rng, false);
    let lhs = j.apply(&u.combine(0.7, &v, -1.3));
    let rhs = j.apply(&u).combine(0.7, &j.apply(&v), -1.3);
    assert!(lhs.distance(&rhs) < 1e-12);
}

#[test]
fn identical_maps_give_the_zero_section() {
    let s = setup(zoo::doubling(), 63, 6);
    let j = s.j(0.1, 1e-10);
    let sol = solve_conjugacy(&s.f, &j, &SolveParams::default()).unwrap();
    assert!(sol.report.converged);
    assert!(sol.w.c0_norm() < 1e-14);
    assert!(sol.report.c1_defect < 1e-14);
}

#[test]
fn translated_doubling_is_conjugated_by_a_translation() {
    let c = 0.01;
    let s = setup(zoo::doubling(), 63, 6);
    let g = zoo::perturb_translation(&s.f, &[1.0]).at(c).unwrap();
    let j = s.j(0.1, 1e-12);
    let sol = solve_conjugacy(&g, &j, &SolveParams::default()).unwrap();
    let r = &sol.report;
    assert!(r.converged && r.contraction_factor < 1.0, "{r:?}");
    assert!(sol.w.values.iter().all(|v| (v[0] + c).abs() < 1e-9 && v[1].abs() < 1e-9));
    assert!(r.c1_defect < 1e-9);
    assert!(r.c2_pass && r.c3_pass && r.c3_value < 1e-8);
    for (n, h) in sol.h0.iter().enumerate() {
        let want = (s.sample.point(n)[0] - c).rem_euclid(1.0);
        assert!(s.sample.space().dist(h, &dvector![want]) < 1e-9);
    }
    assert!(r.surjectivity_coverage.unwrap() > 0.5, "{:?}", r.surjectivity_coverage);
}

#[test]
fn quadratic_perturbation_moves_the_fixed_points() {
    let eps = 1e-3;
    let s = setup(zoo::quadratic(0.0).unwrap(), 30, 6);
    let g = zoo::perturb_translation(&s.f, &[1.0]).at(eps).unwrap();
    let j = s.j(0.01, 1e-10);
    let sol = solve_conjugacy(&g, &j, &SolveParams::default()).unwrap();
    let r = &sol.report;
    assert!(r.converged && r.contraction_factor < 0.9, "{r:?}");
    assert!(r.c1_defect <= 1e-8, "{}", r.c1_defect);
    // Newton on x^2 + eps = x from each unperturbed fixed point.
    let newton = |mut x: f64| {
        for _ in 0..50 {
            x -= (x * x + eps - x) / (2.0 * x - 1.0);
        }
        x
    };
    for p in [0.0, 1.0] {
        let n = (0..s.sample.len())
            .find(|&n| (s.sample.point(n)[0] - p).abs() < 1e-12)
            .expect("fixed point is a sample node");
        let want = newton(p) - p;
        assert!((sol.w.values[n][0] - want).abs() < 1e-6, "at {p}: {} vs {want}", sol.w.values[n][0]);
    }
}

#[test]
fn jump_section_fails_the_injectivity_check() {
    let s = setup(zoo::doubling(), 63, 6);
    let w = Section::from_fn(s.sample.len(), |n| {
        if s.sample.point(n)[0] < 0.5 { dvector![0.0, 0.0] } else { dvector![0.05, 0.0] }
    });
    let rep = robbin_injectivity_check(&w, &s.sample, DEFAULT_ETA);
    assert!(!rep.pass);
    let (a, b, d) = rep.witness.unwrap();
    let ratio = (&w.values[a] - &w.values[b]).norm() / d;
    assert!(ratio > DEFAULT_ETA && (ratio - rep.lambda).abs() < 1e-12);
    let flat = robbin_injectivity_check(&Section::constant(s.sample.len(), dvector![0.2, 0.0]), &s.sample, 0.1);
    assert!(flat.pass && flat.lambda == 0.0);
}

#[test]
fn lemma_constants_on_doubling() {
    let s = setup(zoo::doubling(), 63, 6);
    let j = s.j(0.1, 1e-10);
    let fit = lipschitz_lemma_measurement(&j, 60, false, 3);
    assert!(fit.holds, "{fit:?}");
    let t = &j.truncation;
    assert!(fit.a <= t.d * t.c * t.c / (1.0 - t.lambda) + 1e-9, "{} vs {t:?}", fit.a);
    let consts = lipschitz_lemma_measurement(&j, 6, true, 4);
    assert!(consts.points.iter().all(|p| p.lambda_in < 1e-4));
}

#[test]
fn delta_prepass_picks_the_largest_contracting_delta() {
    let s = setup(zoo::doubling(), 63, 6);
    let g = zoo::perturb_translation(&s.f, &[1.0]).at(0.01).unwrap();
    let choice = choose_delta(&s.f, &g, &s.sample, &s.set, &s.pu, &DELTA_CANDIDATES, 1e-10, &SolveParams::default()).unwrap();
    assert_eq!(choice.delta, 0.1);
}
