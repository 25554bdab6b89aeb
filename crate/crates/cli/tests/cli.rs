use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn invlim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invlim")).args(args).output().expect("binary runs")
}

struct Case {
    _dir: TempDir,
    config: PathBuf,
    out: PathBuf,
}

fn case(body: &str) -> Case {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = dir.path().join("run.toml");
    std::fs::write(&config, format!("output_dir = {:?}\n{body}", out.to_str().unwrap())).unwrap();
    Case { _dir: dir, config, out }
}

fn run(cmd: &str, c: &Case) -> (i32, String) {
    let o = invlim(&[cmd, c.config.to_str().unwrap()]);
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn zoo_list_names_every_system() {
    let o = invlim(&["zoo-list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["doubling", "quadratic:c=0", "delay:m=1,n=2,c=0", "product_squares", "torus:2,1,1,1"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn hyperbolic_doubling_has_expansion_one_half() {
    let c = case("system = \"doubling\"\n");
    assert_eq!(run("hyperbolic", &c).0, 0);
    let r = json(&c.out.join("hyperbolic.json"));
    assert_eq!(r["exit_code"], 0);
    assert!((r["report"]["axiom_a"]["expansion"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(c.out.join("splitting.csv").exists());
    let meta = json(&c.out.join("metadata.json"));
    assert_eq!(meta["config_hash"], r["config_hash"]);
    assert_eq!(meta["schema_version"], r["schema_version"]);
}

#[test]
fn hyperbolic_quadratic_finds_both_fixed_points() {
    let c = case("system = \"quadratic:c=0\"\n");
    assert_eq!(run("hyperbolic", &c).0, 0);
    let r = json(&c.out.join("hyperbolic.json"));
    let pieces = r["report"]["pieces"]["pieces"].as_array().unwrap();
    let pts: Vec<f64> = pieces.iter().map(|p| p["points"][0][0].as_f64().unwrap()).collect();
    assert_eq!(pts, vec![0.0, 1.0]);
}

#[test]
fn malformed_configs_exit_one_with_a_location() {
    let c = case("system = \"doubling\"\n[solver]\neta = \"large\"\n");
    let (code, err) = run("hyperbolic", &c);
    assert_eq!(code, 1);
    assert!(err.contains("line 4") && err.contains("eta"), "{err}");
    let c = case("system = \"doubling\"\n[solver]\nmax_iters = 0\n");
    let (code, err) = run("conjugacy", &c);
    assert_eq!(code, 1);
    assert!(err.contains("line 4") && err.contains("max_iters"), "{err}");
    assert!(!c.out.exists(), "nothing runs before validation");
}

#[test]
fn bundles_pass_on_doubling_and_product_squares() {
    let c = case("system = \"doubling\"\n[solver]\ndelta = 0.01\n");
    assert_eq!(run("bundles", &c).0, 0);
    let r = json(&c.out.join("bundles.json"));
    assert!(r["report"]["items"].as_array().unwrap().iter().all(|b| b == true));

    let c = case("system = \"product_squares\"\n[solver]\ndelta = 0.01\n");
    assert_eq!(run("bundles", &c).0, 0);
    let r = json(&c.out.join("bundles.json"));
    assert_eq!(r["report"]["pieces"].as_array().unwrap().len(), 4);
    assert!(c.out.join("stable_3.csv").exists() && c.out.join("partition.csv").exists());
}

#[test]
fn bundles_reject_delta_zero() {
    let c = case("system = \"doubling\"\n[solver]\ndelta = 0.0\n");
    let (code, err) = run("bundles", &c);
    assert_eq!(code, 1);
    assert!(err.contains("inverse undefined at δ=0"), "{err}");
}

#[test]
fn translated_doubling_solves_to_minus_c() {
    let c = case("system = \"doubling\"\n[perturbation]\nkind = \"translation\"\nepsilon = 0.01\n");
    assert_eq!(run("conjugacy", &c).0, 0);
    let rows = csv_rows(&c.out.join("w.csv"));
    assert!(!rows.is_empty());
    for r in &rows {
        let w1: f64 = r[1].parse().unwrap();
        assert!((w1 + 0.01).abs() < 1e-9, "{w1}");
    }
    let r = json(&c.out.join("conjugacy.json"));
    assert_eq!(r["report"]["conditions"]["c3_pass"], true);
    let residuals = csv_rows(&c.out.join("residuals.csv"));
    assert_eq!(residuals.len() as u64, r["report"]["solve"]["iterations"].as_u64().unwrap());
}

#[test]
fn identical_maps_give_an_all_zero_report() {
    let c = case("system = \"doubling\"\n");
    assert_eq!(run("conjugacy", &c).0, 0);
    let s = &json(&c.out.join("conjugacy.json"))["report"]["solve"];
    for key in ["c1_defect", "c2_value", "c3_value"] {
        assert!(s[key].as_f64().unwrap() < 1e-14, "{key} = {}", s[key]);
    }
}

#[test]
fn large_translation_is_reported_as_failure() {
    let c = case("system = \"doubling\"\n[perturbation]\nkind = \"translation\"\nepsilon = 0.4\n");
    let (code, err) = run("conjugacy", &c);
    assert!(code == 3 || code == 4, "exit {code}: {err}");
    let r = json(&c.out.join("conjugacy.json"));
    assert_eq!(r["exit_code"], code);
    assert!(r["report"]["error"].is_string() || r["report"]["conditions"].is_object());
}

#[test]
fn identical_runs_give_identical_reports() {
    let c = case("system = \"quadratic:c=0\"\nseed = 3\n[perturbation]\nkind = \"translation\"\nepsilon = 0.001\n[solver]\ndelta = 0.1\n");
    assert_eq!(run("conjugacy", &c).0, 0);
    let first = std::fs::read(c.out.join("conjugacy.json")).unwrap();
    let w = std::fs::read(c.out.join("w.csv")).unwrap();
    assert_eq!(run("conjugacy", &c).0, 0);
    assert_eq!(first, std::fs::read(c.out.join("conjugacy.json")).unwrap());
    assert_eq!(w, std::fs::read(c.out.join("w.csv")).unwrap());
}

#[test]
fn delta_sweep_keeps_k_within_ten_percent() {
    let c = case("system = \"doubling\"\n[sweep]\ncommand = \"bundles\"\ndelta = [0.1, 0.01, 0.001]\n");
    let o = invlim(&["sweep", c.config.to_str().unwrap(), "--jobs", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&c.out.join("sweep.csv"));
    assert_eq!(rows.len(), 3);
    let k: Vec<f64> = rows.iter().map(|r| r[6].parse().unwrap()).collect();
    let (lo, hi) = (k.iter().cloned().fold(f64::INFINITY, f64::min), k.iter().cloned().fold(0.0, f64::max));
    assert!((hi - lo) / lo < 0.1, "{k:?}");
}

#[test]
fn epsilon_sweep_grows_the_solution_with_epsilon() {
    let c = case(
        "system = \"quadratic:c=0\"\n[perturbation]\nkind = \"translation\"\nepsilon = 0.001\n[solver]\ndelta = 0.1\n\
         [sweep]\ncommand = \"conjugacy\"\nepsilon = [0.00025, 0.0005, 0.001]\n",
    );
    let o = invlim(&["sweep", c.config.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&c.out.join("sweep.csv"));
    let norms: Vec<f64> = rows.iter().map(|r| r[13].parse().unwrap()).collect();
    assert!(norms.windows(2).all(|p| p[1] > p[0]), "{norms:?}");
    // |w| is linear in ε to first order.
    assert!((norms[2] / norms[1] - 2.0).abs() < 0.05 && (norms[1] / norms[0] - 2.0).abs() < 0.05, "{norms:?}");
}

#[test]
fn empty_sweep_grid_is_a_config_error() {
    let c = case("system = \"doubling\"\n[sweep]\ncommand = \"bundles\"\n");
    let (code, err) = run("sweep", &c);
    assert_eq!(code, 1);
    assert!(err.contains("empty"), "{err}");
}
