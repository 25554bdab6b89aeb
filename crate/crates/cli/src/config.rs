use std::path::{Path, PathBuf};

use invlim::zoo::{self, PerturbationFamily};
use invlim::Endomorphism;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exit::Failure;

/// Version of the report layout written by every command.
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Zoo name, e.g. `doubling` or `quadratic:c=0`.
    pub system: String,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    /// `translation` or `fourier`.
    pub kind: String,
    pub epsilon: f64,
    /// Translation direction; defaults to the first coordinate axis.
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    /// Fourier mode for `fourier`.
    #[serde(default)]
    pub mode: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Fixed `δ`; when absent the conjugacy command runs the δ pre-pass.
    pub delta: Option<f64>,
    pub eta: f64,
    /// Window lengths `K_b`, `K_f`; command default when absent.
    pub k_back: Option<usize>,
    pub k_fwd: Option<usize>,
    /// Lattice side on tori, grid points per axis on boxes; system default when absent.
    pub sample_density: Option<usize>,
    pub truncation_tol: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    pub c1_tol: f64,
    pub partition_samples: usize,
    pub coverage_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: None,
            eta: 0.1,
            k_back: None,
            k_fwd: None,
            sample_density: None,
            truncation_tol: 1e-10,
            max_iters: 200,
            tolerance: 1e-10,
            c1_tol: 1e-8,
            partition_samples: 400,
            coverage_samples: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `bundles` or `conjugacy`.
    pub command: String,
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub epsilon: Vec<f64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// 1-based line of the first `key =` assignment, for diagnostics.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn invalid(text: &str, key: &str, msg: impl std::fmt::Display) -> Failure {
    match line_of(text, key) {
        Some(l) => Failure::config(format!("line {l}, field `{key}`: {msg}")),
        None => Failure::config(format!("field `{key}`: {msg}")),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates; no computation happens before this succeeds.
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let cfg: Self = toml::from_str(text).map_err(|e| Failure::config(e.to_string().trim_end().to_string()))?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    fn validate(&self, text: &str) -> Result<(), Failure> {
        zoo::by_name(&self.system).map_err(|e| invalid(text, "system", e))?;
        let s = &self.solver;
        let positive = [
            ("eta", s.eta),
            ("truncation_tol", s.truncation_tol),
            ("tolerance", s.tolerance),
            ("c1_tol", s.c1_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(text, key, format!("must be positive, got {v}")));
            }
        }
        if let Some(d) = s.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid(text, "delta", format!("inverse undefined at δ={d}; δ must be positive")));
            }
        }
        for (key, v) in [
            ("k_back", s.k_back.unwrap_or(1)),
            ("k_fwd", s.k_fwd.unwrap_or(1)),
            ("max_iters", s.max_iters),
            ("partition_samples", s.partition_samples),
        ] {
            if v == 0 {
                return Err(invalid(text, key, "must be at least 1"));
            }
        }
        if s.sample_density == Some(0) {
            return Err(invalid(text, "sample_density", "must be at least 1"));
        }
        if let Some(p) = &self.perturbation {
            if !p.epsilon.is_finite() {
                return Err(invalid(text, "epsilon", "must be finite"));
            }
            if p.kind != "translation" && p.kind != "fourier" {
                return Err(invalid(text, "kind", format!("unknown perturbation `{}` (translation | fourier)", p.kind)));
            }
            self.perturbation_family().map_err(|e| invalid(text, "kind", e.message))?;
        }
        if let Some(sw) = &self.sweep {
            if sw.command != "bundles" && sw.command != "conjugacy" {
                return Err(invalid(text, "command", format!("sweeps run `bundles` or `conjugacy`, not `{}`", sw.command)));
            }
            if let Some(d) = sw.delta.iter().find(|d| !(**d > 0.0)) {
                return Err(invalid(text, "delta", format!("inverse undefined at δ={d}; δ must be positive")));
            }
        }
        Ok(())
    }

    pub fn endomorphism(&self) -> Result<Endomorphism, Failure> {
        zoo::by_name(&self.system).map_err(|e| Failure::config(format!("system: {e}")))
    }

    pub fn perturbation_family(&self) -> Result<Option<PerturbationFamily>, Failure> {
        let Some(p) = &self.perturbation else { return Ok(None) };
        let f = self.endomorphism()?;
        let fam = match p.kind.as_str() {
            "translation" => {
                let dim = f.space().ambient_dim();
                let dir = p.direction.clone().unwrap_or_else(|| {
                    let mut d = vec![0.0; dim];
                    d[0] = 1.0;
                    d
                });
                if dir.len() != dim {
                    return Err(Failure::config(format!("direction has {} entries, the system has {dim}", dir.len())));
                }
                zoo::perturb_translation(&f, &dir)
            }
            _ => zoo::perturb_fourier(&f, p.mode.unwrap_or(1)),
        };
        Ok(Some(fam))
    }

    /// `g = f + ε·(perturbation)`, or `f` itself without a perturbation.
    pub fn perturbed(&self, epsilon: Option<f64>) -> Result<Endomorphism, Failure> {
        match self.perturbation_family()? {
            None => self.endomorphism(),
            Some(fam) => {
                let eps = epsilon.unwrap_or(self.perturbation.as_ref().unwrap().epsilon);
                fam.at(eps).map_err(|e| Failure::config(format!("perturbation: {e}")))
            }
        }
    }

    pub fn density(&self, f: &Endomorphism) -> usize {
        self.solver.sample_density.unwrap_or_else(|| {
            let space = f.space();
            match (space.dim(), space.is_periodic()) {
                (1, true) => 63,
                (1, false) => 30,
                (2, _) => 16,
                _ => 6,
            }
        })
    }

    pub fn window_lengths(&self, default: usize) -> (usize, usize) {
        (self.solver.k_back.unwrap_or(default), self.solver.k_fwd.unwrap_or(default))
    }

    /// SHA-256 of the canonical JSON form, defaults included.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_the_solver_block() {
        let c = ExperimentConfig::parse("system = \"doubling\"\n").unwrap();
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.output_dir, PathBuf::from("out"));
        assert!(c.perturbation.is_none());
    }

    #[test]
    fn diagnostics_name_the_line_and_field() {
        let e = ExperimentConfig::parse("system = \"doubling\"\n[solver]\neta = -1.0\n").unwrap_err();
        assert_eq!(e.code, 1);
        assert!(e.message.contains("line 3") && e.message.contains("eta"), "{}", e.message);
        let e = ExperimentConfig::parse("system = \"doubling\"\n[solver]\ndelta = 0.0\n").unwrap_err();
        assert!(e.message.contains("inverse undefined at δ=0"), "{}", e.message);
        let e = ExperimentConfig::parse("system = \"nope\"\n").unwrap_err();
        assert!(e.message.contains("line 1"), "{}", e.message);
        let e = ExperimentConfig::parse("system = \"doubling\"\nbogus = 1\n").unwrap_err();
        assert!(e.message.contains("bogus"), "{}", e.message);
    }

    #[test]
    fn hash_changes_with_any_field() {
        let a = ExperimentConfig::parse("system = \"doubling\"\n").unwrap();
        let b = ExperimentConfig::parse("system = \"doubling\"\nseed = 1\n").unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
