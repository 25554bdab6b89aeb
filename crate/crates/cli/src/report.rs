use std::path::PathBuf;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::exit::Failure;

/// Report envelope. Timestamps live in `metadata.json` so reports stay bit-identical across runs.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: &'static str,
    config_hash: String,
    command: &'a str,
    status: &'a str,
    exit_code: u8,
    config: &'a ExperimentConfig,
    report: &'a T,
}

#[derive(Serialize)]
struct Metadata<'a> {
    schema_version: &'static str,
    config_hash: String,
    command: &'a str,
    tool_version: &'static str,
    started_unix: f64,
    elapsed_seconds: f64,
    files: &'a [String],
}

/// Collects the files of one command under `output_dir`.
pub struct Writer<'a> {
    dir: PathBuf,
    cfg: &'a ExperimentConfig,
    command: &'a str,
    started: SystemTime,
    files: Vec<String>,
}

impl<'a> Writer<'a> {
    pub fn new(cfg: &'a ExperimentConfig, command: &'a str) -> Result<Self, Failure> {
        std::fs::create_dir_all(&cfg.output_dir).map_err(Failure::io)?;
        Ok(Self {
            dir: cfg.output_dir.clone(),
            cfg,
            command,
            started: SystemTime::now(),
            files: Vec::new(),
        })
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        std::fs::write(self.dir.join(name), body).map_err(Failure::io)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn report<T: Serialize>(&mut self, name: &str, exit_code: u8, report: &T) -> Result<(), Failure> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            config_hash: self.cfg.hash(),
            command: self.command,
            status: if exit_code == 0 { "pass" } else { "fail" },
            exit_code,
            config: self.cfg,
            report,
        };
        let body = serde_json::to_string_pretty(&env).map_err(Failure::io)?;
        self.text(name, &(body + "\n"))
    }

    /// Writes rows through the `csv` crate; the first row is the header.
    pub fn csv(&mut self, name: &str, rows: &[Vec<String>]) -> Result<(), Failure> {
        let mut w = csv::Writer::from_path(self.dir.join(name)).map_err(Failure::io)?;
        for r in rows {
            w.write_record(r).map_err(Failure::io)?;
        }
        w.flush().map_err(Failure::io)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn finish(self) -> Result<(), Failure> {
        let since = |t: SystemTime| t.duration_since(UNIX_EPOCH).unwrap_or(Duration::ZERO);
        let meta = Metadata {
            schema_version: SCHEMA_VERSION,
            config_hash: self.cfg.hash(),
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            started_unix: since(self.started).as_secs_f64(),
            elapsed_seconds: self.started.elapsed().unwrap_or(Duration::ZERO).as_secs_f64(),
            files: &self.files,
        };
        let body = serde_json::to_string_pretty(&meta).map_err(Failure::io)?;
        std::fs::write(self.dir.join("metadata.json"), body + "\n").map_err(Failure::io)
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.17e}")
}
