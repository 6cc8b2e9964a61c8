//! Reproducible front end for the Dunkl entropy machinery: one TOML config
//! in, one JSON result (plus an optional CSV trace) out.

pub mod commands;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;

pub use commands::{Check, Outcome};
pub use config::{Command, ConfigError, Exponent, RunConfig, Tolerances};

pub const SCHEMA_VERSION: u32 = 1;

/// Exit statuses of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    InvalidConfig = 1,
    AssertionFailed = 2,
    Infeasible = 3,
}

impl Status {
    fn label(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::InvalidConfig => "invalid_config",
            Self::AssertionFailed => "assertion_failed",
            Self::Infeasible => "infeasible",
        }
    }

    fn from_code(code: u8) -> Self {
        match code {
            0 => Self::Ok,
            2 => Self::AssertionFailed,
            3 => Self::Infeasible,
            _ => Self::InvalidConfig,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub csv: bool,
}

/// Files and messages produced by [`run`].
#[derive(Debug, Clone)]
pub struct Report {
    pub status: Status,
    /// Serialized result; empty when the config was rejected.
    pub json: String,
    pub csv: Option<String>,
    pub message: Option<String>,
    pub written: Vec<PathBuf>,
}

fn render(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Runs one subcommand. Results depend only on the config and seed; wall-clock
/// data goes to `<command>.meta.json`.
pub fn run(inv: &Invocation) -> Report {
    let started = Instant::now();
    let rejected = |message: String| Report { status: Status::InvalidConfig, json: String::new(), csv: None, message: Some(message), written: vec![] };
    let raw = match RunConfig::load(&inv.config) {
        Ok(c) => c,
        Err(e) => return rejected(e.to_string()),
    };
    let base = inv.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolved = match raw.resolve(inv.command, &base, inv.seed) {
        Ok(r) => r,
        Err(e) => return rejected(e.to_string()),
    };
    let out_dir = inv.out.clone().or_else(|| raw.out.as_ref().map(|o| base.join(o)));
    if inv.csv && out_dir.is_none() {
        return rejected("invalid configuration: --csv needs an output directory (--out or `out` in the config)".into());
    }
    let name = inv.command.name();
    let header = json!({
        "schema_version": SCHEMA_VERSION,
        "command": name,
        "seed": resolved.seed,
        "config": raw,
    });
    let (status, body, csv, message) = match commands::execute(&resolved) {
        Ok(outcome) => {
            let status = if outcome.passed() { Status::Ok } else { Status::AssertionFailed };
            let failed: Vec<&str> = outcome.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            let message = (!failed.is_empty()).then(|| format!("assertion failed: {}", failed.join(", ")));
            let body = json!({ "status": status.label(), "checks": outcome.checks, "result": outcome.result });
            (status, body, Some(outcome.csv), message)
        }
        Err(e) => {
            let status = Status::from_code(commands::error_status(&e));
            (status, json!({ "status": status.label(), "error": e.to_string() }), None, Some(e.to_string()))
        }
    };
    let mut doc = header;
    for (k, v) in body.as_object().expect("object").iter() {
        doc[k] = v.clone();
    }
    let json_text = render(&doc);
    let mut report = Report { status, json: json_text, csv: if inv.csv { csv } else { None }, message, written: vec![] };
    if let Some(dir) = out_dir {
        let mut write = || -> Result<(), String> {
            fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
            let json_path = dir.join(format!("{name}.json"));
            write_file(&json_path, &report.json)?;
            report.written.push(json_path);
            if let Some(csv) = &report.csv {
                let csv_path = dir.join(format!("{name}.csv"));
                write_file(&csv_path, csv)?;
                report.written.push(csv_path);
            }
            let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
            let meta = json!({
                "finished_unix_ms": now as u64,
                "elapsed_ms": started.elapsed().as_millis() as u64,
                "version": env!("CARGO_PKG_VERSION"),
                "config_path": inv.config.display().to_string(),
            });
            let meta_path = dir.join(format!("{name}.meta.json"));
            write_file(&meta_path, &render(&meta))?;
            report.written.push(meta_path);
            Ok(())
        };
        if let Err(e) = write() {
            report.status = Status::InvalidConfig;
            report.message = Some(e);
        }
    }
    report
}
