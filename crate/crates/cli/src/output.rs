//! Output plumbing: every report carries the tool version and the resolved
//! configuration, as JSON fields or as `#` comment lines ahead of CSV.

use std::fs;
use std::path::{Path, PathBuf};

use fdtnet::io::fmt_f64;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub struct Sink {
    pub path: Option<PathBuf>,
    pub format: Format,
}

impl Sink {
    pub fn write(&self, text: &str) -> Result<(), CliError> {
        match &self.path {
            Some(p) => fs::write(p, text).map_err(|e| CliError::Core(e.into())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

/// `{"version": …, "config": …, <body fields>}`.
pub fn json_report<C: Serialize, B: Serialize>(config: &C, body: &B) -> Result<String, CliError> {
    let mut out = serde_json::Map::new();
    out.insert("version".into(), Value::String(fdtnet::VERSION.into()));
    out.insert("config".into(), serde_json::to_value(config).map_err(core)?);
    match serde_json::to_value(body).map_err(core)? {
        Value::Object(fields) => out.extend(fields),
        other => {
            out.insert("result".into(), other);
        }
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(out)).map_err(core)?;
    text.push('\n');
    Ok(text)
}

/// Comment header for CSV outputs.
pub fn csv_header<C: Serialize>(config: &C) -> Result<String, CliError> {
    Ok(format!(
        "# fdtnet {}\n# config: {}\n",
        fdtnet::VERSION,
        serde_json::to_string(config).map_err(core)?
    ))
}

pub fn csv_row(cells: &[String]) -> String {
    let mut line = cells.join(",");
    line.push('\n');
    line
}

pub fn num(x: f64) -> String {
    fmt_f64(x)
}

fn core(e: serde_json::Error) -> CliError {
    CliError::Core(e.into())
}

/// Reads a configuration document. Besides a bare config this accepts a
/// previous JSON report (its `config` field) or CSV report (its
/// `# config:` line), so any report can be replayed.
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Core(e.into()))?;
    let value: Value = if text.trim_start().starts_with('#') {
        let line = text
            .lines()
            .find_map(|l| l.strip_prefix("# config: "))
            .ok_or_else(|| CliError::Usage(format!("{}: no '# config:' line", path.display())))?;
        serde_json::from_str(line).map_err(core)?
    } else {
        let v: Value = serde_json::from_str(&text).map_err(core)?;
        match v {
            Value::Object(ref m) if m.contains_key("version") && m.contains_key("config") => {
                m["config"].clone()
            }
            other => other,
        }
    };
    serde_json::from_value(value).map_err(core)
}
