//! Run configuration: a flat `key = value` text format.
//!
//! Fixed keys (`command`, `kernel`, `h`, `half_width`, `norm`, `near_field`,
//! `outer_radius`, `tail_compensation`, `seed`, `out`) map to fields; every
//! other key is a command parameter. `#` starts a comment, so values cannot
//! contain it. [`RunConfig::to_text`] writes a canonical form that parses
//! back to the same value.

use kperim_core::functional::NearFieldRule;
use kperim_core::QuadratureScheme;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

pub const COMMANDS: &[&str] = &[
    "certify",
    "integral",
    "seminorm",
    "perimeter",
    "energy",
    "curvature",
    "closedform",
    "extend",
    "ballcurve",
    "optimize",
    "counterexample",
    "poincare",
    "sobolev-check",
    "rel-iso",
    "probe",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: usize, column: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, column, message: message.into() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: String,
    /// Path of the kernel spec file.
    pub kernel: Option<PathBuf>,
    pub h: Option<f64>,
    pub half_width: Option<f64>,
    pub norm: Option<String>,
    pub near_field: NearFieldRule,
    pub outer_radius: Option<f64>,
    pub tail_compensation: bool,
    pub seed: u64,
    pub out: PathBuf,
    /// Command-specific parameters.
    pub params: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            kernel: None,
            h: None,
            half_width: None,
            norm: None,
            near_field: NearFieldRule::AnalyticCorrection,
            outer_radius: None,
            tail_compensation: true,
            seed: 0,
            out: PathBuf::from("out"),
            params: BTreeMap::new(),
        }
    }
}

fn near_field_label(r: NearFieldRule) -> &'static str {
    match r {
        NearFieldRule::AnalyticCorrection => "analytic_correction",
        NearFieldRule::ExcludeDiagonalCell => "exclude_diagonal_cell",
    }
}

/// Shortest float text that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let key_col = content.len() - content.trim_start().len() + 1;
            let Some(eq) = content.find('=') else {
                return err(line, key_col, "expected `key = value`");
            };
            let key = content[..eq].trim();
            let after = &content[eq + 1..];
            let value = after.trim();
            let value_col = eq + 2 + (after.len() - after.trim_start().len());
            if key.is_empty() {
                return err(line, key_col, "missing key before `=`");
            }
            if value.is_empty() {
                return err(line, value_col, format!("missing value for `{key}`"));
            }
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return err(line, key_col, format!("duplicate key `{key}` (first set on line {prev})"));
            }
            cfg.set(key, value).map_err(|m| ConfigError { line, column: value_col, message: m })?;
        }
        Ok(cfg)
    }

    /// Sets one key; the error is a message without position.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let num = |v: &str| -> Result<f64, String> {
            v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("`{key}` expects a finite number, got `{v}`"))
        };
        match key {
            "command" => {
                if !COMMANDS.contains(&value) {
                    return Err(format!("unknown command `{value}` (expected one of {})", COMMANDS.join(", ")));
                }
                self.command = value.to_string();
            }
            "kernel" => self.kernel = Some(PathBuf::from(value)),
            "h" => self.h = Some(num(value)?),
            "half_width" => self.half_width = Some(num(value)?),
            "norm" => self.norm = Some(value.to_string()),
            "near_field" => {
                self.near_field = match value {
                    "analytic_correction" => NearFieldRule::AnalyticCorrection,
                    "exclude_diagonal_cell" => NearFieldRule::ExcludeDiagonalCell,
                    _ => return Err("`near_field` expects analytic_correction or exclude_diagonal_cell".into()),
                }
            }
            "outer_radius" => self.outer_radius = Some(num(value)?),
            "tail_compensation" => {
                self.tail_compensation = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err("`tail_compensation` expects true or false".into()),
                }
            }
            "seed" => self.seed = value.parse().map_err(|_| format!("`seed` expects an unsigned integer, got `{value}`"))?,
            "out" => self.out = PathBuf::from(value),
            _ => {
                if !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(format!("invalid key `{key}`"));
                }
                self.params.insert(key.to_string(), value.to_string());
            }
        }
        Ok(())
    }

    /// Canonical text: fixed keys in a fixed order, then parameters sorted.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        if !self.command.is_empty() {
            put("command", self.command.clone());
        }
        if let Some(k) = &self.kernel {
            put("kernel", k.display().to_string());
        }
        if let Some(h) = self.h {
            put("h", fmt_f64(h));
        }
        if let Some(w) = self.half_width {
            put("half_width", fmt_f64(w));
        }
        if let Some(n) = &self.norm {
            put("norm", n.clone());
        }
        put("near_field", near_field_label(self.near_field).into());
        if let Some(r) = self.outer_radius {
            put("outer_radius", fmt_f64(r));
        }
        put("tail_compensation", self.tail_compensation.to_string());
        put("seed", self.seed.to_string());
        put("out", self.out.display().to_string());
        for (k, v) in &self.params {
            put(k, v.clone());
        }
        s
    }

    pub fn scheme(&self) -> QuadratureScheme {
        QuadratureScheme { near_field: self.near_field, outer_radius: self.outer_radius, tail_compensation: self.tail_compensation }
    }
}

/// SHA-256 over the canonical config text and the canonical kernel spec,
/// hex encoded. The output directory does not enter the hash.
pub fn config_hash(cfg: &RunConfig, kernel_text: &str) -> String {
    let mut c = cfg.clone();
    c.out = PathBuf::new();
    let mut h = Sha256::new();
    h.update(c.to_text().as_bytes());
    h.update(b"\n--kernel--\n");
    h.update(kernel_text.as_bytes());
    hex::encode(h.finalize())
}
