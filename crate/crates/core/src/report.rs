//! Report serialization, run manifests and atomic file output.
//!
//! JSON output is canonical: object keys are sorted and every float is
//! written with 17 significant digits, so equal reports produce equal bytes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid report: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("payload could not be serialized: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("{0} reports have no tabular form")]
    NoTable(ReportKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    Spectrum,
    Mac,
    Comparison,
    Analogy,
    Cluster,
    DebiasProvenance,
    Inspect,
}

impl std::fmt::Display for ReportKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ReportKind::Spectrum => "spectrum",
            ReportKind::Mac => "mac",
            ReportKind::Comparison => "comparison",
            ReportKind::Analogy => "analogy",
            ReportKind::Cluster => "cluster",
            ReportKind::DebiasProvenance => "debias-provenance",
            ReportKind::Inspect => "inspect",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Tsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: ReportKind,
    pub payload: Value,
    /// Identifier of the producing [`RunManifest`].
    pub manifest: String,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(
        kind: ReportKind,
        payload: &impl Serialize,
        manifest: &RunManifest,
        warnings: Vec<String>,
    ) -> Result<Self, ReportError> {
        Ok(Report {
            kind,
            payload: serde_json::to_value(payload)?,
            manifest: manifest.id(),
            warnings,
        })
    }

    pub fn to_json(&self) -> String {
        to_canonical_json(&serde_json::to_value(self).expect("report is always serializable"))
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Tab-separated table of the payload's main rows.
    pub fn to_tsv(&self) -> Result<String, ReportError> {
        let p = &self.payload;
        let table = match self.kind {
            ReportKind::Mac => tabulate(&p["cells"], &["target", "attributes", "s"]),
            ReportKind::Analogy => tabulate(p, &["x", "y", "score"]),
            ReportKind::Cluster => {
                let report: crate::diagnostics::ClusterBiasReport = serde_json::from_value(p.clone())?;
                return Ok(report.to_tsv());
            }
            ReportKind::Spectrum => tabulate(&p["components"], &["component", "eigenvalue", "explained_variance_ratio"]),
            ReportKind::Comparison => tabulate(&Value::Array(vec![p.clone()]), &["t", "p_two_sided", "df", "n"]),
            ReportKind::Inspect => tabulate(&p["neighbors"], &["query", "word", "similarity"]),
            ReportKind::DebiasProvenance => None,
        };
        table.ok_or(ReportError::NoTable(self.kind))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ReportError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.into(),
            source,
        })?;
        Report::from_json(&text).map_err(|source| ReportError::Parse {
            path: path.into(),
            source,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>, format: Format) -> Result<(), ReportError> {
        let text = match format {
            Format::Json => self.to_json(),
            Format::Tsv => self.to_tsv()?,
        };
        write_with_context(path.as_ref(), text.as_bytes())
    }
}

fn write_with_context(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    write_atomic(path, bytes).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn tabulate(rows: &Value, columns: &[&str]) -> Option<String> {
    let rows = rows.as_array()?;
    let mut out = columns.join("\t");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = columns.iter().map(|c| tsv_cell(&row[*c])).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    Some(out)
}

fn tsv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) if n.is_f64() => format_float(n.as_f64().unwrap()),
        other => other.to_string(),
    }
}

/// 17 significant digits in scientific notation; enough to round-trip any f64.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "Infinity".into()
    } else {
        "-Infinity".into()
    }
}

/// Pretty-printed JSON with sorted keys and fixed float formatting.
pub fn to_canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0, true);
    out.push('\n');
    out
}

fn to_compact_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0, false);
    out
}

fn write_value(out: &mut String, value: &Value, depth: usize, pretty: bool) {
    let newline = |out: &mut String, depth: usize| {
        if pretty {
            out.push('\n');
            out.push_str(&"  ".repeat(depth));
        }
    };
    match value {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&value.to_string()),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => out.push_str(&format_float(x)),
            _ => write!(out, "{n}").unwrap(),
        },
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                write_value(out, item, depth + 1, pretty);
            }
            newline(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, depth + 1);
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                if pretty {
                    out.push(' ');
                }
                write_value(out, &map[key], depth + 1, pretty);
            }
            newline(out, depth);
            out.push('}');
        }
    }
}

/// Hex SHA-256 of the canonical compact encoding of `value`.
pub fn hash_json(value: &Value) -> String {
    sha256_hex(to_compact_json(value).as_bytes())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Everything that determines the bytes of a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<InputFile>,
    pub parameters: Value,
    /// Files written by the run. Not part of [`RunManifest::id`].
    #[serde(default)]
    pub outputs: Vec<String>,
    pub version: String,
    /// RFC 3339, UTC. Taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, parameters: Value) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            inputs: Vec::new(),
            parameters,
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: current_timestamp(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> std::io::Result<()> {
        self.inputs.push(InputFile {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Hash of the subcommand, parameters, version and input contents.
    ///
    /// Paths and the timestamp are left out, so the same computation on the
    /// same bytes gets the same id wherever the files live.
    pub fn id(&self) -> String {
        let inputs: Vec<Value> = self
            .inputs
            .iter()
            .map(|f| serde_json::json!({"role": f.role, "sha256": f.sha256}))
            .collect();
        hash_json(&serde_json::json!({
            "subcommand": self.subcommand,
            "inputs": inputs,
            "parameters": self.parameters,
            "version": self.version,
        }))
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("manifest is always serializable");
        v.as_object_mut().unwrap().insert("id".into(), Value::String(self.id()));
        to_canonical_json(&v)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut v: Value = serde_json::from_str(text)?;
        if let Some(map) = v.as_object_mut() {
            map.remove("id");
        }
        serde_json::from_value(v)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ReportError> {
        write_with_context(path.as_ref(), self.to_json().as_bytes())
    }
}

fn current_timestamp() -> String {
    let epoch = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    epoch
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// `out.json` -> `out.json.<suffix>`.
pub fn sidecar_path(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
