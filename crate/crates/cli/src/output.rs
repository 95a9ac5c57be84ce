use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| CliError::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<Table, CliError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Table { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// One run: resolved configuration, results and timing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub artifact: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Convergence and fit warnings.
    pub flags: Vec<String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

impl ResultRecord {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let rec: ResultRecord = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(CliError::Schema(format!("unsupported schema version {}", rec.schema_version)));
        }
        Ok(rec)
    }
}

pub fn artifact_version() -> String {
    format!("kidesign {}", env!("CARGO_PKG_VERSION"))
}

pub fn unix_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644)).map_err(io)?;
    }
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// `results.csv` → `results.csv.json`.
pub fn record_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
