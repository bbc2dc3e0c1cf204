use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stefan_core::state::{BoundaryState, RunRecord, Snapshot};
use stefan_core::{serialize_config, ScenarioConfig};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the output directory.
pub const OUT_ENV: &str = "NLSTEFAN_OUT";
const DEFAULT_OUT: &str = "nlstefan-out";

/// SHA-256 of the canonical serialization, so that formatting and comments
/// in the config file do not change the hash.
pub fn config_hash(config: &ScenarioConfig) -> Result<String, CliError> {
    let canonical = serialize_config(config)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

pub fn out_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string())
}

pub struct Writer {
    dir: PathBuf,
    header: String,
    written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: PathBuf, config: &ScenarioConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let header = format!(
            "# nlstefan {VERSION}\n# config_sha256={}\n# variant={}\n",
            config_hash(config)?,
            config.variant.name()
        );
        Ok(Writer {
            dir,
            header,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// A CSV file preceded by the provenance header and `extra` comment lines.
    pub fn csv(
        &mut self,
        name: &str,
        extra: &[String],
        columns: &[&str],
        rows: &[Vec<String>],
    ) -> Result<PathBuf, CliError> {
        let mut body = self.header.clone();
        for line in extra {
            body.push_str("# ");
            body.push_str(line);
            body.push('\n');
        }
        body.push_str(&columns.join(","));
        body.push('\n');
        for row in rows {
            body.push_str(&row.join(","));
            body.push('\n');
        }
        self.text(name, &body)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let body =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
        self.text(name, &(body + "\n"))
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn series_rows(record: &RunRecord) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let mut columns = vec!["t"];
    columns.extend(BoundaryState::component_names(record.variant));
    columns.extend(["M", "sup_u", "M_phi", "M_psi"]);
    let rows = (0..record.len())
        .map(|k| {
            let mut row = vec![record.times[k].to_string()];
            row.extend(record.boundary[k].components().iter().map(f64::to_string));
            row.push(record.mass[k].to_string());
            row.push(record.sup_norm[k].to_string());
            row.push(cell(record.m_phi.as_ref().map(|v| v[k])));
            row.push(cell(record.m_psi.as_ref().map(|v| v[k])));
            row
        })
        .collect();
    (columns, rows)
}

pub fn snapshot_rows(snap: &Snapshot) -> Vec<Vec<String>> {
    snap.grid
        .nodes()
        .zip(&snap.values)
        .map(|(x, u)| vec![x.to_string(), u.to_string()])
        .collect()
}

/// Everything `rates` needs to reassess a run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RecordFile {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    /// The scenario in canonical form.
    pub config: String,
    pub record: RunRecord,
}
