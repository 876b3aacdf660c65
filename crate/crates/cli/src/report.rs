use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Provenance {
    pub artifact: &'static str,
    pub version: &'static str,
    pub timestamp: String,
}

#[derive(Serialize)]
pub struct Report<'a, P: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub payload: P,
    pub provenance: Provenance,
}

pub fn provenance() -> Provenance {
    Provenance {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        timestamp: chrono::Utc::now().to_rfc3339(),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

/// Writes `<out>/<command>.json`.
pub fn write_report<P: Serialize>(cfg: &RunConfig, command: &str, payload: P) -> CliResult<PathBuf> {
    let path = cfg.out.join(format!("{command}.json"));
    let report = Report { schema_version: SCHEMA_VERSION, command, config: cfg, payload, provenance: provenance() };
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w).map_err(|e| CliError::io(&path, e))?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Plain CSV writer; cells are written as given.
pub struct Csv {
    path: PathBuf,
    w: BufWriter<File>,
}

impl Csv {
    pub fn create(cfg: &RunConfig, name: &str, header: &[String]) -> CliResult<Self> {
        let path = cfg.out.join(name);
        let w = create(&path)?;
        let mut csv = Csv { path, w };
        csv.row(header)?;
        Ok(csv)
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) -> CliResult<()> {
        let line = cells.iter().map(|c| c.as_ref()).collect::<Vec<_>>().join(",");
        writeln!(self.w, "{line}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

/// Shortest round-trip form of a float.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn coord_names(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("{prefix}{j}")).collect()
}
