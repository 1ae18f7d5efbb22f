//! File outputs: CSV tables, structured-grid dumps and the run manifest.
//!
//! Grid dump format (plain text, LF line endings):
//!
//! ```text
//! # membrane-sim structured grid
//! nx <nx>
//! ny <ny>
//! hx <hx>
//! hy <hy>
//! origin <x0> <y0>
//! values
//! <nx values of row j = 0, space separated>
//! ...
//! <nx values of row j = ny - 1>
//! ```
//!
//! Rows run bottom to top, values left to right. Obstacle cells hold `NaN`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use membrane_core::{CellMask, StructuredGrid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{SimError, SimResult};

const GRID_MAGIC: &str = "# membrane-sim structured grid";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Shortest round-trip scientific notation.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.to_path_buf(), source }
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> SimResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_err = |e: csv::Error| SimError::Io { path: path.to_path_buf(), source: std::io::Error::other(e) };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn grid_text(grid: &StructuredGrid, values: &[f64], mask: Option<&CellMask>) -> String {
    let mut s = String::new();
    s.push_str(GRID_MAGIC);
    s.push('\n');
    s.push_str(&format!("nx {}\nny {}\nhx {}\nhy {}\n", grid.nx, grid.ny, num(grid.hx), num(grid.hy)));
    s.push_str(&format!("origin {} {}\nvalues\n", num(grid.origin.0), num(grid.origin.1)));
    for j in 0..grid.ny {
        let row: Vec<String> = (0..grid.nx)
            .map(|i| {
                let k = grid.index(i, j);
                if mask.is_some_and(|m| m.is_blocked(k)) {
                    num(f64::NAN)
                } else {
                    num(values[k])
                }
            })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Parses a grid dump back into its grid and values.
pub fn parse_grid(text: &str) -> Result<(StructuredGrid, Vec<f64>), String> {
    let mut lines = text.lines();
    if lines.next() != Some(GRID_MAGIC) {
        return Err("missing grid header".into());
    }
    let mut field = |key: &str| -> Result<Vec<f64>, String> {
        let line = lines.next().ok_or_else(|| format!("missing `{key}`"))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(format!("expected `{key}`, found `{line}`"));
        }
        parts.map(|p| p.parse::<f64>().map_err(|e| format!("{key}: {e}"))).collect()
    };
    let nx = field("nx")?[0] as usize;
    let ny = field("ny")?[0] as usize;
    let hx = field("hx")?[0];
    let hy = field("hy")?[0];
    let origin = field("origin")?;
    if field("values")?.len() != 0 {
        return Err("malformed `values` line".into());
    }
    let grid = StructuredGrid::new(nx, ny, hx, hy, (origin[0], origin[1])).map_err(|e| e.to_string())?;
    let mut values = Vec::with_capacity(nx * ny);
    for line in lines {
        for p in line.split_whitespace() {
            values.push(p.parse::<f64>().map_err(|e| e.to_string())?);
        }
    }
    if values.len() != nx * ny {
        return Err(format!("expected {} values, found {}", nx * ny, values.len()));
    }
    Ok((grid, values))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Written last in a run directory; its presence marks the run complete.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub verb: String,
    pub scenario_hash: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub seedless: bool,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn read_manifest(dir: &Path) -> Option<RunManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

/// A run directory that records every file written into it.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(root: PathBuf) -> SimResult<Self> {
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        // a stale manifest would mark a half-rewritten directory complete
        let stale = root.join(MANIFEST_FILE);
        if stale.exists() {
            fs::remove_file(&stale).map_err(io_err(&stale))?;
        }
        Ok(RunDir { root, files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn track(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.root.join(name)
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> SimResult<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.track(name);
        write_csv(&path, header, rows)
    }

    pub fn text(&mut self, name: &str, contents: &str) -> SimResult<()> {
        let path = self.track(name);
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(contents.as_bytes()).map_err(io_err(&path))
    }

    pub fn grid(&mut self, name: &str, grid: &StructuredGrid, values: &[f64], mask: Option<&CellMask>) -> SimResult<()> {
        self.text(name, &grid_text(grid, values, mask))
    }

    /// Hashes the outputs and writes the manifest.
    pub fn finish(self, verb: &str, scenario_hash: &str, started_unix: u64, seedless: bool) -> SimResult<RunManifest> {
        let mut outputs = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let path = self.root.join(name);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            outputs.push(OutputEntry { path: name.clone(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        }
        let manifest = RunManifest {
            verb: verb.to_string(),
            scenario_hash: scenario_hash.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix,
            finished_unix: unix_now(),
            seedless,
            outputs,
        };
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_dump_round_trips_with_masked_cells() {
        let grid = StructuredGrid::covering((-1.0, 1.0), (0.0, 0.5), 4, 3).unwrap();
        let values: Vec<f64> = (0..12).map(|k| k as f64 * 0.1 - 0.3).collect();
        let mask = CellMask::from_fn(&grid, |i, j| i == 1 && j == 2);
        let text = grid_text(&grid, &values, Some(&mask));
        let (g, v) = parse_grid(&text).unwrap();
        assert_eq!(g, grid);
        for (k, (a, b)) in v.iter().zip(&values).enumerate() {
            if mask.is_blocked(k) {
                assert!(a.is_nan());
            } else {
                assert_eq!(a, b);
            }
        }
        assert!(!text.contains('\r'));
    }

    #[test]
    fn csv_uses_lf_and_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, &["a", "b"], [vec![num(1.5), num(2e-300)]]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\n1.5e0,2e-300\n");
    }

    #[test]
    fn manifest_lists_every_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path().join("run")).unwrap();
        run.text("x.txt", "hello").unwrap();
        let m = run.finish("cell", "abc", 7, true).unwrap();
        assert_eq!(m.outputs.len(), 1);
        assert_eq!(m.outputs[0].sha256, sha256_hex(b"hello"));
        assert_eq!(read_manifest(&dir.path().join("run")), Some(m));
    }
}
