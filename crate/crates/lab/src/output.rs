//! CSV emission, checksums and run manifests.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

/// Shortest decimal string that parses back to exactly `x`. Very small and
/// very large magnitudes use exponent notation to stay short.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x != 0.0 && x.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// An in-memory CSV table written in one go.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Files written by one run, in write order, with their digests.
#[derive(Debug, Default)]
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, String, usize)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl OutputSet {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputSet { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.files.push((name.to_string(), sha256_hex(bytes), bytes.len()));
        Ok(path)
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> io::Result<PathBuf> {
        self.write_bytes(name, &table.to_bytes())
    }

    pub fn files(&self) -> impl Iterator<Item = (&str, &str)> {
        self.files.iter().map(|(n, h, _)| (n.as_str(), h.as_str()))
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn write_manifest(&self, run: &RunInfo<'_>, wall: Duration) -> io::Result<PathBuf> {
        let config: Map<String, Value> = run.config.iter().map(|(k, v)| (k.to_string(), Value::String(v.clone()))).collect();
        let files: Vec<Value> = self
            .files
            .iter()
            .map(|(name, hash, bytes)| json!({ "name": name, "sha256": hash, "bytes": bytes }))
            .collect();
        let manifest = json!({
            "command": run.command,
            "version": run.version,
            "seed": run.seed,
            "config": config,
            "files": files,
            "wall_time_seconds": wall.as_secs_f64(),
        });
        let mut text = serde_json::to_string_pretty(&manifest).expect("json values serialize");
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text)?;
        Ok(path)
    }
}

/// Identification of a run for its manifest.
#[derive(Debug, Clone)]
pub struct RunInfo<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub config: Vec<(&'static str, String)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for &x in &[0.0, -0.0, 1.0, 0.1, 1.0 / 3.0, 0.5533, 1e-7, 6.02e23, -2.5e-300, f64::MIN_POSITIVE, 123456.789] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e-7), "1e-7");
        assert_eq!(fmt_f64(10.0), "10");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn csv_quotes_labels() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["x,y".into(), fmt_f64(0.25)]);
        assert_eq!(String::from_utf8(t.to_bytes()).unwrap(), "a,b\n\"x,y\",0.25\n");
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputSet::create(dir.path()).unwrap();
        out.write_bytes("a.csv", b"x\n1\n").unwrap();
        let info = RunInfo { command: "value", version: "0.0.0", seed: 5, config: vec![("mc.seed", "5".into())] };
        let path = out.write_manifest(&info, Duration::from_millis(3)).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(v["files"][0]["name"], "a.csv");
        assert_eq!(v["files"][0]["sha256"], sha256_hex(b"x\n1\n"));
        assert_eq!(v["seed"], 5);
        assert_eq!(v["config"]["mc.seed"], "5");
    }
}
