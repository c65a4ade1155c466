//! Artifact writers: binary array dumps, CSV tables, JSON documents and
//! the run manifest.
//!
//! Binary layout: `u64` rank, `rank × u64` dimensions, then the entries as
//! little-endian `f64` in row-major order.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn write_binary(path: &Path, array: &ArrayD<f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&(array.ndim() as u64).to_le_bytes())?;
    for &n in array.shape() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for v in array.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<ArrayD<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut words = bytes.chunks_exact(8).map(|c| <[u8; 8]>::try_from(c).expect("8-byte chunk"));
    let bad = || Error::Configuration(format!("malformed array dump {}", path.display()));
    let rank = u64::from_le_bytes(words.next().ok_or_else(bad)?) as usize;
    let shape = (0..rank)
        .map(|_| words.next().map(|w| u64::from_le_bytes(w) as usize).ok_or_else(bad))
        .collect::<Result<Vec<_>>>()?;
    let data: Vec<f64> = words.map(f64::from_le_bytes).collect();
    if bytes.len() % 8 != 0 || data.len() != shape.iter().product::<usize>() {
        return Err(bad());
    }
    ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|_| bad())
}

/// CSV with a header row; floats use the shortest round-trip form.
pub fn write_csv(path: &Path, comment: Option<&str>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub artifacts: Vec<Artifact>,
}

/// Collects written files relative to an output directory.
#[derive(Debug)]
pub struct ArtifactSink {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactSink {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Full path for `name`, recorded for the manifest.
    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(PathBuf::from(name));
        p
    }

    /// Hash everything written and emit `manifest.json`.
    pub fn finish(mut self, command: &str, seed: u64, config: serde_json::Value) -> Result<Manifest> {
        self.written.sort();
        self.written.dedup();
        let artifacts = self
            .written
            .iter()
            .map(|rel| {
                Ok(Artifact {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    sha256: sha256_file(&self.dir.join(rel))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            artifacts,
        };
        write_json(&self.dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        let a = ArrayD::from_shape_fn(IxDyn(&[3, 4]), |i| i[0] as f64 * 0.1 - i[1] as f64);
        write_binary(&p, &a).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 8 * (1 + 2 + 12));
        assert_eq!(read_binary(&p).unwrap(), a);
        fs::write(&p, [0u8; 12]).unwrap();
        assert!(read_binary(&p).is_err());
    }

    #[test]
    fn csv_floats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let x = 0.1 + 0.2;
        write_csv(&p, Some("{}"), &["a", "b"], &[vec![x, 1e-300]]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let last = text.lines().last().unwrap();
        let parsed: Vec<f64> = last.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(parsed, vec![x, 1e-300]);
        assert!(text.starts_with("# {}\na,b\n"));
    }

    #[test]
    fn manifest_lists_sorted_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = ArtifactSink::new(dir.path()).unwrap();
        fs::write(sink.path("b.txt"), "b").unwrap();
        fs::write(sink.path("a.txt"), "a").unwrap();
        let m = sink.finish("test", 1, serde_json::json!({})).unwrap();
        assert_eq!(m.artifacts[0].path, "a.txt");
        assert_eq!(
            m.artifacts[0].sha256,
            "ca978112ca1bbdcafac231b39a23dc4da786eff8147c4e72b9807785afee48bb"
        );
        assert!(dir.path().join("manifest.json").exists());
    }
}
