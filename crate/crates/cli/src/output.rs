//! Output files. Every file starts with (or contains) the config hash.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use polaron_core::adiabatic::AdiabaticFrame;
use serde::Serialize;
use serde_json::{json, Value};

pub const TRAJECTORY_COLUMNS: [&str; 11] = [
    "t",
    "norm_psi",
    "energy",
    "e_phi",
    "gap",
    "err2",
    "omega",
    "phase_e",
    "phase_omega",
    "h1_psi",
    "l2_phi",
];

/// Output directory plus the hash stamped into each file.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path, hash: &str) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            hash: hash.to_string(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name);
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        self.written.push(p);
        Ok(BufWriter::new(f))
    }

    /// Comment line carrying the hash, for CSV and text outputs.
    fn stamp<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# config_hash={}", self.hash)
    }

    pub fn write_trajectory(&mut self, name: &str, frames: &[AdiabaticFrame]) -> Result<()> {
        let mut w = self.open(name)?;
        self.stamp(&mut w)?;
        write_trajectory_rows(&mut w, frames)?;
        w.flush()?;
        Ok(())
    }

    /// CSV with the given header and rows of floats.
    pub fn write_table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut w = self.open(name)?;
        self.stamp(&mut w)?;
        writeln!(w, "{}", header.join(","))?;
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.12e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Text written by `body`, after the hash line.
    pub fn write_text(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<()> {
        let mut w = self.open(name)?;
        self.stamp(&mut w)?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// JSON document with a top-level `config_hash` key added.
    pub fn write_json<T: Serialize>(&mut self, name: &str, doc: &T) -> Result<()> {
        let mut v = serde_json::to_value(doc)?;
        match &mut v {
            Value::Object(map) => {
                map.insert("config_hash".into(), json!(self.hash));
            }
            other => {
                v = json!({ "config_hash": self.hash, "value": other.take() });
            }
        }
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, &v)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// `MANIFEST` listing completed outputs and the failures.
    pub fn write_manifest(&mut self, failures: &[String]) -> Result<()> {
        let files: Vec<String> = self
            .written
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect();
        let mut w = self.open("MANIFEST")?;
        self.stamp(&mut w)?;
        writeln!(w, "status=incomplete")?;
        for f in files {
            writeln!(w, "ok {f}")?;
        }
        for f in failures {
            writeln!(w, "failed {f}")?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_trajectory_rows<W: Write>(w: &mut W, frames: &[AdiabaticFrame]) -> std::io::Result<()> {
    writeln!(w, "{}", TRAJECTORY_COLUMNS.join(","))?;
    for f in frames {
        let row = [
            f.t,
            f.norm_psi,
            f.energy,
            f.e_phi,
            f.gap,
            f.err2,
            f.omega,
            f.phase_e,
            f.phase_omega,
            f.h1_psi,
            f.l2_phi,
        ];
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.15e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// File-name fragment for a coupling value, e.g. `4` or `2.5`.
pub fn alpha_tag(alpha: f64) -> String {
    let s = format!("{alpha}");
    s.replace('.', "p")
}
