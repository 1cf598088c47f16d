//! Artifact writers: RFC-4180-style CSV with a header row, JSON with stable
//! key order (struct field order), gnuplot-compatible plot scripts, and a
//! manifest with content hashes covering every emitted file.

use crate::error::{Error, Result};
use crate::flow::LiftedTrajectory;
use crate::quantize::SpectralData;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

/// Collects emitted files so the manifest can reference each exactly once.
pub struct ArtifactSink {
    dir: PathBuf,
    entries: Vec<(String, String, u64)>,
}

impl ArtifactSink {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactSink {
            dir: dir.to_path_buf(),
            entries: vec![],
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        if self.entries.iter().any(|(n, _, _)| n == name) {
            return Err(Error::Validation(format!(
                "artifact '{name}' written twice"
            )));
        }
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        let hash = hex_string(&hasher.finalize());
        self.entries
            .push((name.to_string(), hash, bytes.len() as u64));
        Ok(path)
    }

    pub fn write_csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<PathBuf> {
        let mut out = String::new();
        out.push_str(&header.join(","));
        out.push_str("\r\n");
        for row in rows {
            out.push_str(&row.join(","));
            out.push_str("\r\n");
        }
        self.write_bytes(name, out.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Validation(format!("json encode: {e}")))?;
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes the manifest last; it references every artifact exactly once.
    pub fn finalize(mut self, config_hash: &str) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Entry {
            path: String,
            sha256: String,
            bytes: u64,
        }
        #[derive(Serialize)]
        struct Manifest {
            tool_version: String,
            config_hash: String,
            entries: Vec<Entry>,
        }
        self.entries.sort_by(|a, b| a.0.cmp(&b.0));
        let manifest = Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            entries: self
                .entries
                .iter()
                .map(|(p, h, b)| Entry {
                    path: p.clone(),
                    sha256: h.clone(),
                    bytes: *b,
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Validation(format!("json encode: {e}")))?;
        let path = self.dir.join("manifest.json");
        fs::write(&path, text.as_bytes())?;
        Ok(path)
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_str(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex_string(&hasher.finalize())
}

fn fmt(v: f64) -> String {
    // shortest round-trip decimal with '.' separator
    format!("{v}")
}

/// Spectral data rows: j, mu, mass.
pub fn spectral_rows(data: &SpectralData) -> Vec<Vec<String>> {
    data.eigenvalues
        .iter()
        .zip(&data.masses)
        .enumerate()
        .map(|(j, (&mu, &mass))| vec![j.to_string(), fmt(mu), fmt(mass)])
        .collect()
}

/// Trajectory rows: t, Re z_i, Im z_i, theta_hat, theta_h, H,
/// monodromy entries (row-major), symplectic residual.
pub fn trajectory_rows(traj: &LiftedTrajectory) -> (Vec<String>, Vec<Vec<String>>) {
    let m = traj.base_points.first().map(|z| z.len()).unwrap_or(0);
    let n = 2 * m;
    let mut header: Vec<String> = vec!["t".into()];
    for i in 0..m {
        header.push(format!("re_z{i}"));
        header.push(format!("im_z{i}"));
    }
    header.push("theta_hat".into());
    header.push("theta_h".into());
    header.push("H".into());
    for r in 0..n {
        for c in 0..n {
            header.push(format!("m{r}{c}"));
        }
    }
    header.push("symplectic_residual".into());
    let rows = (0..traj.times.len())
        .map(|i| {
            let mut row = vec![fmt(traj.times[i])];
            for z in &traj.base_points[i] {
                row.push(fmt(z.re));
                row.push(fmt(z.im));
            }
            row.push(fmt(traj.theta_hat[i]));
            row.push(fmt(traj.theta_h[i]));
            row.push(fmt(traj.energy[i]));
            let mat = &traj.monodromy[i];
            for r in 0..n {
                for c in 0..n {
                    row.push(fmt(mat[(r, c)]));
                }
            }
            row.push(fmt(traj.symplectic_residuals[i]));
            row
        })
        .collect();
    (header, rows)
}

/// A gnuplot script plotting selected columns of a CSV emitted alongside.
pub fn plot_script(
    title: &str,
    csv_name: &str,
    xlabel: &str,
    ylabel: &str,
    columns: &[(usize, &str)],
    logscale: bool,
) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str(&format!("set title '{title}'\n"));
    s.push_str(&format!("set xlabel '{xlabel}'\n"));
    s.push_str(&format!("set ylabel '{ylabel}'\n"));
    if logscale {
        s.push_str("set logscale xy\n");
    }
    s.push_str("set key left top\n");
    let specs: Vec<String> = columns
        .iter()
        .map(|(col, label)| {
            format!("'{csv_name}' using 1:{col} skip 1 with linespoints title '{label}'")
        })
        .collect();
    s.push_str(&format!("plot {}\n", specs.join(", \\\n     ")));
    s
}
