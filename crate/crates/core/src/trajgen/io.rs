//! Dataset files: a CSV table `t,q1..qn,dq1..dqn,ddq1..ddqn,tau1..taun`
//! (17 significant digits) and a JSON sidecar with generation metadata.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, DynamicsSample};
use crate::rbd::JointKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub robot_name: String,
    pub dof: usize,
    pub joint_kinds: Vec<JointKind>,
    /// Hz
    pub rate: f64,
    /// seconds covered by this file
    pub duration: f64,
    pub cutoff: f64,
    pub amplitude: Vec<f64>,
    pub trajectory_seed: u64,
    pub noise_seed: u64,
    /// N·m, standard deviation of the additive torque noise
    pub noise_std: f64,
    /// Index of the first sample within the generated trajectory.
    pub start_index: usize,
    pub generator: String,
}

/// `data.csv` → `data.meta.json`
pub fn meta_path_for(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Dataset {
    pub fn header(dof: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for prefix in ["q", "dq", "ddq", "tau"] {
            h.extend((1..=dof).map(|i| format!("{prefix}{i}")));
        }
        h
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::header(self.dof()))?;
        for s in &self.samples {
            let row = std::iter::once(s.t)
                .chain(s.q.iter().copied())
                .chain(s.qd.iter().copied())
                .chain(s.qdd.iter().copied())
                .chain(s.tau.iter().copied())
                .map(fmt);
            w.write_record(row)?;
        }
        w.into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }

    /// SHA-256 of the CSV serialization.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(self.to_csv_bytes()?)))
    }

    /// Write `path` (CSV) and its metadata sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_bytes()?)?;
        let meta = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(meta_path_for(path), meta + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Dataset> {
        let meta_path = meta_path_for(path);
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", meta_path.display())))?;
        let n = meta.dof;
        let parse_err = |line: usize, message: String| Error::Parse {
            source_name: path.display().to_string(),
            line,
            field: None,
            message,
        };
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != Self::header(n) {
            return Err(parse_err(
                1,
                format!("header does not match a {n}-joint dataset: {}", header.join(",")),
            ));
        }
        let mut samples = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(line, format!("'{s}' is not a number")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != 1 + 4 * n {
                return Err(parse_err(line, format!("expected {} columns", 1 + 4 * n)));
            }
            let block = |k: usize| DVector::from_column_slice(&vals[1 + k * n..1 + (k + 1) * n]);
            samples.push(DynamicsSample {
                t: vals[0],
                q: block(0),
                qd: block(1),
                qdd: block(2),
                tau: block(3),
            });
        }
        if samples.is_empty() {
            return Err(parse_err(2, "dataset has no samples".into()));
        }
        Ok(Dataset { samples, meta })
    }
}
