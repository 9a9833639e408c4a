//! Rendering results as CSV and JSON. Every artifact carries the config
//! hash and seed; rendering is pure so two runs can be compared byte for
//! byte before anything touches the disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::induction::TailProfile;
use crate::transfer::{GridDensity, TransferMatrix};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Provenance stamped into every artifact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    fn csv_header(&self) -> String {
        format!("# config_hash={}\n# seed={}\n", self.config_hash, self.seed)
    }
}

/// JSON object with `config_hash` and `seed` merged in at the top level
/// (wrapped under `data` when the value is not an object).
pub fn json_artifact(name: &str, stamp: &Stamp, value: &impl Serialize) -> Artifact {
    let v = serde_json::to_value(value).expect("artifact serializes");
    let mut obj = match v {
        serde_json::Value::Object(m) => m,
        other => {
            let mut m = serde_json::Map::new();
            m.insert("data".into(), other);
            m
        }
    };
    obj.insert("config_hash".into(), stamp.config_hash.clone().into());
    obj.insert("seed".into(), stamp.seed.into());
    let mut bytes = serde_json::to_vec_pretty(&serde_json::Value::Object(obj)).expect("json");
    bytes.push(b'\n');
    Artifact {
        name: name.into(),
        bytes,
    }
}

fn csv_artifact(name: &str, stamp: &Stamp, header: &str, body: String) -> Artifact {
    let mut s = stamp.csv_header();
    s.push_str(header);
    s.push('\n');
    s.push_str(&body);
    Artifact {
        name: name.into(),
        bytes: s.into_bytes(),
    }
}

/// n, level_volume, tail_volume, stderr (of the tail).
pub fn tails_csv(stamp: &Stamp, profile: &TailProfile) -> Artifact {
    let mut body = String::new();
    for n in 1..=profile.n_max {
        let _ = writeln!(
            body,
            "{n},{},{},{}",
            profile.level(n),
            profile.tail(n),
            profile.tail_stderr[n - 1]
        );
    }
    csv_artifact("tails.csv", stamp, "n,level_volume,tail_volume,stderr", body)
}

/// cell, center coordinates, value, over the support.
pub fn density_csv(stamp: &Stamp, h: &GridDensity) -> Artifact {
    let p = &h.partition;
    let axes = ["x", "y", "z"];
    let header = std::iter::once("cell".to_string())
        .chain(axes[..p.dim()].iter().map(|a| a.to_string()))
        .chain(std::iter::once("h".to_string()))
        .collect::<Vec<_>>()
        .join(",");
    let mut body = String::new();
    for c in (0..p.cell_count()).filter(|c| h.support[*c]) {
        let x = p.center(c);
        let _ = write!(body, "{c}");
        for a in 0..p.dim() {
            let _ = write!(body, ",{}", x[a]);
        }
        let _ = writeln!(body, ",{}", h.values[c]);
    }
    csv_artifact("density.csv", stamp, &header, body)
}

/// Sparse triplets (row, col, value) over active-cell rows.
pub fn transfer_csv(stamp: &Stamp, t: &TransferMatrix) -> Artifact {
    let mut body = String::new();
    for i in 0..t.n() {
        for (j, v) in t.row(i) {
            let _ = writeln!(body, "{i},{j},{v}");
        }
    }
    csv_artifact("transfer.csv", stamp, "row,col,value", body)
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    artifacts
        .iter()
        .map(|a| {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.bytes)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stamps_are_embedded() {
        let stamp = Stamp {
            config_hash: "ab".repeat(32),
            seed: 9,
        };
        let a = json_artifact("x.json", &stamp, &serde_json::json!({"verdict": "Finite"}));
        let v: serde_json::Value = serde_json::from_slice(&a.bytes).unwrap();
        assert_eq!(v["seed"], 9);
        assert_eq!(v["verdict"], "Finite");
        let wrapped = json_artifact("y.json", &stamp, &vec![1, 2]);
        let v: serde_json::Value = serde_json::from_slice(&wrapped.bytes).unwrap();
        assert_eq!(v["data"][1], 2);
        let t = tails_csv(&stamp, &TailProfile::from_tails(vec![0.5, 0.25]));
        let text = String::from_utf8(t.bytes).unwrap();
        assert!(text.starts_with("# config_hash=abab"));
        assert!(text.contains("\nn,level_volume,tail_volume,stderr\n1,0.5,0.5,0\n2,0.25,0.25,0\n"));
    }
}
