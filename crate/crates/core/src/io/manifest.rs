//! Dataset manifests (JSON).
//!
//! ```json
//! {
//!   "name": "flowers",
//!   "matrices": [
//!     {"path": "hsv.mksm", "role": "distance", "source_id": "hsv", "cross_path": "hsv_test.mksm"},
//!     {"path": "lin.csv", "role": "kernel", "source_id": "lin"}
//!   ],
//!   "labels": "train_labels.txt",
//!   "test_labels": "test_labels.txt",
//!   "kernel": {"normalize": true, "psd_tol": 1e-8, "gamma": "mean_inverse"}
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::labels::parse_labels;
use super::matrix::read_matrix;
use crate::error::{Error, Result};
use crate::kernel::{kernel_from_distances, DistanceMatrix, GammaPolicy, KernelMatrix, KernelSet, PSD_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixRole {
    Distance,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixEntry {
    pub path: PathBuf,
    pub role: MatrixRole,
    pub source_id: String,
    /// Test-by-train matrix of the same role, for encoding held-out samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_path: Option<PathBuf>,
    /// Overrides the manifest-wide gamma policy for this entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

fn default_true() -> bool {
    true
}

fn default_psd_tol() -> f64 {
    PSD_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default = "default_psd_tol")]
    pub psd_tol: f64,
    #[serde(default)]
    pub gamma: GammaPolicy,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            normalize: true,
            psd_tol: PSD_TOL,
            gamma: GammaPolicy::MeanInverse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub matrices: Vec<MatrixEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(default)]
    pub kernel: KernelParams,
}

impl Manifest {
    /// Parses and checks structure (no file access).
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        m.check()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    fn check(&self) -> Result<()> {
        if self.matrices.is_empty() {
            return Err(Error::Format("manifest lists no matrices".into()));
        }
        let mut roles: BTreeMap<&Path, MatrixRole> = BTreeMap::new();
        let mut ids = std::collections::BTreeSet::new();
        for e in &self.matrices {
            if !ids.insert(e.source_id.as_str()) {
                return Err(Error::Format(format!("duplicate source_id {:?}", e.source_id)));
            }
            for p in std::iter::once(&e.path).chain(e.cross_path.as_ref()) {
                if let Some(prev) = roles.insert(p.as_path(), e.role) {
                    if prev != e.role {
                        return Err(Error::Format(format!(
                            "{} is listed both as a distance and as a kernel",
                            p.display()
                        )));
                    }
                }
            }
            if let Some(g) = e.gamma {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(Error::Format(format!("gamma for {:?} must be positive", e.source_id)));
                }
                if e.role == MatrixRole::Kernel {
                    return Err(Error::Format(format!("gamma given for kernel entry {:?}", e.source_id)));
                }
            }
        }
        if !(self.kernel.psd_tol >= 0.0 && self.kernel.psd_tol.is_finite()) {
            return Err(Error::Format("psd_tol must be a nonnegative number".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let m = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, base))
    }

    /// Builds the validated (and by default normalized) kernel set.
    pub fn kernel_set(&self, base: &Path) -> Result<KernelSet> {
        let mut kernels = Vec::with_capacity(self.matrices.len());
        for e in &self.matrices {
            let values = read_matrix(&base.join(&e.path))?;
            let k = match e.role {
                MatrixRole::Kernel => KernelMatrix::new(values, e.source_id.clone())?,
                MatrixRole::Distance => {
                    let policy = e.gamma.map_or(self.kernel.gamma, GammaPolicy::Explicit);
                    kernel_from_distances(&DistanceMatrix::new(values)?, policy, e.source_id.clone())?
                }
            };
            kernels.push(k);
        }
        let ks = KernelSet::with_tolerance(kernels, self.kernel.psd_tol)?;
        if self.kernel.normalize {
            ks.normalized()
        } else {
            Ok(ks)
        }
    }

    /// Raw test-by-train blocks, one per matrix entry.
    pub fn cross_blocks(&self, base: &Path) -> Result<Vec<Array2<f64>>> {
        self.matrices
            .iter()
            .map(|e| {
                let p = e
                    .cross_path
                    .as_ref()
                    .ok_or_else(|| Error::Format(format!("no cross_path for {:?}", e.source_id)))?;
                read_matrix(&base.join(p))
            })
            .collect()
    }

    pub fn read_labels(&self, base: &Path) -> Result<Option<Vec<usize>>> {
        read_optional_labels(base, self.labels.as_deref())
    }

    pub fn read_test_labels(&self, base: &Path) -> Result<Option<Vec<usize>>> {
        read_optional_labels(base, self.test_labels.as_deref())
    }
}

fn read_optional_labels(base: &Path, p: Option<&Path>) -> Result<Option<Vec<usize>>> {
    match p {
        None => Ok(None),
        Some(p) => Ok(Some(parse_labels(&std::fs::read_to_string(base.join(p))?)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::matrix::write_matrix;
    use ndarray::array;

    #[test]
    fn minimal_manifest_defaults() {
        let m = Manifest::from_json(r#"{"name": "x", "matrices": [{"path": "a", "role": "kernel", "source_id": "a"}]}"#)
            .unwrap();
        assert!(m.kernel.normalize);
        assert_eq!(m.kernel.gamma, GammaPolicy::MeanInverse);
        assert_eq!(Manifest::from_json(&m.to_json().unwrap()).unwrap(), m);
    }

    #[test]
    fn floats_survive_json_exactly() {
        let mut m = Manifest::from_json(r#"{"name": "x", "matrices": [{"path": "a", "role": "kernel", "source_id": "a"}]}"#)
            .unwrap();
        for tol in [7e62, 0.1 + 0.2, 1.0 / 3.0, f64::MIN_POSITIVE] {
            m.kernel.psd_tol = tol;
            let back = Manifest::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back.kernel.psd_tol.to_bits(), tol.to_bits());
        }
    }

    #[test]
    fn structural_errors() {
        let cases = [
            r#"{"name": "x", "matrices": []}"#,
            r#"{"name": "x", "matrices": [{"path": "a", "role": "kernel", "source_id": "a"}], "extra": 1}"#,
            r#"{"name": "x", "matrices": [{"path": "a", "role": "both", "source_id": "a"}]}"#,
            r#"{"name": "x", "matrices": [{"path": "a", "role": "kernel", "source_id": "a"},
                                           {"path": "a", "role": "distance", "source_id": "b"}]}"#,
            r#"{"name": "x", "matrices": [{"path": "a", "role": "kernel", "source_id": "a"},
                                           {"path": "b", "role": "kernel", "source_id": "a"}]}"#,
            r#"{"name": "x", "matrices": [{"path": "a", "role": "kernel", "source_id": "a", "gamma": 1.0}]}"#,
            r#"{"name": "x", "matrices": [{"path": "a", "role": "distance", "source_id": "a", "gamma": -1.0}]}"#,
        ];
        for c in cases {
            assert!(Manifest::from_json(c).is_err(), "{c}");
        }
    }

    #[test]
    fn builds_kernel_set_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = array![[0.0, 2.0, 4.0], [2.0, 0.0, 2.0], [4.0, 2.0, 0.0]];
        write_matrix(&dir.path().join("d.mksm"), d.view()).unwrap();
        write_matrix(&dir.path().join("k.csv"), (Array2::<f64>::eye(3) * 2.0).view()).unwrap();
        std::fs::write(dir.path().join("y.txt"), "0\n1\n1\n").unwrap();
        let json = r#"{"name": "t", "labels": "y.txt", "matrices": [
            {"path": "d.mksm", "role": "distance", "source_id": "d"},
            {"path": "k.csv", "role": "kernel", "source_id": "k"}]}"#;
        std::fs::write(dir.path().join("m.json"), json).unwrap();
        let (m, base) = Manifest::load(&dir.path().join("m.json")).unwrap();
        let ks = m.kernel_set(&base).unwrap();
        assert_eq!(ks.len(), 2);
        // mean off-diagonal distance is 8/3
        let g = ks.get(0).gamma().unwrap();
        assert!((g - 3.0 / 8.0).abs() < 1e-15);
        assert!((ks.get(0).values()[[0, 1]] - (-0.75f64).exp()).abs() < 1e-15);
        assert_eq!(ks.get(1).values(), Array2::<f64>::eye(3).view());
        assert_eq!(ks.get(1).scale(), 0.5);
        assert_eq!(m.read_labels(&base).unwrap(), Some(vec![0, 1, 1]));
        assert!(m.cross_blocks(&base).is_err());
    }
}
