//! Writes in-memory datasets as manifest directories.

use std::path::{Path, PathBuf};

use super::labels::labels_to_string;
use super::manifest::{KernelParams, Manifest, MatrixEntry, MatrixRole};
use super::matrix::{atomic_write, write_matrix};
use crate::error::Result;
use crate::synth::PlantedDataset;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes one `<source_id>.mksm` distance file per view (plus
/// `<source_id>_test.mksm` when there is a test split), the label files and
/// `manifest.json`. Returns the manifest path.
pub fn write_dataset(data: &PlantedDataset, dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let has_test = !data.test_labels.is_empty();
    let mut matrices = Vec::with_capacity(data.views.len());
    for v in &data.views {
        let path = PathBuf::from(format!("{}.mksm", v.source_id));
        write_matrix(&dir.join(&path), v.train.view())?;
        let cross_path = if has_test {
            let p = PathBuf::from(format!("{}_test.mksm", v.source_id));
            write_matrix(&dir.join(&p), v.cross.view())?;
            Some(p)
        } else {
            None
        };
        matrices.push(MatrixEntry {
            path,
            role: MatrixRole::Distance,
            source_id: v.source_id.clone(),
            cross_path,
            gamma: None,
        });
    }
    atomic_write(&dir.join("train_labels.txt"), labels_to_string(&data.train_labels).as_bytes())?;
    let test_labels = if has_test {
        atomic_write(&dir.join("test_labels.txt"), labels_to_string(&data.test_labels).as_bytes())?;
        Some(PathBuf::from("test_labels.txt"))
    } else {
        None
    };
    let manifest = Manifest {
        name: name.into(),
        matrices,
        labels: Some(PathBuf::from("train_labels.txt")),
        test_labels,
        kernel: KernelParams::default(),
    };
    write_manifest(&manifest, dir)
}

pub fn write_manifest(m: &Manifest, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = m.to_json()?;
    text.push('\n');
    atomic_write(&path, text.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::two_kernel_planted;

    #[test]
    fn written_dataset_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let data = two_kernel_planted(30, 9, 3);
        let path = write_dataset(&data, dir.path(), "planted").unwrap();
        let (m, base) = Manifest::load(&path).unwrap();
        assert_eq!(m.read_labels(&base).unwrap().unwrap(), data.train_labels);
        assert_eq!(m.read_test_labels(&base).unwrap().unwrap(), data.test_labels);
        let ks = m.kernel_set(&base).unwrap();
        let direct = data.kernel_set().unwrap();
        for r in 0..2 {
            assert_eq!(ks.get(r).values(), direct.get(r).values());
        }
        let cross = m.cross_blocks(&base).unwrap();
        assert_eq!(cross[1], data.views[1].cross);
    }
}
