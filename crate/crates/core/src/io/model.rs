//! Model containers: a directory holding `manifest.json` plus one MKSM blob
//! per matrix. `manifest.json` records a SHA-256 for every blob, and loading
//! fails with `CorruptContainer` on any mismatch.
//!
//! Blobs: `kernel` (training ensemble, `N x N`), `codes` (`sum K_s x N`),
//! `graph_w`, `graph_w_prime`, and per level `s`: `level{s}_a` (`N x 3`
//! rows of sample, atom, coefficient), `level{s}_d` (`1 x K_s`) and
//! `level{s}_z` (`N x 1` atom index).

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::matrix::{atomic_write, decode_mksm, encode_mksm};
use crate::embedding::{AffinityGraphs, GraphMode};
use crate::error::{Error, Result};
use crate::kernel::{fingerprint, KernelWeights};
use crate::kmld::{LevelCollapse, LevelState, MultilevelDictionary};
use crate::pipeline::{RoundLog, TrainedModel, TrainingConfig};

pub const FORMAT: &str = "mksr-model";
pub const FORMAT_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Index {
    format: String,
    version: u32,
    config: TrainingConfig,
    beta: Vec<f64>,
    gammas: Vec<Option<f64>>,
    scales: Vec<f64>,
    source_ids: Vec<String>,
    n: usize,
    kernel_fingerprint: String,
    requested_levels: usize,
    k_atoms: Vec<usize>,
    collapse: Option<LevelCollapse>,
    graph_mode: GraphMode,
    rounds: Vec<RoundLog>,
    warnings: Vec<String>,
    /// Blob file name to hex SHA-256.
    blobs: BTreeMap<String, String>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptContainer(msg.into())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn blob_name(stem: &str) -> String {
    format!("{stem}.mksm")
}

/// Serializes a model to named files (index included).
pub fn encode_container(m: &TrainedModel) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    let mut put = |stem: &str, a: &Array2<f64>| {
        files.insert(blob_name(stem), encode_mksm(a.view()));
    };
    put("kernel", &m.kernel);
    put("codes", &m.mld.training_codes);
    put("graph_w", &m.graphs.w);
    put("graph_w_prime", &m.graphs.w_prime);
    for (s, level) in m.mld.levels.iter().enumerate() {
        let n = level.n();
        let a = Array2::from_shape_fn((n, 3), |(i, c)| match c {
            0 => i as f64,
            1 => level.membership[i] as f64,
            _ => level.coeff[i],
        });
        put(&format!("level{s}_a"), &a);
        put(&format!("level{s}_d"), &level.d.clone().insert_axis(ndarray::Axis(0)));
        let z = Array2::from_shape_fn((n, 1), |(i, _)| level.membership[i] as f64);
        put(&format!("level{s}_z"), &z);
    }
    let finite_rounds = m
        .rounds
        .iter()
        .all(|r| r.trace_ratio.is_finite() && r.mean_energy.is_finite());
    if !finite_rounds {
        return Err(Error::Numerical("round log holds non-finite values".into()));
    }
    let index = Index {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        config: m.config.clone(),
        beta: m.beta.as_array().to_vec(),
        gammas: m.gammas.clone(),
        scales: m.scales.clone(),
        source_ids: m.source_ids.clone(),
        n: m.mld.n,
        kernel_fingerprint: m.mld.kernel_fingerprint.clone(),
        requested_levels: m.mld.requested_levels,
        k_atoms: m.mld.k_atoms(),
        collapse: m.mld.collapse.clone(),
        graph_mode: m.graphs.mode,
        rounds: m.rounds.clone(),
        warnings: m.warnings.clone(),
        blobs: files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
    };
    let mut json = serde_json::to_string_pretty(&index).map_err(|e| Error::Format(e.to_string()))?;
    json.push('\n');
    files.insert(INDEX_FILE.into(), json.into_bytes());
    Ok(files)
}

fn blob(files: &BTreeMap<String, Vec<u8>>, index: &Index, stem: &str, shape: (usize, usize)) -> Result<Array2<f64>> {
    let name = blob_name(stem);
    let expected = index.blobs.get(&name).ok_or_else(|| corrupt(format!("index lacks {name}")))?;
    let bytes = files.get(&name).ok_or_else(|| corrupt(format!("missing {name}")))?;
    if &sha256_hex(bytes) != expected {
        return Err(corrupt(format!("checksum mismatch in {name}")));
    }
    let a = decode_mksm(bytes).map_err(|e| corrupt(format!("{name}: {e}")))?;
    if a.dim() != shape {
        return Err(corrupt(format!("{name} is {:?}, expected {shape:?}", a.dim())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(corrupt(format!("{name} holds non-finite values")));
    }
    Ok(a)
}

fn as_index(v: f64, bound: usize) -> Option<usize> {
    (v >= 0.0 && v.fract() == 0.0 && v < bound as f64).then_some(v as usize)
}

/// Inverse of [`encode_container`].
pub fn decode_container(files: &BTreeMap<String, Vec<u8>>) -> Result<TrainedModel> {
    let raw = files.get(INDEX_FILE).ok_or_else(|| corrupt("missing manifest.json"))?;
    let index: Index = serde_json::from_slice(raw).map_err(|e| corrupt(format!("manifest.json: {e}")))?;
    if index.format != FORMAT || index.version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported container {} v{}", index.format, index.version)));
    }
    index.config.validate().map_err(|e| corrupt(format!("config: {e}")))?;
    let n = index.n;
    let r = index.beta.len();
    if index.gammas.len() != r || index.scales.len() != r || index.source_ids.len() != r {
        return Err(corrupt("per-kernel metadata lengths disagree"));
    }
    if index.k_atoms.len() > index.requested_levels || index.k_atoms.iter().any(|&k| k == 0 || k > n) {
        return Err(corrupt("bad level sizes"));
    }
    let beta = KernelWeights::new(Array1::from(index.beta.clone())).map_err(|e| corrupt(format!("beta: {e}")))?;
    let kernel = blob(files, &index, "kernel", (n, n))?;
    if fingerprint(kernel.view()) != index.kernel_fingerprint {
        return Err(corrupt("kernel fingerprint mismatch"));
    }
    let mut levels = Vec::with_capacity(index.k_atoms.len());
    for (s, &k) in index.k_atoms.iter().enumerate() {
        let a = blob(files, &index, &format!("level{s}_a"), (n, 3))?;
        let d = blob(files, &index, &format!("level{s}_d"), (1, k))?;
        let z = blob(files, &index, &format!("level{s}_z"), (n, 1))?;
        let mut membership = Vec::with_capacity(n);
        for i in 0..n {
            let atom = as_index(z[[i, 0]], k).ok_or_else(|| corrupt(format!("level {s}: bad atom index")))?;
            if as_index(a[[i, 0]], n) != Some(i) || a[[i, 1]] != z[[i, 0]] {
                return Err(corrupt(format!("level {s}: coefficient triplets disagree with memberships")));
            }
            membership.push(atom);
        }
        levels.push(LevelState {
            membership,
            coeff: a.column(2).to_vec(),
            d: d.row(0).to_owned(),
        });
    }
    let code_len: usize = index.k_atoms.iter().sum();
    let codes = blob(files, &index, "codes", (code_len, n))?;
    let w = blob(files, &index, "graph_w", (n, n))?;
    let w_prime = blob(files, &index, "graph_w_prime", (n, n))?;
    Ok(TrainedModel {
        config: index.config,
        beta,
        mld: MultilevelDictionary {
            levels,
            n,
            requested_levels: index.requested_levels,
            kernel_fingerprint: index.kernel_fingerprint,
            collapse: index.collapse,
            training_codes: codes,
        },
        kernel,
        gammas: index.gammas,
        scales: index.scales,
        source_ids: index.source_ids,
        graphs: AffinityGraphs {
            w,
            w_prime,
            mode: index.graph_mode,
        },
        rounds: index.rounds,
        warnings: index.warnings,
    })
}

/// Writes every blob, then the index, each atomically.
pub fn save_model(m: &TrainedModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut files = encode_container(m)?;
    let index = files.remove(INDEX_FILE).expect("index is always written");
    for (name, bytes) in &files {
        atomic_write(&dir.join(name), bytes)?;
    }
    atomic_write(&dir.join(INDEX_FILE), &index)
}

pub fn load_model(dir: &Path) -> Result<TrainedModel> {
    let index_bytes = std::fs::read(dir.join(INDEX_FILE)).map_err(|e| corrupt(format!("manifest.json: {e}")))?;
    let index: Index = serde_json::from_slice(&index_bytes).map_err(|e| corrupt(format!("manifest.json: {e}")))?;
    let mut files = BTreeMap::new();
    for name in index.blobs.keys() {
        if name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(corrupt(format!("bad blob name {name:?}")));
        }
        let bytes = std::fs::read(dir.join(name)).map_err(|e| corrupt(format!("{name}: {e}")))?;
        files.insert(name.clone(), bytes);
    }
    files.insert(INDEX_FILE.into(), index_bytes);
    decode_container(&files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelMatrix, KernelSet};
    use crate::kmld::AtomCounts;
    use crate::pipeline::train_supervised;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> TrainedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 16;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let pts = Array2::from_shape_fn((n, 3), |(i, c)| rng.gen_range(-1.0..1.0) + if c == 0 { labels[i] as f64 * 2.0 } else { 0.0 });
        let lin = pts.dot(&pts.t());
        let ks = KernelSet::new(vec![
            KernelMatrix::new(lin.clone(), "lin").unwrap(),
            KernelMatrix::new(lin.mapv(|v| (v / 4.0).exp()), "exp").unwrap(),
        ])
        .unwrap()
        .normalized()
        .unwrap();
        let cfg = TrainingConfig {
            s_levels: 3,
            k_atoms: AtomCounts::Uniform(2),
            d: 4,
            tau: 3,
            tau_prime: 4,
            ..TrainingConfig::oxford()
        };
        train_supervised(&ks, &labels, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_lossless_and_stable() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        save_model(&m, dir.path()).unwrap();
        let loaded = load_model(dir.path()).unwrap();
        assert_eq!(loaded, m);
        let first = encode_container(&m).unwrap();
        let second = encode_container(&loaded).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn loaded_model_reproduces_training_codes() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        save_model(&m, dir.path()).unwrap();
        let loaded = load_model(dir.path()).unwrap();
        let enc = loaded.encoder().unwrap();
        for i in 0..loaded.mld.n {
            let code = enc.encode(loaded.kernel.row(i)).unwrap().to_dense();
            for (a, b) in code.iter().zip(loaded.codes().column(i)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn tampering_is_detected() {
        let m = model();
        let files = encode_container(&m).unwrap();
        let mut bad = files.clone();
        let blob = bad.get_mut("codes.mksm").unwrap();
        let last = blob.len() - 1;
        blob[last] ^= 1;
        assert!(matches!(decode_container(&bad), Err(Error::CorruptContainer(_))));

        let mut missing = files.clone();
        missing.remove("level0_d.mksm");
        assert!(matches!(decode_container(&missing), Err(Error::CorruptContainer(_))));

        let mut index = files;
        let text = String::from_utf8(index[INDEX_FILE].clone()).unwrap();
        index.insert(INDEX_FILE.into(), text.replacen("\"n\": 16", "\"n\": 15", 1).into_bytes());
        assert!(matches!(decode_container(&index), Err(Error::CorruptContainer(_))));
    }
}
