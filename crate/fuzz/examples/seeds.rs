//! Regenerates the starting corpus under `corpus/<target>/`.
//!
//! `cargo run --example seeds` from the fuzz directory.

use std::fs;
use std::path::Path;

use mksr::io::config::config_to_string;
use mksr::io::dataset::write_dataset;
use mksr::io::labels::labels_to_string;
use mksr::io::matrix::{encode_mksm, to_csv};
use mksr::io::model::encode_container;
use mksr::kmld::AtomCounts;
use mksr::pipeline::{train_supervised, TrainingConfig};
use mksr::synth::gaussian_dataset;
use ndarray::array;

fn put(target: &str, name: &str, bytes: &[u8]) {
    let dir = Path::new("corpus").join(target);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join(name), bytes).unwrap();
}

fn frame(files: &std::collections::BTreeMap<String, Vec<u8>>) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, body) in files {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(body);
    }
    out
}

fn main() {
    let small = array![[1.0, 0.5], [0.5, 1.0]];
    put("decode_mksm", "2x2", &encode_mksm(small.view()));
    put("decode_mksm", "empty", &encode_mksm(ndarray::Array2::<f64>::zeros((0, 3)).view()));
    put("decode_mksm", "csv", to_csv(small.view()).as_bytes());

    put("parse_csv", "2x2", to_csv(small.view()).as_bytes());
    put("parse_csv", "spaced", b" 1 , 2\n3,4 \n\n");
    put("parse_csv", "ragged", b"1,2\n3\n");

    put("parse_labels", "three", labels_to_string(&[0, 1, 2, 1]).as_bytes());
    put("parse_labels", "gap", b"0\n\n5\n");

    let data = gaussian_dataset(2, 6, 2, 3, 2.5, 1);
    let cfg = TrainingConfig {
        s_levels: 2,
        k_atoms: AtomCounts::Uniform(2),
        d: 3,
        tau: 2,
        tau_prime: 4,
        seed: 1,
        ..TrainingConfig::oxford()
    };
    put("parse_config", "oxford", config_to_string(&TrainingConfig::oxford()).unwrap().as_bytes());
    put("parse_config", "small", config_to_string(&cfg).unwrap().as_bytes());
    put("parse_config", "partial", b"s_levels = 3\nk_atoms = [4, 2, 2]\nmode = \"unsupervised\"\n");

    let tmp = std::env::temp_dir().join(format!("mksr-seeds-{}", std::process::id()));
    let manifest = write_dataset(&data, &tmp, "tiny").unwrap();
    put("parse_manifest", "tiny", &fs::read(manifest).unwrap());
    fs::remove_dir_all(&tmp).unwrap();

    let ks = data.kernel_set().unwrap();
    let model = train_supervised(&ks, &data.train_labels, &cfg).unwrap();
    put("decode_container", "tiny", &frame(&encode_container(&model).unwrap()));
}
