//! Planted-data pipeline runs: supervised kernel selection and unsupervised
//! clustering.

use mksr::embedding::GraphMode;
use mksr::eval::{score, spectral_cluster, train_linear_classifier, Task};
use mksr::kmld::AtomCounts;
use mksr::pipeline::{final_code_graph, train_supervised, train_unsupervised, TrainingConfig};
use mksr::synth::{three_clusters, two_kernel_planted};

fn small_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        s_levels: 4,
        k_atoms: AtomCounts::Uniform(8),
        d: 10,
        tau: 5,
        tau_prime: 10,
        seed,
        ..TrainingConfig::oxford()
    }
}

#[test]
fn informative_kernel_is_selected() {
    let seeds: u64 = std::env::var("PLANTED_SEEDS").ok().and_then(|v| v.parse().ok()).unwrap_or(3);
    let mut accs = Vec::new();
    for seed in 0..seeds {
        let data = two_kernel_planted(150, 30, seed);
        let ks = data.kernel_set().unwrap();
        let model = train_supervised(&ks, &data.train_labels, &small_config(seed)).unwrap();
        let beta = model.beta.as_array().clone();
        let rows = model.cross_rows(&data.cross_blocks()).unwrap();
        let test_codes = model.encode_rows(rows.view()).unwrap();
        let clf = train_linear_classifier(model.codes(), &data.train_labels, 1e-3).unwrap();
        let pred = clf.predict(test_codes.t()).unwrap();
        let acc = score(&pred, &data.test_labels, Task::Classify).unwrap().accuracy;
        eprintln!("seed {seed} beta {beta} acc {acc}");
        assert!(beta[0] > beta[1], "seed {seed}: {beta}");
        accs.push(acc);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!(mean >= 0.9, "{accs:?}");
}

#[test]
fn planted_clusters_are_recovered() {
    for seed in 0..2 {
        let data = three_clusters(30, seed);
        let ks = data.kernel_set().unwrap();
        // one atom per cluster; finer dictionaries split clusters in the code graph
        let cfg = TrainingConfig {
            s_levels: 2,
            k_atoms: AtomCounts::Uniform(3),
            mode: GraphMode::Unsupervised,
            ..small_config(seed)
        };
        let model = train_unsupervised(&ks, &cfg).unwrap();
        let w = final_code_graph(model.codes(), cfg.tau);
        let pred = spectral_cluster(w.view(), 3, seed, Some(model.codes().t())).unwrap();
        let report = score(&pred, &data.train_labels, Task::Cluster).unwrap();
        assert!(report.accuracy >= 0.9 && report.nmi >= 0.75, "seed {seed}: {report:?}");
    }
}
