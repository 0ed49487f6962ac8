//! End-to-end runs of the `mksr` binary.

use std::path::Path;
use std::process::{Command, Output};

fn mksr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mksr"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL: &str = "s_levels = 3\nk_atoms = 6\nd = 10\ntau = 5\ntau_prime = 10\n";

fn metric(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {report}"))
        .parse()
        .unwrap()
}

#[test]
fn validate_reports_psd() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("id.csv"), "1,0,0\n0,1,0\n0,0,1\n").unwrap();
    let o = mksr(&["validate", "--kernel", "id.csv"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("PSD: pass"));

    std::fs::write(dir.path().join("bad.csv"), "1,2\n2,1\n").unwrap();
    let o = mksr(&["validate", "--kernel", "bad.csv"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("PSD: fail"));
    assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1);
}

#[test]
fn usage_and_data_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mksr(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&mksr(&["train", "--mode", "sideways"], dir.path())), 1);
    assert_eq!(code(&mksr(&["--help"], dir.path())), 0);
    assert_eq!(code(&mksr(&["validate", "--kernel", "missing.mksm"], dir.path())), 2);
    std::fs::write(dir.path().join("junk.mksm"), b"MKSM\x01\0\0\0garbage").unwrap();
    assert_eq!(code(&mksr(&["validate", "--kernel", "junk.mksm"], dir.path())), 2);
    std::fs::write(dir.path().join("c.toml"), "bogus = 1\n").unwrap();
    assert_eq!(code(&mksr(&["synth", "--kind", "gaussian", "--out", "g"], dir.path())), 0);
    let o = mksr(
        &["train", "--mode", "supervised", "--manifest", "g/manifest.json", "--config", "c.toml", "--out", "m"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn planted_pipeline_classifies_held_out_samples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&mksr(&["synth", "--kind", "two-kernel-planted", "--out", "data", "--seed", "3"], d)), 0);
    let o = mksr(&["train", "--mode", "supervised", "--manifest", "data/manifest.json", "--out", "model"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("round 0 beta"));

    let o = mksr(
        &["eval-classify", "--model", "model", "--manifest", "data/manifest.json", "--csv", "m.csv", "--predictions", "p.txt"],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout(&o);
    assert!(metric(&report, "accuracy") >= 0.9, "{report}");
    assert!(report.lines().last().unwrap().starts_with("repro config_sha256="));
    assert!(std::fs::read_to_string(d.join("m.csv")).unwrap().starts_with("metric,value\naccuracy,"));
    assert_eq!(std::fs::read_to_string(d.join("p.txt")).unwrap().lines().count(), 30);

    let o = mksr(
        &["encode", "--model", "model", "--cross", "data/informative_test.mksm", "data/noise_test.mksm", "--out", "codes.mksm"],
        d,
    );
    assert_eq!(code(&o), 0);
    let codes = mksr::io::read_matrix(&d.join("codes.mksm")).unwrap();
    assert_eq!(codes.dim(), (30, 8 * 16));
    // one atom per level
    for row in codes.rows() {
        assert_eq!(row.iter().filter(|v| **v != 0.0).count(), 8);
    }

    let o = mksr(&["encode", "--model", "model", "--cross", "data/informative_test.mksm", "--out", "c.mksm"], d);
    assert_eq!(code(&o), 2);

    let o = mksr(&["inspect", "--model", "model"], d);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("kernel informative: beta"));
    assert!(text.contains("levels: 8 of 8 requested"));
}

#[test]
fn training_twice_gives_identical_containers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();
    assert_eq!(code(&mksr(&["synth", "--kind", "gaussian", "--out", "data", "--seed", "5"], d)), 0);
    for out in ["a", "b"] {
        let o = mksr(
            &["train", "--mode", "supervised", "--manifest", "data/manifest.json", "--config", "small.toml", "--out", out],
            d,
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(d.join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 3);
    for n in &names {
        assert_eq!(std::fs::read(d.join("a").join(n)).unwrap(), std::fs::read(d.join("b").join(n)).unwrap(), "{n:?}");
    }
}

#[test]
fn unsupervised_pipeline_and_cluster_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("u.toml"), "s_levels = 2\nk_atoms = 3\nd = 10\ntau = 5\ntau_prime = 10\n").unwrap();
    assert_eq!(code(&mksr(&["synth", "--kind", "three-cluster", "--out", "data", "--seed", "1"], d)), 0);
    let o = mksr(
        &["train", "--mode", "unsupervised", "--manifest", "data/manifest.json", "--config", "u.toml", "--out", "m"],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = mksr(&["eval-cluster", "--model", "m", "--manifest", "data/manifest.json"], d);
    assert_eq!(code(&o), 0);
    let report = stdout(&o);
    assert!(metric(&report, "accuracy") >= 0.9 && metric(&report, "nmi") >= 0.75, "{report}");
    assert!(report.contains("accuracy_mapping=best_permutation"));

    assert_eq!(code(&mksr(&["eval-cluster", "--model", "m"], d)), 1);
    // more clusters than connected samples is a numerical dead end
    assert_eq!(code(&mksr(&["eval-cluster", "--model", "m", "--clusters", "1000"], d)), 3);

    std::fs::write(d.join("m").join("codes.mksm"), b"tampered").unwrap();
    let o = mksr(&["inspect", "--model", "m"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt"));
}

#[test]
fn make_kernel_writes_normalized_rbf() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("d.csv"), "0,2,4\n2,0,2\n4,2,0\n").unwrap();
    let o = mksr(&["make-kernel", "--distances", "d.csv", "--out", "k.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let k = mksr::io::read_matrix(&d.join("k.csv")).unwrap();
    // gamma = 1 / mean distance = 3/8, diagonal already 1
    assert!((k[[0, 1]] - (-0.75f64).exp()).abs() < 1e-15);
    assert!((k[[0, 2]] - (-1.5f64).exp()).abs() < 1e-15);
    assert_eq!(code(&mksr(&["validate", "--kernel", "k.csv"], d)), 0);
    std::fs::write(d.join("neg.csv"), "0,-1\n-1,0\n").unwrap();
    assert_eq!(code(&mksr(&["make-kernel", "--distances", "neg.csv", "--out", "x.csv"], d)), 2);
}

#[test]
fn synth_kinds_write_loadable_manifests() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["gaussian", "lines", "two-kernel-planted", "three-cluster", "surrogate"] {
        let o = mksr(&["synth", "--kind", kind, "--out", kind], dir.path());
        assert_eq!(code(&o), 0, "{kind}");
        let (m, base) = mksr::io::Manifest::load(&dir.path().join(kind).join("manifest.json")).unwrap();
        assert!(m.kernel_set(&base).is_ok(), "{kind}");
        assert!(stdout(&o).contains("repro config_sha256="));
    }
}
