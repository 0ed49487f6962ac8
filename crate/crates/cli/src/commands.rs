//! Subcommand bodies. Each returns the text report printed on success.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use sha2::{Digest, Sha256};

use mksr::embedding::GraphMode;
use mksr::eval::{score, spectral_cluster, train_linear_classifier, MetricReport, Task};
use mksr::io::config::config_to_string;
use mksr::io::dataset::{write_dataset, write_manifest};
use mksr::io::labels::labels_to_string;
use mksr::io::manifest::{KernelParams, MatrixEntry, MatrixRole};
use mksr::io::matrix::atomic_write;
use mksr::io::{load_model, parse_config, parse_labels, read_matrix, save_model, write_matrix, Manifest};
use mksr::kernel::{kernel_from_distances, validate_kernel, DistanceMatrix, GammaPolicy, KernelSet};
use mksr::pipeline::{final_code_graph, train_supervised, train_unsupervised, TrainedModel, TrainingConfig};
use mksr::synth;

use crate::{
    EncodeArgs, EvalClassifyArgs, EvalClusterArgs, InspectArgs, MakeKernelArgs, Mode, SynthArgs, SynthKind,
    TrainArgs, ValidateArgs,
};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<mksr::Error> for Failure {
    fn from(e: mksr::Error) -> Self {
        Self {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

type Outcome = Result<String, Failure>;

fn repro_line(params: &str, seed: Option<u64>) -> String {
    let hash = hex::encode(Sha256::digest(params.as_bytes()));
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!("repro config_sha256={hash} seed={seed} version={}\n", env!("CARGO_PKG_VERSION"))
}

fn model_repro(model: &TrainedModel) -> Result<String, Failure> {
    Ok(repro_line(&config_to_string(&model.config)?, Some(model.config.seed)))
}

fn read_labels_file(path: &Path) -> Result<Vec<usize>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    parse_labels(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn load_manifest(path: &Path) -> Result<(Manifest, PathBuf), Failure> {
    Manifest::load(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn make_kernel(a: MakeKernelArgs) -> Outcome {
    let d = DistanceMatrix::new(read_matrix(&a.distances)?)?;
    let policy = a.gamma.map_or(GammaPolicy::MeanInverse, GammaPolicy::Explicit);
    let k = kernel_from_distances(&d, policy, "kernel")?;
    let gamma = k.gamma().expect("built from distances");
    let mut ks = KernelSet::with_tolerance(vec![k], a.psd_tol)?;
    if !a.no_normalize {
        ks = ks.normalized()?;
    }
    let k = ks.get(0);
    write_matrix(&a.out, k.values())?;
    let mut out = String::new();
    let _ = writeln!(out, "n: {}", k.n());
    let _ = writeln!(out, "gamma: {gamma:e}");
    let _ = writeln!(out, "scale: {:e}", k.scale());
    let _ = writeln!(out, "written: {}", a.out.display());
    let params = format!("make-kernel gamma={gamma:?} normalize={} psd_tol={:?}", !a.no_normalize, a.psd_tol);
    out += &repro_line(&params, None);
    Ok(out)
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

pub fn validate(a: ValidateArgs) -> Outcome {
    let k = read_matrix(&a.kernel)?;
    if k.nrows() != k.ncols() {
        return Err(mksr::Error::NotSquare {
            rows: k.nrows(),
            cols: k.ncols(),
        }
        .into());
    }
    let r = validate_kernel(k.view(), a.psd_tol);
    let mut out = String::new();
    let _ = writeln!(out, "n: {}", r.n);
    let _ = writeln!(out, "finite: {}", pass(r.finite));
    let _ = writeln!(out, "symmetric: {} (max defect {:e})", pass(r.symmetric), r.symmetry_defect);
    let _ = writeln!(
        out,
        "PSD: {} (eigenvalues {:e} .. {:e})",
        pass(r.psd),
        r.min_eigenvalue,
        r.max_eigenvalue
    );
    if r.psd && r.min_eigenvalue < 0.0 {
        let _ = writeln!(out, "note: small negative eigenvalue is clipped when the kernel is used");
    }
    out += &repro_line(&format!("validate psd_tol={:?}", a.psd_tol), None);
    if r.passed() {
        Ok(out)
    } else {
        print!("{out}");
        Err(Failure::data(format!("{} failed kernel validation", a.kernel.display())))
    }
}

pub fn train(a: TrainArgs) -> Outcome {
    let (mut manifest, base) = load_manifest(&a.manifest)?;
    if a.no_normalize {
        manifest.kernel.normalize = false;
    }
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?
        }
        None => TrainingConfig::oxford(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.mode = match a.mode {
        Mode::Supervised => GraphMode::Supervised,
        Mode::Unsupervised => GraphMode::Unsupervised,
    };
    cfg.validate()?;
    let ks = manifest.kernel_set(&base)?;
    let model = match a.mode {
        Mode::Supervised => {
            let labels = manifest
                .read_labels(&base)?
                .ok_or_else(|| Failure::data("supervised training needs labels in the manifest"))?;
            train_supervised(&ks, &labels, &cfg)?
        }
        Mode::Unsupervised => train_unsupervised(&ks, &cfg)?,
    };
    save_model(&model, &a.out)?;
    let mut out = weights_block(&model);
    out += &model.objective_log();
    for w in &model.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let _ = writeln!(out, "model: {}", a.out.display());
    out += &model_repro(&model)?;
    Ok(out)
}

fn weights_block(model: &TrainedModel) -> String {
    let mut out = String::new();
    for (i, id) in model.source_ids.iter().enumerate() {
        let gamma = model.gammas[i].map_or_else(|| "-".to_string(), |g| format!("{g:e}"));
        let _ = writeln!(
            out,
            "kernel {id}: beta {:.6} gamma {gamma} scale {:e}",
            model.beta.as_array()[i],
            model.scales[i]
        );
    }
    out
}

fn encode_blocks(model: &TrainedModel, blocks: &[Array2<f64>]) -> Result<Array2<f64>, Failure> {
    let views: Vec<ArrayView2<'_, f64>> = blocks.iter().map(|b| b.view()).collect();
    let rows = model.cross_rows(&views)?;
    Ok(model.encode_rows(rows.view())?)
}

fn read_blocks(paths: &[PathBuf]) -> Result<Vec<Array2<f64>>, Failure> {
    paths.iter().map(|p| Ok(read_matrix(p)?)).collect()
}

pub fn encode(a: EncodeArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let codes = encode_blocks(&model, &read_blocks(&a.cross)?)?;
    write_matrix(&a.out, codes.view())?;
    let mut out = String::new();
    let _ = writeln!(out, "samples: {}", codes.nrows());
    let _ = writeln!(out, "code length: {}", codes.ncols());
    let _ = writeln!(out, "written: {}", a.out.display());
    out += &model_repro(&model)?;
    Ok(out)
}

fn write_outputs(report: &MetricReport, csv: Option<&Path>, predictions: Option<(&Path, &[usize])>) -> Result<(), Failure> {
    if let Some(p) = csv {
        atomic_write(p, report.to_csv().as_bytes())?;
    }
    if let Some((p, pred)) = predictions {
        atomic_write(p, labels_to_string(pred).as_bytes())?;
    }
    Ok(())
}

pub fn eval_classify(a: EvalClassifyArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let manifest = a.manifest.as_deref().map(load_manifest).transpose()?;
    let labels = match (&a.labels, &manifest) {
        (Some(p), _) => read_labels_file(p)?,
        (None, Some((m, base))) => m
            .read_labels(base)?
            .ok_or_else(|| Failure::data("manifest has no training labels"))?,
        (None, None) => return Err(Failure::usage("training labels needed: pass --labels or --manifest")),
    };
    let test_labels = match (&a.test_labels, &manifest) {
        (Some(p), _) => read_labels_file(p)?,
        (None, Some((m, base))) => m
            .read_test_labels(base)?
            .ok_or_else(|| Failure::data("manifest has no test labels"))?,
        (None, None) => return Err(Failure::usage("test labels needed: pass --test-labels or --manifest")),
    };
    let blocks = match (a.cross.is_empty(), &manifest) {
        (false, _) => read_blocks(&a.cross)?,
        (true, Some((m, base))) => m.cross_blocks(base)?,
        (true, None) => return Err(Failure::usage("cross matrices needed: pass --cross or --manifest")),
    };
    let test_codes = encode_blocks(&model, &blocks)?;
    if test_codes.nrows() != test_labels.len() {
        return Err(mksr::Error::LengthMismatch {
            left: test_codes.nrows(),
            right: test_labels.len(),
        }
        .into());
    }
    let clf = train_linear_classifier(model.codes(), &labels, a.ridge)?;
    let pred = clf.predict(test_codes.t())?;
    let report = score(&pred, &test_labels, Task::Classify)?;
    write_outputs(&report, a.csv.as_deref(), a.predictions.as_deref().map(|p| (p, pred.as_slice())))?;
    let mut out = report.to_key_value();
    let _ = writeln!(out, "ridge={}", a.ridge);
    out += &model_repro(&model)?;
    Ok(out)
}

pub fn eval_cluster(a: EvalClusterArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let truth = match (&a.labels, &a.manifest) {
        (Some(p), _) => Some(read_labels_file(p)?),
        (None, Some(p)) => {
            let (m, base) = load_manifest(p)?;
            m.read_labels(&base)?
        }
        (None, None) => None,
    };
    let k = match (a.clusters, &truth) {
        (Some(k), _) => k,
        (None, Some(t)) => t.iter().max().map_or(0, |m| m + 1),
        (None, None) => return Err(Failure::usage("pass --clusters or ground-truth labels")),
    };
    let codes = model.codes();
    let w = final_code_graph(codes, model.config.tau);
    let pred = spectral_cluster(w.view(), k, model.config.seed, Some(codes.t()))?;
    let mut out = String::new();
    let _ = writeln!(out, "clusters={k}");
    match &truth {
        Some(t) => {
            let report = score(&pred, t, Task::Cluster)?;
            write_outputs(&report, a.csv.as_deref(), a.predictions.as_deref().map(|p| (p, pred.as_slice())))?;
            out += &report.to_key_value();
        }
        None => {
            if a.csv.is_some() {
                return Err(Failure::usage("--csv needs ground-truth labels"));
            }
            if let Some(p) = &a.predictions {
                atomic_write(p, labels_to_string(&pred).as_bytes())?;
            }
        }
    }
    out += &model_repro(&model)?;
    Ok(out)
}

/// Linear kernel `Y^T Y` of planted lines, with line ids as labels.
fn write_lines(dir: &Path, seed: u64) -> Result<PathBuf, Failure> {
    let (y, _, labels) = synth::planted_lines(10, 4, 200, 0.05, seed);
    std::fs::create_dir_all(dir).map_err(mksr::Error::from)?;
    write_matrix(&dir.join("linear.mksm"), y.t().dot(&y).view())?;
    atomic_write(&dir.join("train_labels.txt"), labels_to_string(&labels).as_bytes())?;
    let manifest = Manifest {
        name: "lines".into(),
        matrices: vec![MatrixEntry {
            path: "linear.mksm".into(),
            role: MatrixRole::Kernel,
            source_id: "linear".into(),
            cross_path: None,
            gamma: None,
        }],
        labels: Some("train_labels.txt".into()),
        test_labels: None,
        kernel: KernelParams::default(),
    };
    Ok(write_manifest(&manifest, dir)?)
}

pub fn synth(a: SynthArgs) -> Outcome {
    let seed = a.seed;
    let (name, path) = match a.kind {
        SynthKind::Gaussian => ("gaussian", write_dataset(&synth::gaussian_dataset(3, 40, 10, 5, 2.5, seed), &a.out, "gaussian")?),
        SynthKind::Lines => ("lines", write_lines(&a.out, seed)?),
        SynthKind::TwoKernelPlanted => (
            "two-kernel-planted",
            write_dataset(&synth::two_kernel_planted(150, 30, seed), &a.out, "two-kernel-planted")?,
        ),
        SynthKind::ThreeCluster => ("three-cluster", write_dataset(&synth::three_clusters(30, seed), &a.out, "three-cluster")?),
        SynthKind::Surrogate => (
            "surrogate",
            write_dataset(&synth::multiclass_surrogate(17, 20, 5, 7, seed), &a.out, "surrogate")?,
        ),
    };
    let mut out = String::new();
    let _ = writeln!(out, "manifest: {}", path.display());
    out += &repro_line(&format!("synth kind={name}"), Some(seed));
    Ok(out)
}

pub fn inspect(a: InspectArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let mut out = String::new();
    let _ = writeln!(out, "samples: {}", model.mld.n);
    let mode = match model.graphs.mode {
        GraphMode::Supervised => "supervised",
        GraphMode::Unsupervised => "unsupervised",
    };
    let _ = writeln!(out, "mode: {mode}");
    out += &weights_block(&model);
    let sizes: Vec<String> = model.mld.k_atoms().iter().map(|k| k.to_string()).collect();
    let _ = writeln!(
        out,
        "levels: {} of {} requested, atoms [{}]",
        model.mld.s_levels(),
        model.mld.requested_levels,
        sizes.join(", ")
    );
    if let Some(c) = &model.mld.collapse {
        let _ = writeln!(out, "collapse: level {} ({})", c.level, c.reason);
    }
    let _ = writeln!(out, "kernel fingerprint: {}", model.mld.kernel_fingerprint);
    out += &model.objective_log();
    for w in &model.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out += &model_repro(&model)?;
    Ok(out)
}
