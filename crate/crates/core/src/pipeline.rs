//! Outer training loops.
//!
//! Each round tunes the kernel weights on the current affinity graphs,
//! retrains the multilevel dictionary on the resulting ensemble kernel,
//! codes the training set, and rebuilds the graphs from code correlations.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::embedding::{
    alternate_u_beta, build_slices, init_affinities, init_affinities_unsupervised, max_symmetrize, simplex_change,
    top_indices, AffinityGraphs, GraphMode,
};
use crate::error::{Error, Result};
use crate::kernel::{cross_ensemble_rows, ensemble, KernelSet, KernelWeights};
use crate::kmld::{train_kmld, AtomCounts, Encoder, KmldConfig, MultilevelDictionary};
use crate::linalg::derive_seed;

pub const BETA_TOL: f64 = 1e-4;
pub const OUTER_ROUNDS_MAX: usize = 5;
/// Within-class scatter ridge of the weight learning, relative to the
/// scatter's mean diagonal.
pub const EMBEDDING_RIDGE: f64 = 0.1;

fn default_s_levels() -> usize {
    8
}
fn default_k_atoms() -> AtomCounts {
    AtomCounts::Uniform(16)
}
fn default_d() -> usize {
    100
}
fn default_tau() -> usize {
    8
}
fn default_tau_prime() -> usize {
    20
}
fn default_inner_l() -> usize {
    10
}
fn default_outer_rounds_max() -> usize {
    OUTER_ROUNDS_MAX
}
fn default_beta_tol() -> f64 {
    BETA_TOL
}
fn default_embedding_ridge() -> f64 {
    EMBEDDING_RIDGE
}
fn default_mode() -> GraphMode {
    GraphMode::Supervised
}

/// Training parameters. Missing keys take the Oxford defaults
/// (`S = 8`, `K = 16`, `tau = 8`, `tau' = 20`, `d = 100`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_s_levels")]
    pub s_levels: usize,
    #[serde(default = "default_k_atoms")]
    pub k_atoms: AtomCounts,
    /// Embedding dimension, capped at `N - 1` during training.
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_tau")]
    pub tau: usize,
    #[serde(default = "default_tau_prime")]
    pub tau_prime: usize,
    #[serde(default = "default_inner_l")]
    pub inner_l: usize,
    #[serde(default = "default_outer_rounds_max")]
    pub outer_rounds_max: usize,
    #[serde(default = "default_beta_tol")]
    pub beta_tol: f64,
    #[serde(default = "default_embedding_ridge")]
    pub embedding_ridge: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: GraphMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::oxford()
    }
}

impl TrainingConfig {
    pub fn oxford() -> Self {
        Self {
            s_levels: default_s_levels(),
            k_atoms: default_k_atoms(),
            d: default_d(),
            tau: default_tau(),
            tau_prime: default_tau_prime(),
            inner_l: default_inner_l(),
            outer_rounds_max: OUTER_ROUNDS_MAX,
            beta_tol: BETA_TOL,
            embedding_ridge: EMBEDDING_RIDGE,
            seed: 0,
            mode: GraphMode::Supervised,
        }
    }

    /// Same as [`oxford`](Self::oxford) but with `d = 150`.
    pub fn caltech() -> Self {
        Self {
            d: 150,
            ..Self::oxford()
        }
    }

    /// Looks up a bundled configuration by name.
    pub fn named(name: &str) -> Option<Self> {
        match name {
            "oxford" => Some(Self::oxford()),
            "caltech" => Some(Self::caltech()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("s_levels", self.s_levels),
            ("d", self.d),
            ("tau", self.tau),
            ("tau_prime", self.tau_prime),
            ("inner_l", self.inner_l),
            ("outer_rounds_max", self.outer_rounds_max),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        self.k_atoms.resolve(self.s_levels)?;
        if !(self.beta_tol > 0.0 && self.beta_tol.is_finite()) {
            return Err(Error::InvalidParameter("beta_tol must be positive".into()));
        }
        if !(self.embedding_ridge >= 0.0 && self.embedding_ridge.is_finite()) {
            return Err(Error::InvalidParameter("embedding_ridge must be nonnegative".into()));
        }
        Ok(())
    }

    fn kmld_config(&self, round: usize) -> KmldConfig {
        let mut cfg = KmldConfig::new(self.k_atoms.clone(), self.s_levels, derive_seed(self.seed, round as u64));
        cfg.inner_iters = self.inner_l;
        cfg
    }
}

/// Summary of one outer round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    /// Simplex-normalized weights used for the ensemble.
    pub beta: Vec<f64>,
    pub trace_ratio: f64,
    pub mean_energy: f64,
    pub embedding_rounds: usize,
}

impl RoundLog {
    pub fn line(&self) -> String {
        let beta: Vec<String> = self.beta.iter().map(|b| format!("{b:.6}")).collect();
        format!(
            "round {} beta [{}] ratio {:.6e} energy {:.6e}",
            self.round,
            beta.join(", "),
            self.trace_ratio,
            self.mean_energy
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: TrainingConfig,
    /// Simplex-normalized kernel weights.
    pub beta: KernelWeights,
    pub mld: MultilevelDictionary,
    /// Ensemble Gram matrix the dictionary was trained on.
    pub kernel: Array2<f64>,
    pub gammas: Vec<Option<f64>>,
    pub scales: Vec<f64>,
    pub source_ids: Vec<String>,
    /// Graphs used by the last embedding step.
    pub graphs: AffinityGraphs,
    pub rounds: Vec<RoundLog>,
    pub warnings: Vec<String>,
}

impl TrainedModel {
    /// Training codes, `sum_s K_s x N`.
    pub fn codes(&self) -> ArrayView2<'_, f64> {
        self.mld.training_codes.view()
    }

    pub fn encoder(&self) -> Result<Encoder<'_>> {
        Encoder::new(&self.mld, self.kernel.view())
    }

    /// Turns raw test-by-train blocks (distances for kernels built from
    /// distances, kernel values otherwise) into ensemble cross rows, using
    /// the training bandwidths, scales and weights.
    pub fn cross_rows(&self, blocks: &[ArrayView2<'_, f64>]) -> Result<Array2<f64>> {
        if blocks.len() != self.gammas.len() {
            return Err(Error::DimensionMismatch {
                context: "cross-kernel blocks",
                expected: self.gammas.len(),
                found: blocks.len(),
            });
        }
        let mut kernels = Vec::with_capacity(blocks.len());
        for ((block, gamma), &scale) in blocks.iter().zip(&self.gammas).zip(&self.scales) {
            if block.ncols() != self.mld.n {
                return Err(Error::DimensionMismatch {
                    context: "cross-kernel columns",
                    expected: self.mld.n,
                    found: block.ncols(),
                });
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
            kernels.push(match gamma {
                Some(g) => {
                    if block.iter().any(|&v| v < 0.0) {
                        return Err(Error::InvalidDistances("negative cross distance".into()));
                    }
                    block.mapv(|v| (-g * v).exp() * scale)
                }
                None => block.mapv(|v| v * scale),
            });
        }
        let views: Vec<_> = kernels.iter().map(|k| k.view()).collect();
        cross_ensemble_rows(&views, &self.beta)
    }

    /// Codes of samples given their ensemble cross rows (`T x N`), one
    /// code per row of the result (`T x sum K_s`).
    pub fn encode_rows(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let enc = self.encoder()?;
        let mut out = Array2::zeros((rows.nrows(), self.mld.code_len()));
        for (i, row) in rows.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&enc.encode(row)?.to_dense());
        }
        Ok(out)
    }

    pub fn objective_log(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            let _ = writeln!(out, "{}", r.line());
        }
        out
    }
}

/// Affinities from code correlations: `w_ij = |a_i^T a_j|` over the `tau`
/// most correlated same-class samples of `i`, `w'_ij` likewise over the
/// `tau'` most correlated other-class samples; both max-symmetrized.
pub fn update_affinities_from_codes(
    codes: ArrayView2<'_, f64>,
    labels: &[usize],
    tau: usize,
    tau_prime: usize,
) -> Result<AffinityGraphs> {
    let n = codes.ncols();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "code labels",
            expected: n,
            found: labels.len(),
        });
    }
    let g = codes.t().dot(&codes).mapv(f64::abs);
    let mut w = Array2::zeros((n, n));
    let mut wp = Array2::zeros((n, n));
    for i in 0..n {
        let row = g.row(i);
        for j in top_indices(row, tau, |j| j != i && labels[j] == labels[i]) {
            w[[i, j]] = g[[i, j]];
        }
        for j in top_indices(row, tau_prime, |j| labels[j] != labels[i]) {
            wp[[i, j]] = g[[i, j]];
        }
    }
    Ok(AffinityGraphs {
        w: max_symmetrize(w.view()),
        w_prime: max_symmetrize(wp.view()),
        mode: GraphMode::Supervised,
    })
}

/// `|A^T A|` keeping the `tau` largest off-diagonal entries of every row,
/// then max-symmetrized.
pub fn final_code_graph(codes: ArrayView2<'_, f64>, tau: usize) -> Array2<f64> {
    let n = codes.ncols();
    let g = codes.t().dot(&codes).mapv(f64::abs);
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in top_indices(g.row(i), tau, |j| j != i) {
            w[[i, j]] = g[[i, j]];
        }
    }
    max_symmetrize(w.view())
}

/// Discriminative training with class labels.
pub fn train_supervised(ks: &KernelSet, labels: &[usize], cfg: &TrainingConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if labels.len() != ks.n() {
        return Err(Error::LengthMismatch {
            left: ks.n(),
            right: labels.len(),
        });
    }
    let classes = labels.iter().copied().collect::<std::collections::BTreeSet<_>>();
    if classes.len() < 2 {
        return Err(Error::ClassTooSmall("supervised training needs at least two classes".into()));
    }
    let graphs = init_affinities(ks, labels, cfg.tau, cfg.tau_prime)?;
    run(ks, graphs, cfg, |codes| update_affinities_from_codes(codes, labels, cfg.tau, cfg.tau_prime))
}

/// Training without labels: `W` is a `tau`-sparsified code graph and the
/// denominator graph is its degree matrix.
pub fn train_unsupervised(ks: &KernelSet, cfg: &TrainingConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let graphs = init_affinities_unsupervised(ks, cfg.tau)?;
    run(ks, graphs, cfg, |codes| Ok(AffinityGraphs::unsupervised(final_code_graph(codes, cfg.tau))))
}

fn run(
    ks: &KernelSet,
    mut graphs: AffinityGraphs,
    cfg: &TrainingConfig,
    update: impl Fn(ArrayView2<'_, f64>) -> Result<AffinityGraphs>,
) -> Result<TrainedModel> {
    let n = ks.n();
    let mut warnings = Vec::new();
    let d = if cfg.d >= n {
        let capped = n.saturating_sub(1).max(1);
        warnings.push(format!("d = {} capped at {capped} (N = {n})", cfg.d));
        capped
    } else {
        cfg.d
    };
    let slices = build_slices(ks);
    let mut beta = KernelWeights::uniform(ks.len());
    let mut rounds = Vec::new();
    let mut last = None;
    for round in 0..cfg.outer_rounds_max {
        let emb = alternate_u_beta(&slices, &graphs, d, &beta, cfg.embedding_ridge)?;
        if !emb.converged {
            warnings.push(format!(
                "round {round}: weight alternation stopped after {} rounds without converging",
                emb.rounds
            ));
        }
        let next = emb.beta.to_simplex();
        let change = simplex_change(beta.as_array().view(), next.as_array().view());
        beta = next;
        let k = ensemble(ks, &beta)?.values;
        let mld = train_kmld(k.view(), &cfg.kmld_config(round))?;
        if let Some(c) = &mld.collapse {
            warnings.push(format!(
                "round {round}: dictionary stopped at level {} ({})",
                c.level, c.reason
            ));
        }
        let mean_energy = mean_energy(&mld, k.view())?;
        rounds.push(RoundLog {
            round,
            beta: beta.as_array().to_vec(),
            trace_ratio: emb.ratio,
            mean_energy,
            embedding_rounds: emb.rounds,
        });
        let done = change < cfg.beta_tol || round + 1 == cfg.outer_rounds_max;
        if done && change >= cfg.beta_tol {
            warnings.push(format!("weights still moving after {} rounds (change {change:.3e})", round + 1));
        }
        if done {
            last = Some((mld, k));
            break;
        }
        let next_graphs = update(mld.training_codes.view())?;
        if next_graphs.w.sum() <= 0.0 || next_graphs.w_prime.sum() <= 0.0 {
            // codes with no correlation across the graph leave nothing to reweight
            warnings.push(format!("round {round}: code graphs carry no weight; stopping early"));
            last = Some((mld, k));
            break;
        }
        graphs = next_graphs;
    }
    let (mld, kernel) = last.expect("at least one round runs");
    Ok(TrainedModel {
        config: cfg.clone(),
        beta,
        mld,
        kernel,
        gammas: ks.kernels().iter().map(|k| k.gamma()).collect(),
        scales: ks.kernels().iter().map(|k| k.scale()).collect(),
        source_ids: ks.kernels().iter().map(|k| k.source_id().to_string()).collect(),
        graphs,
        rounds,
        warnings,
    })
}

fn mean_energy(mld: &MultilevelDictionary, k: ArrayView2<'_, f64>) -> Result<f64> {
    let enc = Encoder::new(mld, k)?;
    let n = k.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let code = enc.encode(k.row(i))?;
        total += enc.reconstruction_energy(k[[i, i]], k.row(i), &code, enc.s_levels())?;
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelMatrix;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> TrainingConfig {
        TrainingConfig {
            s_levels: 2,
            k_atoms: AtomCounts::Uniform(3),
            d: 3,
            tau: 2,
            tau_prime: 3,
            ..TrainingConfig::oxford()
        }
    }

    fn rbf(points: &Array2<f64>, gamma: f64) -> Array2<f64> {
        let n = points.nrows();
        Array2::from_shape_fn((n, n), |(i, j)| {
            let d = &points.row(i) - &points.row(j);
            (-gamma * d.dot(&d)).exp()
        })
    }

    fn two_class(seed: u64, n_per: usize) -> (KernelSet, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * n_per;
        let labels: Vec<usize> = (0..n).map(|i| i / n_per).collect();
        let pts = Array2::from_shape_fn((n, 2), |(i, c)| {
            let centre = if labels[i] == 0 { -1.5 } else { 1.5 };
            (if c == 0 { centre } else { 0.0 }) + rng.gen_range(-0.5..0.5)
        });
        let noise = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let ks = KernelSet::new(vec![
            KernelMatrix::new(rbf(&pts, 0.5), "signal").unwrap(),
            KernelMatrix::new(rbf(&noise, 0.5), "noise").unwrap(),
        ])
        .unwrap();
        (ks, labels)
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let cfg = TrainingConfig::oxford();
        let text = toml::to_string(&cfg).unwrap();
        let back: TrainingConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(toml::from_str::<TrainingConfig>("s_level = 3").is_err());
        let partial: TrainingConfig = toml::from_str("k_atoms = [4, 2]\ns_levels = 2").unwrap();
        assert_eq!(partial.k_atoms, AtomCounts::PerLevel(vec![4, 2]));
        assert_eq!(partial.tau, 8);
        assert_eq!(TrainingConfig::named("caltech").unwrap().d, 150);
    }

    #[test]
    fn orthogonal_codes_give_empty_graphs() {
        let codes = Array2::eye(4);
        let g = update_affinities_from_codes(codes.view(), &[0, 0, 1, 1], 3, 3).unwrap();
        assert!(g.w.iter().all(|&v| v == 0.0));
        assert!(g.w_prime.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_codes_weigh_squared_norm() {
        let a = array![0.0, 2.0, -1.0];
        let mut codes = Array2::zeros((3, 3));
        codes.column_mut(0).assign(&a);
        codes.column_mut(1).assign(&a);
        codes[[0, 2]] = 5.0;
        let g = update_affinities_from_codes(codes.view(), &[0, 0, 1], 1, 1).unwrap();
        assert_eq!(g.w[[0, 1]], a.dot(&a));
        assert_eq!(g.w[[1, 0]], a.dot(&a));
        // the other-class sample only ever lands in w'
        assert_eq!(g.w.column(2).sum(), 0.0);
    }

    #[test]
    fn different_class_pairs_only_reach_w_prime() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let codes = Array2::from_shape_fn((6, 8), |_| rng.gen_range(-1.0..1.0));
        let labels = [0, 1, 0, 1, 2, 2, 0, 1];
        let g = update_affinities_from_codes(codes.view(), &labels, 7, 7).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if labels[i] != labels[j] {
                    assert_eq!(g.w[[i, j]], 0.0);
                } else {
                    assert_eq!(g.w_prime[[i, j]], 0.0);
                }
            }
        }
    }

    #[test]
    fn code_graph_keeps_top_entries_per_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let codes = Array2::from_shape_fn((5, 9), |_| rng.gen_range(-1.0..1.0));
        let tau = 3;
        let w = final_code_graph(codes.view(), tau);
        let g = codes.t().dot(&codes).mapv(f64::abs);
        // sort-based oracle
        let mut keep = Array2::<f64>::zeros((9, 9));
        for i in 0..9 {
            let mut order: Vec<(f64, usize)> = (0..9).filter(|&j| j != i).map(|j| (g[[i, j]], j)).collect();
            order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            for &(_, j) in order.iter().take(tau) {
                keep[[i, j]] = g[[i, j]];
            }
        }
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(w[[i, j]], keep[[i, j]].max(keep[[j, i]]));
            }
        }
        let full = final_code_graph(codes.view(), 8);
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(full[[i, j]], if i == j { 0.0 } else { g[[i, j]] });
            }
        }
    }

    #[test]
    fn disjoint_supports_give_block_graph() {
        let mut codes = Array2::zeros((4, 6));
        for i in 0..3 {
            codes[[0, i]] = 1.0 + i as f64;
            codes[[1, i]] = 0.5;
        }
        for i in 3..6 {
            codes[[2, i]] = -1.0;
            codes[[3, i]] = i as f64;
        }
        let w = final_code_graph(codes.view(), 5);
        for i in 0..6 {
            for j in 0..6 {
                let same = (i < 3) == (j < 3);
                assert_eq!(w[[i, j]] > 0.0, same && i != j);
            }
        }
    }

    #[test]
    fn identical_codes_give_constant_graph_and_scaled_degree() {
        let a = array![1.0, -2.0, 0.5];
        let n = 5;
        let mut codes = Array2::zeros((3, n));
        for i in 0..n {
            codes.column_mut(i).assign(&a);
        }
        let g = AffinityGraphs::unsupervised(final_code_graph(codes.view(), n - 1));
        let norm2 = a.dot(&a);
        for i in 0..n {
            for j in 0..n {
                let expected = if i == j { 0.0 } else { norm2 };
                assert_eq!(g.w[[i, j]], expected);
            }
            assert_eq!(g.w_prime[[i, i]], (n - 1) as f64 * norm2);
            assert_eq!(g.w_prime[[i, i]], g.w.row(i).sum());
        }
    }

    #[test]
    fn single_kernel_reduces_to_plain_dictionary() {
        let (ks, labels) = two_class(1, 10);
        let single = KernelSet::new(vec![ks.get(0).clone()]).unwrap();
        let cfg = small_config();
        let model = train_supervised(&single, &labels, &cfg).unwrap();
        assert_eq!(model.beta.as_array(), &Array1::from(vec![1.0]));
        let plain = train_kmld(single.get(0).values(), &cfg.kmld_config(0)).unwrap();
        assert_eq!(model.mld, plain);
        assert_eq!(model.codes(), plain.training_codes.view());
    }

    #[test]
    fn training_is_deterministic() {
        let (ks, labels) = two_class(2, 12);
        let cfg = small_config();
        let a = train_supervised(&ks, &labels, &cfg).unwrap();
        let b = train_supervised(&ks, &labels, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn informative_kernel_outweighs_noise() {
        let (ks, labels) = two_class(4, 20);
        let model = train_supervised(&ks, &labels, &small_config()).unwrap();
        let beta = model.beta.as_array();
        assert!(beta[0] > beta[1], "{beta}");
        assert!(model.rounds.len() <= OUTER_ROUNDS_MAX);
        assert!(!model.objective_log().is_empty());
    }

    #[test]
    fn single_class_is_rejected() {
        let (ks, _) = two_class(6, 5);
        let err = train_supervised(&ks, &vec![0; 10], &small_config()).unwrap_err();
        assert!(matches!(err, Error::ClassTooSmall(_)));
    }

    #[test]
    fn unsupervised_graphs_are_laplacian_pairs() {
        let (ks, _) = two_class(7, 10);
        let model = train_unsupervised(
            &ks,
            &TrainingConfig {
                mode: GraphMode::Unsupervised,
                ..small_config()
            },
        )
        .unwrap();
        let g = &model.graphs;
        for i in 0..g.n() {
            assert_eq!(g.w_prime[[i, i]], g.w.row(i).sum());
            for j in 0..g.n() {
                assert_eq!(g.w[[i, j]], g.w[[j, i]]);
            }
        }
    }
}
