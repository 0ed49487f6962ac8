//! Downstream evaluation: spectral clustering of code graphs, a ridge
//! one-vs-rest classifier over sparse codes, and the usual metrics.

use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use pathfinding::prelude::{kuhn_munkres, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::labels::class_count;
use crate::linalg::{derive_seed, max_asymmetry, solve_spd, sym_eigh, symmetrize};

pub const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITER: usize = 300;

/// Renumbers ids by order of first appearance, so equal partitions get
/// equal label vectors.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_once(x: ArrayView2<'_, f64>, k: usize, seed: u64) -> KMeansResult {
    let (n, dim) = x.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // k-means++ seeding
    let mut centroids = Array2::zeros((k, dim));
    centroids.row_mut(0).assign(&x.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(x.row(i), centroids.row(c)));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for i in 0..n {
            let (c, _) = nearest(x.row(i), &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums.row_mut(labels[i]).scaled_add(1.0, &x.row(i));
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            } else {
                // empty cluster: take the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(x.row(a), centroids.row(labels[a]));
                        let db = sq_dist(x.row(b), centroids.row(labels[b]));
                        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                centroids.row_mut(c).assign(&x.row(far));
            }
        }
    }
    balance_ties(x, &centroids, &mut labels);
    let inertia = (0..n).map(|i| sq_dist(x.row(i), centroids.row(labels[i]))).sum();
    KMeansResult {
        labels,
        centroids,
        inertia,
    }
}

/// Points equidistant (to 1e-9 relative) from several nearest centroids
/// go to whichever of those clusters is currently smallest, lowest index
/// first. Inertia is unaffected; symmetric inputs get balanced splits.
fn balance_ties(x: ArrayView2<'_, f64>, centroids: &Array2<f64>, labels: &mut [usize]) {
    let k = centroids.nrows();
    let mut tied: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut counts = vec![0usize; k];
    for i in 0..labels.len() {
        let d: Vec<f64> = centroids.rows().into_iter().map(|c| sq_dist(x.row(i), c)).collect();
        let best = d.iter().copied().fold(f64::INFINITY, f64::min);
        let near: Vec<usize> = (0..k).filter(|&c| d[c] - best <= 1e-9 * (1.0 + best)).collect();
        if near.len() > 1 {
            tied.push((i, near));
        } else {
            counts[labels[i]] += 1;
        }
    }
    for (i, near) in tied {
        let c = *near.iter().min_by_key(|&&c| (counts[c], c)).expect("nonempty");
        labels[i] = c;
        counts[c] += 1;
    }
}

/// Seeded k-means++ with `restarts` independent runs; the lowest inertia
/// wins, earlier restarts winning ties.
pub fn kmeans(x: ArrayView2<'_, f64>, k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("cannot form {k} clusters from {n} points")));
    }
    if !crate::linalg::all_finite(x) {
        return Err(Error::NonFiniteInput);
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans_once(x, k, derive_seed(seed, r as u64));
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Normalized spectral clustering of a nonnegative symmetric graph.
///
/// Vertices with an all-zero row have no spectral embedding. Without
/// `fallback` features they raise `DisconnectedDegenerate`; with them,
/// each such vertex joins the cluster of its nearest connected vertex in
/// the fallback space.
pub fn spectral_cluster(
    w: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    fallback: Option<ArrayView2<'_, f64>>,
) -> Result<Vec<usize>> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::NotSquare { rows: n, cols: w.ncols() });
    }
    if !crate::linalg::all_finite(w) {
        return Err(Error::NonFiniteInput);
    }
    if w.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter("graph weights must be nonnegative".into()));
    }
    if max_asymmetry(w) > 1e-10 * w.iter().fold(1.0f64, |m, v| m.max(v.abs())) {
        return Err(Error::AsymmetricInput { defect: max_asymmetry(w) });
    }
    let w = symmetrize(w);
    let degree: Vec<f64> = w
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| row.sum() - row[i])
        .collect();
    let active: Vec<usize> = (0..n).filter(|&i| degree[i] > 0.0).collect();
    let isolated: Vec<usize> = (0..n).filter(|&i| degree[i] <= 0.0).collect();
    if !isolated.is_empty() && fallback.is_none() {
        return Err(Error::DisconnectedDegenerate);
    }
    if let Some(f) = fallback {
        if f.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "fallback features",
                expected: n,
                found: f.nrows(),
            });
        }
    }
    if k == 0 || k > active.len() {
        return Err(if active.len() < k && k > 0 {
            Error::DisconnectedDegenerate
        } else {
            Error::InvalidParameter("cluster count must be at least 1".into())
        });
    }

    let m = active.len();
    let inv_sqrt: Vec<f64> = active.iter().map(|&i| degree[i].sqrt().recip()).collect();
    let mut norm = Array2::zeros((m, m));
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            if i != j {
                norm[[a, b]] = inv_sqrt[a] * w[[i, j]] * inv_sqrt[b];
            }
        }
    }
    // largest eigenvalues of D^-1/2 W D^-1/2 = smallest of L_sym
    let (_, vecs) = sym_eigh(norm.view())?;
    let mut emb = vecs.slice(s![.., m - k..]).to_owned();
    for mut row in emb.rows_mut() {
        let nr = row.dot(&row).sqrt();
        if nr > 0.0 {
            row /= nr;
        }
    }
    let km = kmeans(emb.view(), k, seed, KMEANS_RESTARTS)?;
    let mut labels = vec![0usize; n];
    for (a, &i) in active.iter().enumerate() {
        labels[i] = km.labels[a];
    }
    if let Some(f) = fallback {
        for &i in &isolated {
            let j = active
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    sq_dist(f.row(i), f.row(a))
                        .partial_cmp(&sq_dist(f.row(i), f.row(b)))
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                })
                .expect("active set is nonempty");
            labels[i] = labels[j];
        }
    }
    Ok(canonical_labels(&labels))
}

/// One-vs-rest ridge regression onto `+-1` targets with an unpenalized
/// intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// `C x D` weights.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

pub const MIN_RIDGE: f64 = 1e-8;

/// Trains on the columns of `codes` (`D x N`).
pub fn train_linear_classifier(codes: ArrayView2<'_, f64>, labels: &[usize], ridge: f64) -> Result<LinearClassifier> {
    let (dim, n) = codes.dim();
    if labels.len() != n {
        return Err(Error::LengthMismatch { left: n, right: labels.len() });
    }
    if !(ridge >= MIN_RIDGE) {
        return Err(Error::InvalidParameter(format!("ridge must be at least {MIN_RIDGE}")));
    }
    let classes = class_count(labels)?;
    if classes < 2 {
        return Err(Error::InvalidParameter("need at least two classes".into()));
    }
    let x = codes.t();
    let mean = x.mean_axis(Axis(0)).expect("n > 0");
    let xc = &x - &mean.view().insert_axis(Axis(0));
    let mut t = Array2::from_elem((n, classes), -1.0);
    for (i, &l) in labels.iter().enumerate() {
        t[[i, l]] = 1.0;
    }
    let tmean = t.mean_axis(Axis(0)).expect("n > 0");
    let tc = &t - &tmean.view().insert_axis(Axis(0));
    let mut gram = xc.t().dot(&xc);
    for i in 0..dim {
        gram[[i, i]] += ridge;
    }
    let w = solve_spd(gram.view(), xc.t().dot(&tc).view())?; // D x C
    let bias = &tmean - &mean.dot(&w);
    Ok(LinearClassifier {
        weights: w.reversed_axes(),
        bias,
    })
}

impl LinearClassifier {
    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    /// `C x M` class scores for the columns of `codes`.
    pub fn scores(&self, codes: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if codes.nrows() != self.weights.ncols() {
            return Err(Error::DimensionMismatch {
                context: "code length",
                expected: self.weights.ncols(),
                found: codes.nrows(),
            });
        }
        Ok(self.weights.dot(&codes) + &self.bias.view().insert_axis(Axis(1)))
    }

    /// Highest-scoring class per column; scores within 1e-9 (relative) of
    /// each other count as tied and go to the lowest id.
    pub fn predict(&self, codes: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let s = self.scores(codes)?;
        Ok(s.columns()
            .into_iter()
            .map(|col| {
                let mut best = 0;
                for c in 1..col.len() {
                    if col[c] > col[best] + 1e-9 * col[best].abs().max(1.0) {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Cluster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub task: Task,
    pub n: usize,
    /// Plain accuracy; for clustering, under the best label bijection.
    pub accuracy: f64,
    /// Mean over true classes of the per-class accuracy.
    pub per_class_accuracy: f64,
    pub nmi: f64,
    /// Rows are true ids, columns predicted ids.
    pub confusion: Array2<usize>,
}

fn confusion(predicted: &[usize], truth: &[usize]) -> Result<Array2<usize>> {
    let rows = class_count(truth)?;
    let cols = class_count(predicted)?;
    let mut c = Array2::zeros((rows, cols));
    for (&p, &t) in predicted.iter().zip(truth) {
        c[[t, p]] += 1;
    }
    Ok(c)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    let mut terms: Vec<f64> = counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .collect();
    terms.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    terms.iter().sum()
}

/// Normalized mutual information `I / sqrt(H_P H_T)` with natural logs.
/// Two single-cluster partitions score 1. Terms are summed in sorted order
/// so the value is exactly symmetric in its arguments.
pub fn nmi(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let n = truth.len() as f64;
    let c = confusion(predicted, truth)?;
    let rows = c.sum_axis(Axis(1));
    let cols = c.sum_axis(Axis(0));
    let mut terms = Vec::new();
    for ((i, j), &nij) in c.indexed_iter() {
        if nij > 0 {
            let p = nij as f64 / n;
            terms.push(p * (n * nij as f64 / (rows[i] as f64 * cols[j] as f64)).ln());
        }
    }
    terms.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mi: f64 = terms.iter().sum();
    let ht = entropy(rows.iter().copied(), n);
    let hp = entropy(cols.iter().copied(), n);
    if ht == 0.0 && hp == 0.0 {
        return Ok(1.0);
    }
    if ht == 0.0 || hp == 0.0 {
        return Ok(0.0);
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

/// Predicted-to-true id map maximizing agreement (Hungarian assignment).
pub fn best_mapping(predicted: &[usize], truth: &[usize]) -> Result<Vec<usize>> {
    let c = confusion(predicted, truth)?;
    let size = c.nrows().max(c.ncols()).max(1);
    let mut weights = Matrix::new(size, size, 0i64);
    for ((t, p), &v) in c.indexed_iter() {
        weights[(p, t)] = v as i64;
    }
    let (_, assignment) = kuhn_munkres(&weights);
    Ok(assignment)
}

pub fn score(predicted: &[usize], truth: &[usize], task: Task) -> Result<MetricReport> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidParameter("empty labeling".into()));
    }
    let mapped: Vec<usize> = match task {
        Task::Classify => predicted.to_vec(),
        Task::Cluster => {
            let map = best_mapping(predicted, truth)?;
            predicted.iter().map(|&p| map[p]).collect()
        }
    };
    let n = truth.len();
    let correct = mapped.iter().zip(truth).filter(|(p, t)| p == t).count();
    let classes = class_count(truth)?;
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &t) in mapped.iter().zip(truth) {
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    let present: Vec<f64> = totals
        .iter()
        .zip(&hits)
        .filter(|(&t, _)| t > 0)
        .map(|(&t, &h)| h as f64 / t as f64)
        .collect();
    Ok(MetricReport {
        task,
        n,
        accuracy: correct as f64 / n as f64,
        per_class_accuracy: present.iter().sum::<f64>() / present.len() as f64,
        nmi: nmi(predicted, truth)?,
        confusion: confusion(predicted, truth)?,
    })
}

impl MetricReport {
    /// Flat `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let task = match self.task {
            Task::Classify => "classify",
            Task::Cluster => "cluster",
        };
        let _ = writeln!(out, "task={task}");
        let _ = writeln!(out, "n={}", self.n);
        let _ = writeln!(out, "accuracy={}", self.accuracy);
        let _ = writeln!(out, "per_class_accuracy={}", self.per_class_accuracy);
        let _ = writeln!(out, "nmi={}", self.nmi);
        if self.task == Task::Cluster {
            let _ = writeln!(out, "accuracy_mapping=best_permutation");
        }
        out
    }

    /// `metric,value` CSV rows with a header, confusion cells last.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "accuracy,{}", self.accuracy);
        let _ = writeln!(out, "per_class_accuracy,{}", self.per_class_accuracy);
        let _ = writeln!(out, "nmi,{}", self.nmi);
        for ((t, p), v) in self.confusion.indexed_iter() {
            let _ = writeln!(out, "confusion_{t}_{p},{v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn block_graph(sizes: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let n: usize = sizes.iter().sum();
        let mut truth = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            truth.extend(std::iter::repeat(c).take(s));
        }
        let w = Array2::from_shape_fn((n, n), |(i, j)| if i != j && truth[i] == truth[j] { 1.0 + ((i + j) % 3) as f64 } else { 0.0 });
        (w, truth)
    }

    #[test]
    fn block_graph_is_recovered_and_permutation_equivariant() {
        let (w, truth) = block_graph(&[4, 6]);
        let labels = spectral_cluster(w.view(), 2, 1, None).unwrap();
        assert_eq!(labels, canonical_labels(&truth));
        let perm = [7, 2, 9, 0, 5, 1, 8, 3, 6, 4];
        let wp = Array2::from_shape_fn((10, 10), |(i, j)| w[[perm[i], perm[j]]]);
        let lp = spectral_cluster(wp.view(), 2, 1, None).unwrap();
        let expected: Vec<usize> = perm.iter().map(|&i| truth[i]).collect();
        assert_eq!(score(&lp, &expected, Task::Cluster).unwrap().accuracy, 1.0);
        let scaled = &w * 37.5;
        assert_eq!(spectral_cluster(scaled.view(), 2, 1, None).unwrap(), labels);
    }

    fn ring(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| if (i + 1) % n == j || (j + 1) % n == i { 1.0 } else { 0.0 })
    }

    #[test]
    fn ring_splits_into_equal_contiguous_arcs() {
        let n = 10;
        let labels = spectral_cluster(ring(n).view(), 2, 3, None).unwrap();
        // brute-force min normalized cut over contiguous splits
        let mut best = (f64::INFINITY, 0);
        for len in 1..n {
            let ncut = 2.0 / (2.0 * len as f64) + 2.0 / (2.0 * (n - len) as f64);
            if ncut < best.0 {
                best = (ncut, len);
            }
        }
        let size0 = labels.iter().filter(|&&l| l == 0).count();
        assert_eq!(size0, best.1);
    }

    #[test]
    fn ring_clusters_are_contiguous_arcs() {
        // the second eigenvalue of a ring is double, so arc sizes depend on
        // the basis the eigensolver returns; contiguity does not
        for n in (4..=30).step_by(2) {
            let labels = spectral_cluster(ring(n).view(), 2, 0, None).unwrap();
            let changes = (0..n).filter(|&i| labels[i] != labels[(i + 1) % n]).count();
            assert_eq!(changes, 2, "n = {n}");
        }
    }

    #[test]
    fn isolated_vertices_need_fallback() {
        let (mut w, _) = block_graph(&[3, 3]);
        w.row_mut(5).fill(0.0);
        w.column_mut(5).fill(0.0);
        assert!(matches!(spectral_cluster(w.view(), 2, 0, None), Err(Error::DisconnectedDegenerate)));
        let feats = array![[0.0], [0.1], [0.2], [5.0], [5.1], [5.05]];
        let labels = spectral_cluster(w.view(), 2, 0, Some(feats.view())).unwrap();
        assert_eq!(labels[5], labels[3]);
        assert_ne!(labels[0], labels[3]);
    }

    #[test]
    fn separable_codes_train_perfectly() {
        let codes = array![[1.0, 0.9, 0.0, 0.0], [0.0, 0.0, 1.2, 0.8]];
        let labels = [0, 0, 1, 1];
        let clf = train_linear_classifier(codes.view(), &labels, 1e-3).unwrap();
        assert_eq!(clf.predict(codes.view()).unwrap(), labels.to_vec());
    }

    #[test]
    fn huge_ridge_falls_back_to_class_prior() {
        let codes = array![[1.0, 0.0, 0.3, 0.2, 0.5], [0.0, 1.0, 0.7, 0.1, 0.5]];
        let clf = train_linear_classifier(codes.view(), &[1, 0, 1, 0, 2], 1e12).unwrap();
        assert!(clf.weights.iter().all(|v| v.abs() < 1e-9));
        // classes 0 and 1 tie on prior; lowest id wins
        assert_eq!(clf.predict(codes.view()).unwrap(), vec![0; 5]);
        assert!(train_linear_classifier(codes.view(), &[0; 5], 1.0).is_err());
        assert!(train_linear_classifier(codes.view(), &[0, 1, 0, 1, 0], 0.0).is_err());
    }

    #[test]
    fn ridge_matches_augmented_normal_equations() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let codes = Array2::from_shape_fn((4, 30), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let lambda = 0.3;
        let clf = train_linear_classifier(codes.view(), &labels, lambda).unwrap();
        // oracle: minimize ||X w + b - t||^2 + lambda ||w||^2 with [X 1]
        let mut xa = Array2::ones((30, 5));
        xa.slice_mut(s![.., ..4]).assign(&codes.t());
        let mut reg = Array2::<f64>::eye(5) * lambda;
        reg[[4, 4]] = 0.0;
        let lhs = xa.t().dot(&xa) + reg;
        for c in 0..3 {
            let t = Array1::from_iter(labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }));
            let sol = solve_spd(lhs.view(), xa.t().dot(&t).insert_axis(Axis(1)).view()).unwrap();
            for k in 0..4 {
                assert!((sol[[k, 0]] - clf.weights[[c, k]]).abs() < 1e-8);
            }
            assert!((sol[[4, 0]] - clf.bias[c]).abs() < 1e-8);
        }
    }

    #[test]
    fn six_point_example() {
        let pred = [0, 0, 1, 1, 1, 1];
        let truth = [0, 0, 0, 1, 1, 1];
        let r = score(&pred, &truth, Task::Cluster).unwrap();
        assert!((r.accuracy - 5.0 / 6.0).abs() < 1e-15);
        // entropy-formula oracle
        let n = 6.0f64;
        let h = |ps: &[f64]| -ps.iter().map(|p| p * p.ln()).sum::<f64>();
        let ht = h(&[0.5, 0.5]);
        let hp = h(&[2.0 / 6.0, 4.0 / 6.0]);
        let cells = [(2.0, 3.0, 2.0), (1.0, 3.0, 4.0), (3.0, 3.0, 4.0)];
        let mi: f64 = cells.iter().map(|&(nij, a, b)| nij / n * (n * nij / (a * b)).ln()).sum();
        assert!((r.nmi - mi / (ht * hp).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_and_relabeled_partitions() {
        let t = [0, 1, 2, 2, 1, 0, 0];
        let r = score(&t, &t, Task::Classify).unwrap();
        assert_eq!((r.accuracy, r.nmi), (1.0, 1.0));
        let p: Vec<usize> = t.iter().map(|&l| [2, 0, 1][l]).collect();
        assert_eq!(score(&p, &t, Task::Cluster).unwrap().accuracy, 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert!(score(&[0, 1], &[0], Task::Classify).is_err());
    }

    #[test]
    fn balanced_classes_make_per_class_equal_plain() {
        let r = score(&[0, 1, 1, 1, 0, 0], &[0, 0, 0, 1, 1, 1], Task::Classify).unwrap();
        assert!((r.accuracy - r.per_class_accuracy).abs() < 1e-15);
        assert_eq!(r.confusion.sum_axis(Axis(1)).to_vec(), vec![3, 3]);
        assert!(r.to_key_value().contains("accuracy="));
        assert!(r.to_csv().starts_with("metric,value\n"));
    }

    proptest! {
        #[test]
        fn nmi_is_exactly_symmetric(p in proptest::collection::vec(0usize..4, 1..40), seed in 0u64..100) {
            let t: Vec<usize> = p.iter().enumerate().map(|(i, &x)| (x + i * seed as usize) % 3).collect();
            prop_assert_eq!(nmi(&p, &t).unwrap().to_bits(), nmi(&t, &p).unwrap().to_bits());
        }

        #[test]
        fn cluster_accuracy_ignores_relabeling(p in proptest::collection::vec(0usize..3, 1..30), shift in 1usize..3) {
            let t: Vec<usize> = p.iter().enumerate().map(|(i, &x)| if i % 4 == 0 { (x + 1) % 3 } else { x }).collect();
            let q: Vec<usize> = p.iter().map(|&x| (x + shift) % 3).collect();
            let a = score(&p, &t, Task::Cluster).unwrap().accuracy;
            let b = score(&q, &t, Task::Cluster).unwrap().accuracy;
            prop_assert_eq!(a, b);
        }
    }
}
