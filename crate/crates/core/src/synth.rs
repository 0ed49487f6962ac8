//! Planted synthetic datasets for tests, demos and the acceptance suite.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::kernel::{kernel_from_distances, DistanceMatrix, GammaPolicy, KernelMatrix, KernelSet};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Isotropic Gaussian classes: `classes` random centres at spread
/// `separation`, unit-variance samples, one row per sample.
pub fn gaussian_classes(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = Array2::from_shape_fn((classes, dim), |_| separation * normal(&mut rng));
    let n = classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let x = Array2::from_shape_fn((n, dim), |(i, j)| centres[[labels[i], j]] + normal(&mut rng));
    (x, labels)
}

/// Samples on `lines` random 1-D subspaces of `R^dim` (columns of the
/// returned `dim x n` matrix), with Gaussian coefficients and additive
/// noise of standard deviation `noise`. Returns data, unit directions
/// (`dim x lines`) and the line of every sample.
pub fn planted_lines(dim: usize, lines: usize, n: usize, noise: f64, seed: u64) -> (Array2<f64>, Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = Array2::from_shape_fn((dim, lines), |_| normal(&mut rng));
    for mut c in dirs.columns_mut() {
        let norm = c.dot(&c).sqrt();
        c /= norm;
    }
    let labels: Vec<usize> = (0..n).map(|i| i % lines).collect();
    let mut y = Array2::zeros((dim, n));
    for (i, &l) in labels.iter().enumerate() {
        let coef = normal(&mut rng) + if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        for m in 0..dim {
            y[[m, i]] = coef * dirs[[m, l]] + noise * normal(&mut rng);
        }
    }
    (y, dirs, labels)
}

/// Squared Euclidean distances between the rows of `a` and of `b`.
pub fn sq_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        a.row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    })
}

/// One view of a dataset: train distances and test-by-train distances.
#[derive(Debug, Clone)]
pub struct DistanceView {
    pub source_id: String,
    pub train: Array2<f64>,
    pub cross: Array2<f64>,
}

/// Several distance views over the same train/test split.
#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub views: Vec<DistanceView>,
    pub train_labels: Vec<usize>,
    pub test_labels: Vec<usize>,
}

impl PlantedDataset {
    /// Kernels `exp(-gamma * rho)` with `gamma` the inverse mean distance,
    /// normalized to unit mean diagonal.
    pub fn kernel_set(&self) -> Result<KernelSet> {
        let kernels = self
            .views
            .iter()
            .map(|v| {
                kernel_from_distances(&DistanceMatrix::new(v.train.clone())?, GammaPolicy::MeanInverse, v.source_id.clone())
            })
            .collect::<Result<Vec<KernelMatrix>>>()?;
        KernelSet::new(kernels)?.normalized()
    }

    pub fn cross_blocks(&self) -> Vec<ArrayView2<'_, f64>> {
        self.views.iter().map(|v| v.cross.view()).collect()
    }

    pub fn n_train(&self) -> usize {
        self.train_labels.len()
    }
}

fn view_from_points(source_id: &str, train: &Array2<f64>, test: &Array2<f64>) -> DistanceView {
    let mut d = sq_distances(train.view(), train.view());
    d.diag_mut().fill(0.0);
    DistanceView {
        source_id: source_id.into(),
        train: crate::linalg::symmetrize(d.view()),
        cross: sq_distances(test.view(), train.view()),
    }
}

/// Splits labeled rows into train and test sets, `test_per_class` of every
/// class going to test, after a seeded shuffle.
fn split(x: &Array2<f64>, labels: &[usize], test_per_class: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.shuffle(rng);
    let mut taken = vec![0usize; classes];
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for i in order {
        if taken[labels[i]] < test_per_class {
            taken[labels[i]] += 1;
            test.push(i);
        } else {
            train.push(i);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

/// One distance view of Gaussian classes with a per-class train/test
/// split.
pub fn gaussian_dataset(
    classes: usize,
    train_per_class: usize,
    test_per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> PlantedDataset {
    let (x, labels) = gaussian_classes(classes, train_per_class + test_per_class, dim, separation, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7370_6c69_74);
    let (train, test) = split(&x, &labels, test_per_class, &mut rng);
    PlantedDataset {
        views: vec![view_from_points("gaussian", &rows(&x, &train), &rows(&x, &test))],
        train_labels: train.iter().map(|&i| labels[i]).collect(),
        test_labels: test.iter().map(|&i| labels[i]).collect(),
    }
}

/// Informative kernel from 3-class Gaussian data plus a noise kernel from
/// label-independent points. `n_train` training and `n_test` test samples,
/// split evenly across classes.
pub fn two_kernel_planted(n_train: usize, n_test: usize, seed: u64) -> PlantedDataset {
    let classes = 3;
    let per_class = (n_train + n_test).div_ceil(classes);
    let (x, labels) = gaussian_classes(classes, per_class, 5, 2.5, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973_65);
    let noise = Array2::from_shape_fn((x.nrows(), 5), |_| normal(&mut rng));
    let (train, test) = split(&x, &labels, n_test / classes, &mut rng);
    let train: Vec<usize> = train.into_iter().take(n_train).collect();
    PlantedDataset {
        views: vec![
            view_from_points("informative", &rows(&x, &train), &rows(&x, &test)),
            view_from_points("noise", &rows(&noise, &train), &rows(&noise, &test)),
        ],
        train_labels: train.iter().map(|&i| labels[i]).collect(),
        test_labels: test.iter().map(|&i| labels[i]).collect(),
    }
}

/// Three well-separated clusters seen through two noisy views; no test
/// split.
pub fn three_clusters(per_cluster: usize, seed: u64) -> PlantedDataset {
    let (x, labels) = gaussian_classes(3, per_cluster, 4, 3.0, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7669_6577);
    let second = x.mapv(|v| v + 0.5 * normal(&mut rng));
    let empty = Array2::zeros((0, x.ncols()));
    PlantedDataset {
        views: vec![view_from_points("view_a", &x, &empty), view_from_points("view_b", &second, &empty)],
        train_labels: labels,
        test_labels: Vec::new(),
    }
}

/// Many-class surrogate: `kernels` views of `classes` Gaussian classes with
/// informativeness decreasing from view to view.
pub fn multiclass_surrogate(
    classes: usize,
    train_per_class: usize,
    test_per_class: usize,
    kernels: usize,
    seed: u64,
) -> PlantedDataset {
    let n = classes * (train_per_class + test_per_class);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 8;
    let mut point_sets = Vec::with_capacity(kernels);
    for v in 0..kernels {
        let separation = 3.0 / (1.0 + v as f64);
        let centres = Array2::from_shape_fn((classes, dim), |_| separation * normal(&mut rng));
        point_sets.push(Array2::from_shape_fn((n, dim), |(i, j)| centres[[labels[i], j]] + normal(&mut rng)));
    }
    let (train, test) = split(&point_sets[0], &labels, test_per_class, &mut rng);
    PlantedDataset {
        views: point_sets
            .iter()
            .enumerate()
            .map(|(v, p)| view_from_points(&format!("view{v}"), &rows(p, &train), &rows(p, &test)))
            .collect(),
        train_labels: train.iter().map(|&i| labels[i]).collect(),
        test_labels: test.iter().map(|&i| labels[i]).collect(),
    }
}
