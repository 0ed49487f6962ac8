//! Kernel matrices: construction from pairwise distances, admissibility
//! checks, scale normalization and nonnegative linear combination.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Zip};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, max_asymmetry, sym_eigh, symmetrize};

/// Tolerance on `max |A - A^T|` for symmetric inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Default relative tolerance on the smallest eigenvalue of a kernel.
pub const PSD_TOL: f64 = 1e-8;

/// Pairwise distances `rho(y_i, y_j)` between training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
}

impl DistanceMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if !all_finite(values.view()) {
            return Err(Error::NonFiniteInput);
        }
        let defect = max_asymmetry(values.view());
        if defect > SYMMETRY_TOL {
            return Err(Error::AsymmetricInput { defect });
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidDistances("negative entry".into()));
        }
        if values.diag().iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidDistances("nonzero diagonal".into()));
        }
        Ok(Self {
            values: symmetrize(values.view()),
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Mean of the off-diagonal entries (0 for a single sample).
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let total: f64 = self.values.sum();
        total / (n * (n - 1)) as f64
    }
}

/// How the bandwidth of `exp(-gamma * rho)` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPolicy {
    /// `gamma = 1 / mean(off-diagonal distances)`.
    MeanInverse,
    Explicit(f64),
}

impl Default for GammaPolicy {
    fn default() -> Self {
        GammaPolicy::MeanInverse
    }
}

impl GammaPolicy {
    pub fn resolve(&self, d: &DistanceMatrix) -> Result<f64> {
        match *self {
            GammaPolicy::Explicit(g) if g.is_finite() && g > 0.0 => Ok(g),
            GammaPolicy::Explicit(g) => Err(Error::InvalidParameter(format!(
                "gamma must be positive and finite, got {g}"
            ))),
            GammaPolicy::MeanInverse => {
                let m = d.mean_off_diagonal();
                if m > 0.0 {
                    Ok(1.0 / m)
                } else {
                    Err(Error::AllZeroDistances)
                }
            }
        }
    }
}

/// An `N x N` Gram matrix with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Array2<f64>,
    gamma: Option<f64>,
    scale: f64,
    source_id: String,
}

impl KernelMatrix {
    /// Wraps a precomputed Gram matrix. The matrix must be square, finite
    /// and symmetric within [`SYMMETRY_TOL`]; it is stored exactly
    /// symmetrized. Positive semidefiniteness is enforced by [`KernelSet`].
    pub fn new(values: Array2<f64>, source_id: impl Into<String>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if !all_finite(values.view()) {
            return Err(Error::NonFiniteInput);
        }
        let defect = max_asymmetry(values.view());
        if defect > SYMMETRY_TOL {
            return Err(Error::AsymmetricInput { defect });
        }
        Ok(Self {
            values: symmetrize(values.view()),
            gamma: None,
            scale: 1.0,
            source_id: source_id.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Bandwidth used when the kernel was built from distances.
    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    /// Cumulative factor applied by [`normalize_kernel`]; cross-kernel rows
    /// must be multiplied by the same factor.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_gamma(mut self, gamma: Option<f64>) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

/// `K(i, j) = exp(-gamma * d(i, j))`.
pub fn kernel_from_distances(
    d: &DistanceMatrix,
    policy: GammaPolicy,
    source_id: impl Into<String>,
) -> Result<KernelMatrix> {
    let gamma = policy.resolve(d)?;
    let values = d.values().mapv(|v| (-gamma * v).exp());
    Ok(KernelMatrix {
        values,
        gamma: Some(gamma),
        scale: 1.0,
        source_id: source_id.into(),
    })
}

/// Outcome of [`validate_kernel`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub finite: bool,
    pub symmetry_defect: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub symmetric: bool,
    pub psd: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.finite && self.symmetric && self.psd
    }

    /// Whether a failing PSD check is small enough to repair by a diagonal
    /// shift.
    pub fn clippable(&self, psd_tol: f64) -> bool {
        self.finite
            && self.symmetric
            && self.min_eigenvalue < 0.0
            && -self.min_eigenvalue <= psd_tol * self.max_eigenvalue.max(0.0)
    }
}

/// Symmetry and positive-semidefiniteness report for a square matrix.
/// The eigenvalues are those of the symmetric part.
pub fn validate_kernel(k: ArrayView2<'_, f64>, psd_tol: f64) -> ValidationReport {
    let n = k.nrows();
    let finite = all_finite(k);
    let symmetry_defect = if finite { max_asymmetry(k) } else { f64::NAN };
    let (min_eigenvalue, max_eigenvalue) = if finite && n == k.ncols() && n > 0 {
        match sym_eigh(symmetrize(k).view()) {
            Ok((vals, _)) => (vals[0], vals[n - 1]),
            Err(_) => (f64::NAN, f64::NAN),
        }
    } else {
        (f64::NAN, f64::NAN)
    };
    let symmetric = finite && n == k.ncols() && symmetry_defect <= SYMMETRY_TOL;
    let psd = min_eigenvalue >= -psd_tol * max_eigenvalue.max(0.0);
    ValidationReport {
        n,
        finite,
        symmetry_defect,
        min_eigenvalue,
        max_eigenvalue,
        symmetric,
        psd,
    }
}

/// Scales a kernel so that its mean diagonal entry is 1.
pub fn normalize_kernel(k: &KernelMatrix) -> Result<KernelMatrix> {
    let n = k.n();
    let trace: f64 = k.values.diag().sum();
    if n == 0 || !(trace > 0.0) {
        return Err(Error::ZeroTrace);
    }
    let factor = n as f64 / trace;
    Ok(KernelMatrix {
        values: k.values.mapv(|v| v * factor),
        gamma: k.gamma,
        scale: k.scale * factor,
        source_id: k.source_id.clone(),
    })
}

/// `R` validated kernels over the same `N` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    kernels: Vec<KernelMatrix>,
}

impl KernelSet {
    /// Validates every member. Kernels whose smallest eigenvalue is
    /// negative but within `PSD_TOL` of the largest are shifted by
    /// `|lambda_min| * I`; anything worse is rejected.
    pub fn new(kernels: Vec<KernelMatrix>) -> Result<Self> {
        Self::with_tolerance(kernels, PSD_TOL)
    }

    pub fn with_tolerance(kernels: Vec<KernelMatrix>, psd_tol: f64) -> Result<Self> {
        let first = kernels
            .first()
            .ok_or_else(|| Error::InvalidParameter("kernel set is empty".into()))?;
        let n = first.n();
        let mut out = Vec::with_capacity(kernels.len());
        for mut k in kernels {
            if k.n() != n {
                return Err(Error::DimensionMismatch {
                    context: "kernel set",
                    expected: n,
                    found: k.n(),
                });
            }
            let report = validate_kernel(k.values(), psd_tol);
            if !report.finite {
                return Err(Error::NonFiniteInput);
            }
            if !report.symmetric {
                return Err(Error::AsymmetricInput {
                    defect: report.symmetry_defect,
                });
            }
            if !report.psd {
                return Err(Error::NotPsd {
                    min_eig: report.min_eigenvalue,
                    max_eig: report.max_eigenvalue,
                });
            }
            if report.clippable(psd_tol) {
                let shift = -report.min_eigenvalue;
                for i in 0..n {
                    k.values[[i, i]] += shift;
                }
            }
            out.push(k);
        }
        Ok(Self { kernels: out })
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn n(&self) -> usize {
        self.kernels[0].n()
    }

    pub fn kernels(&self) -> &[KernelMatrix] {
        &self.kernels
    }

    pub fn get(&self, r: usize) -> &KernelMatrix {
        &self.kernels[r]
    }

    /// Unit-mean-diagonal version of every member.
    pub fn normalized(&self) -> Result<Self> {
        let kernels = self
            .kernels
            .iter()
            .map(normalize_kernel)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kernels })
    }
}

/// Nonnegative kernel weights `beta`, not all zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct KernelWeights {
    beta: Array1<f64>,
}

impl KernelWeights {
    pub fn new(beta: Array1<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidParameter("empty weight vector".into()));
        }
        for (index, &value) in beta.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteInput);
            }
            if value < 0.0 {
                return Err(Error::NegativeWeight { index, value });
            }
        }
        if beta.iter().all(|&b| b == 0.0) {
            return Err(Error::ZeroWeights);
        }
        Ok(Self { beta })
    }

    /// `1/R` for every kernel.
    pub fn uniform(r: usize) -> Self {
        Self {
            beta: Array1::from_elem(r, 1.0 / r as f64),
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.beta
    }

    /// Rescaled to sum to one.
    pub fn to_simplex(&self) -> Self {
        let s: f64 = self.beta.sum();
        Self {
            beta: self.beta.mapv(|b| b / s),
        }
    }
}

impl TryFrom<Vec<f64>> for KernelWeights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(Array1::from(v))
    }
}

impl From<KernelWeights> for Vec<f64> {
    fn from(w: KernelWeights) -> Self {
        w.beta.to_vec()
    }
}

/// `sum_r beta_r K_r` together with the weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleKernel {
    pub values: Array2<f64>,
    pub weights: KernelWeights,
}

impl EnsembleKernel {
    pub fn fingerprint(&self) -> String {
        fingerprint(self.values.view())
    }
}

// Both ensemble routes go through these so that a training sample's cross
// row is bitwise equal to the matching row of the training ensemble.
fn accumulate_row(mut acc: ArrayViewMut1<'_, f64>, beta: f64, src: ArrayView1<'_, f64>) {
    Zip::from(&mut acc).and(&src).for_each(|a, &s| *a += beta * s);
}

fn accumulate(mut acc: ArrayViewMut2<'_, f64>, beta: f64, src: ArrayView2<'_, f64>) {
    for (a, s) in acc.rows_mut().into_iter().zip(src.rows()) {
        accumulate_row(a, beta, s);
    }
}

/// `K = sum_r beta_r K_r`.
pub fn ensemble(ks: &KernelSet, w: &KernelWeights) -> Result<EnsembleKernel> {
    if w.len() != ks.len() {
        return Err(Error::DimensionMismatch {
            context: "ensemble weights",
            expected: ks.len(),
            found: w.len(),
        });
    }
    let n = ks.n();
    let mut values = Array2::zeros((n, n));
    for (k, &b) in ks.kernels().iter().zip(w.as_array()) {
        accumulate(values.view_mut(), b, k.values());
    }
    Ok(EnsembleKernel {
        values,
        weights: w.clone(),
    })
}

/// Combines per-kernel cross rows `K_r(x, .)` with the training weights.
pub fn cross_ensemble(rows: &[ArrayView1<'_, f64>], w: &KernelWeights) -> Result<Array1<f64>> {
    if rows.len() != w.len() {
        return Err(Error::DimensionMismatch {
            context: "cross-kernel rows",
            expected: w.len(),
            found: rows.len(),
        });
    }
    let n = rows[0].len();
    let mut out = Array1::zeros(n);
    for (row, &b) in rows.iter().zip(w.as_array()) {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                context: "cross-kernel row length",
                expected: n,
                found: row.len(),
            });
        }
        accumulate_row(out.view_mut(), b, *row);
    }
    Ok(out)
}

/// Row-batched [`cross_ensemble`]: each input is `T x N`.
pub fn cross_ensemble_rows(blocks: &[ArrayView2<'_, f64>], w: &KernelWeights) -> Result<Array2<f64>> {
    if blocks.len() != w.len() {
        return Err(Error::DimensionMismatch {
            context: "cross-kernel blocks",
            expected: w.len(),
            found: blocks.len(),
        });
    }
    let dim = blocks[0].dim();
    let mut out = Array2::zeros(dim);
    for (block, &b) in blocks.iter().zip(w.as_array()) {
        if block.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "cross-kernel block shape",
                expected: dim.0 * dim.1,
                found: block.len(),
            });
        }
        accumulate(out.view_mut(), b, *block);
    }
    Ok(out)
}

/// SHA-256 over the shape and little-endian bytes of a matrix, hex encoded.
pub fn fingerprint(a: ArrayView2<'_, f64>) -> String {
    let mut h = Sha256::new();
    h.update((a.nrows() as u64).to_le_bytes());
    h.update((a.ncols() as u64).to_le_bytes());
    for v in a.iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}
