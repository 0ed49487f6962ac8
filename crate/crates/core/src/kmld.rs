//! Kernel multilevel dictionaries.
//!
//! Level `s` clusters the residuals left by levels `1..s-1` with kernel
//! K-hyperline clustering. Residuals are never materialized: with
//! `P_{s-1} = prod_t (I - A_t D_t A_t^T)` the residual Gram matrix is
//! `P_{s-1}^T K P_{s-1}` and the level-`s` atoms are `phi(Y) P_{s-1} A_s D_s`.
//! Samples are encoded by a levelwise pursuit that picks one atom per level.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::fingerprint;
use crate::khyperline::{abs_argmax, k2hypl, ClusterState, KHyperlineConfig, NORM_FLOOR};
use crate::linalg::{derive_seed, trace};

/// Atoms per level: one count for every level, or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AtomCounts {
    Uniform(usize),
    PerLevel(Vec<usize>),
}

impl AtomCounts {
    /// Count for every level; a one-element list applies to all levels.
    pub fn resolve(&self, s_levels: usize) -> Result<Vec<usize>> {
        let counts = match self {
            AtomCounts::Uniform(k) => vec![*k; s_levels],
            AtomCounts::PerLevel(v) if v.len() == 1 => vec![v[0]; s_levels],
            AtomCounts::PerLevel(v) if v.len() == s_levels => v.clone(),
            AtomCounts::PerLevel(v) => {
                return Err(Error::InvalidParameter(format!(
                    "{} atom counts given for {s_levels} levels",
                    v.len()
                )))
            }
        };
        if counts.iter().any(|&k| k == 0) {
            return Err(Error::InvalidParameter("atom counts must be at least 1".into()));
        }
        Ok(counts)
    }

    pub fn max(&self) -> usize {
        match self {
            AtomCounts::Uniform(k) => *k,
            AtomCounts::PerLevel(v) => v.iter().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmldConfig {
    pub k_atoms: AtomCounts,
    pub s_levels: usize,
    pub inner_iters: usize,
    pub max_outer: usize,
    pub tol: f64,
    pub norm_floor: f64,
    /// Training stops once the residual energy drops below this fraction
    /// of `trace(K)`.
    pub collapse_ratio: f64,
    pub seed: u64,
}

impl KmldConfig {
    pub fn new(k_atoms: AtomCounts, s_levels: usize, seed: u64) -> Self {
        Self {
            k_atoms,
            s_levels,
            inner_iters: 10,
            max_outer: 100,
            tol: 1e-8,
            norm_floor: NORM_FLOOR,
            collapse_ratio: 1e-10,
            seed,
        }
    }

    fn level_config(&self, level: usize, k_atoms: usize) -> KHyperlineConfig {
        KHyperlineConfig {
            k_atoms,
            inner_iters: self.inner_iters,
            max_outer: self.max_outer,
            tol: self.tol,
            norm_floor: self.norm_floor,
            seed: derive_seed(self.seed, level as u64),
            record_trace: false,
        }
    }
}

/// One dictionary level: `A_s` stored as the atom index and coefficient of
/// every training sample, plus the diagonal of `D_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelState {
    pub membership: Vec<usize>,
    pub coeff: Vec<f64>,
    pub d: Array1<f64>,
}

impl LevelState {
    pub fn from_cluster(c: &ClusterState) -> Self {
        Self {
            membership: c.membership.clone(),
            coeff: c.coefficients().to_vec(),
            d: c.d.clone(),
        }
    }

    pub fn k_atoms(&self) -> usize {
        self.d.len()
    }

    pub fn n(&self) -> usize {
        self.membership.len()
    }

    /// Dense `N x K` coefficient matrix `A_s`.
    pub fn a(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n(), self.k_atoms()));
        for (i, (&k, &c)) in self.membership.iter().zip(&self.coeff).enumerate() {
            a[[i, k]] = c;
        }
        a
    }

    /// `X A_s` for an `M x N` matrix `X`, using the one-nonzero-per-row
    /// structure of `A_s`.
    fn right_mul(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.k_atoms()));
        for (i, (&k, &c)) in self.membership.iter().zip(&self.coeff).enumerate() {
            if c != 0.0 {
                out.column_mut(k).scaled_add(c, &x.column(i));
            }
        }
        out
    }

    /// `X - G A_s^T` for `X` of shape `M x N` and `G` of shape `M x K`.
    fn subtract_outer(&self, x: &mut Array2<f64>, g: ArrayView2<'_, f64>) {
        for (i, (&k, &c)) in self.membership.iter().zip(&self.coeff).enumerate() {
            if c != 0.0 {
                x.column_mut(i).scaled_add(-c, &g.column(k));
            }
        }
    }
}

/// Why training produced fewer levels than requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCollapse {
    /// Zero-based index of the first level that could not be built.
    pub level: usize,
    pub residual_energy: f64,
    pub reason: String,
}

/// A trained multilevel dictionary together with the codes of its
/// training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilevelDictionary {
    pub levels: Vec<LevelState>,
    pub n: usize,
    pub requested_levels: usize,
    pub kernel_fingerprint: String,
    pub collapse: Option<LevelCollapse>,
    /// `sum_s K_s x N` stack of training codes, produced by [`Encoder`].
    pub training_codes: Array2<f64>,
}

impl MultilevelDictionary {
    pub fn s_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn k_atoms(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.k_atoms()).collect()
    }

    pub fn code_len(&self) -> usize {
        self.levels.iter().map(|l| l.k_atoms()).sum()
    }

    /// Stacked `[A_1^T; ...; A_S^T]`.
    pub fn coefficient_stack(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.code_len(), self.n));
        let mut offset = 0;
        for level in &self.levels {
            for (i, (&k, &c)) in level.membership.iter().zip(&level.coeff).enumerate() {
                out[[offset + k, i]] = c;
            }
            offset += level.k_atoms();
        }
        out
    }
}

/// `P_s = prod_{t=1}^{s} (I - A_t D_t A_t^T)`, multiplied in level order.
pub fn residual_projector(levels: &[LevelState], n: usize) -> Result<Array2<f64>> {
    let mut p = Array2::eye(n);
    for level in levels {
        if level.n() != n {
            return Err(Error::DimensionMismatch {
                context: "residual projector",
                expected: n,
                found: level.n(),
            });
        }
        let mut g = level.right_mul(p.view());
        scale_cols(&mut g, &level.d);
        level.subtract_outer(&mut p, g.view());
    }
    Ok(p)
}

fn scale_cols(m: &mut Array2<f64>, d: &Array1<f64>) {
    for (mut col, &s) in m.columns_mut().into_iter().zip(d) {
        col *= s;
    }
}

/// Residual Gram matrix after one more level:
/// `(I - A D A^T)^T K_eff (I - A D A^T)`.
fn project_kernel(k_eff: &Array2<f64>, level: &LevelState) -> Array2<f64> {
    // K_eff (I - A D A^T) = K_eff - (K_eff A D) A^T
    let mut kad = level.right_mul(k_eff.view());
    scale_cols(&mut kad, &level.d);
    let mut right = k_eff.clone();
    level.subtract_outer(&mut right, kad.view());
    // (I - A D A^T)^T X = X - A D (A^T X); transpose to reuse the column form
    let mut xt = right.t().to_owned();
    let mut xad = level.right_mul(xt.view());
    scale_cols(&mut xad, &level.d);
    level.subtract_outer(&mut xt, xad.view());
    let out = xt.reversed_axes();
    crate::linalg::symmetrize(out.view())
}

/// Learns a kernel multilevel dictionary from the training Gram matrix.
///
/// Stops early (recording a [`LevelCollapse`]) when the residual energy
/// falls below `collapse_ratio * trace(K)` or when a deeper level cannot
/// keep `K` non-degenerate atoms.
pub fn train_kmld(kyy: ArrayView2<'_, f64>, cfg: &KmldConfig) -> Result<MultilevelDictionary> {
    let n = kyy.nrows();
    if kyy.ncols() != n {
        return Err(Error::NotSquare {
            rows: n,
            cols: kyy.ncols(),
        });
    }
    if cfg.s_levels == 0 {
        return Err(Error::InvalidParameter("s_levels must be at least 1".into()));
    }
    let counts = cfg.k_atoms.resolve(cfg.s_levels)?;
    let total = trace(kyy);
    if !(total > 0.0) {
        return Err(Error::ZeroTrace);
    }
    let mut k_eff = kyy.to_owned();
    let mut levels = Vec::with_capacity(cfg.s_levels);
    let mut collapse = None;
    for (s, &k_atoms) in counts.iter().enumerate() {
        let energy = trace(k_eff.view());
        if energy < cfg.collapse_ratio * total {
            collapse = Some(LevelCollapse {
                level: s,
                residual_energy: energy,
                reason: "residual energy below threshold".into(),
            });
            break;
        }
        let cluster = match k2hypl(k_eff.view(), &cfg.level_config(s, k_atoms)) {
            Ok(c) => c,
            Err(e @ Error::DegenerateAtom { .. }) if s > 0 => {
                collapse = Some(LevelCollapse {
                    level: s,
                    residual_energy: energy,
                    reason: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        };
        let level = LevelState::from_cluster(&cluster);
        k_eff = project_kernel(&k_eff, &level);
        levels.push(level);
    }
    let mut mld = MultilevelDictionary {
        levels,
        n,
        requested_levels: cfg.s_levels,
        kernel_fingerprint: fingerprint(kyy),
        collapse,
        training_codes: Array2::zeros((0, n)),
    };
    let encoder = Encoder::new(&mld, kyy)?;
    let mut codes = Array2::zeros((mld.code_len(), n));
    for i in 0..n {
        let code = encoder.encode(kyy.row(i))?;
        codes.column_mut(i).assign(&code.to_dense());
    }
    mld.training_codes = codes;
    Ok(mld)
}

/// One-atom-per-level code of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    /// `(atom, coefficient)` chosen at every level.
    pub picks: Vec<(usize, f64)>,
    pub k_atoms: Vec<usize>,
}

impl SparseCode {
    pub fn len(&self) -> usize {
        self.k_atoms.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stacked `[a_1^T ... a_S^T]^T`.
    pub fn to_dense(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.len());
        let mut offset = 0;
        for (&(k, c), &size) in self.picks.iter().zip(&self.k_atoms) {
            out[offset + k] = c;
            offset += size;
        }
        out
    }

    /// Number of nonzero coefficients at each level (0 or 1).
    pub fn nonzeros_per_level(&self) -> Vec<usize> {
        self.picks.iter().map(|&(_, c)| usize::from(c != 0.0)).collect()
    }
}

struct EncoderLevel {
    /// `P_{s-1} A_s D_s`: level-`s` atoms as combinations of `phi(Y)`.
    atoms: Array2<f64>,
    /// `K P_{s-1} A_s D_s`.
    k_atoms: Array2<f64>,
}

/// Levelwise pursuit against a trained dictionary.
///
/// The residual of `x` after level `s` is `phi(x) - phi(Y) c_s`; the encoder
/// tracks `u = K_xY - K c_s`, so the level-`s` correlations are
/// `u^T P_{s-1} A_s D_s`, which is `M_s A_s D_s` expanded.
pub struct Encoder<'a> {
    kyy: ArrayView2<'a, f64>,
    levels: Vec<EncoderLevel>,
    sizes: Vec<usize>,
}

impl<'a> Encoder<'a> {
    pub fn new(mld: &MultilevelDictionary, kyy: ArrayView2<'a, f64>) -> Result<Self> {
        if kyy.nrows() != mld.n || kyy.ncols() != mld.n {
            return Err(Error::DimensionMismatch {
                context: "encoder kernel",
                expected: mld.n,
                found: kyy.nrows(),
            });
        }
        if fingerprint(kyy) != mld.kernel_fingerprint {
            return Err(Error::FingerprintMismatch);
        }
        let n = mld.n;
        let mut p = Array2::eye(n);
        let mut levels = Vec::with_capacity(mld.levels.len());
        for level in &mld.levels {
            let mut g = level.right_mul(p.view());
            scale_cols(&mut g, &level.d);
            level.subtract_outer(&mut p, g.view());
            let kg = kyy.dot(&g);
            levels.push(EncoderLevel { atoms: g, k_atoms: kg });
        }
        Ok(Self {
            kyy,
            levels,
            sizes: mld.k_atoms(),
        })
    }

    /// Sparse code of a sample given its ensemble cross-kernel row `K(x, Y)`.
    pub fn encode(&self, kxy: ArrayView1<'_, f64>) -> Result<SparseCode> {
        let n = self.kyy.nrows();
        if kxy.len() != n {
            return Err(Error::DimensionMismatch {
                context: "cross-kernel row",
                expected: n,
                found: kxy.len(),
            });
        }
        if kxy.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let mut u = kxy.to_owned();
        let mut picks = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            let alpha = dot_columns(u.view(), level.atoms.view());
            let k = abs_argmax(alpha.iter().copied());
            let c = alpha[k];
            if c != 0.0 {
                u.scaled_add(-c, &level.k_atoms.column(k));
            }
            picks.push((k, c));
        }
        Ok(SparseCode {
            picks,
            k_atoms: self.sizes.clone(),
        })
    }

    /// `||phi(x) - phi(Psi) a||^2` using the first `levels_used` levels of
    /// the code, from Gram quantities only. Round-off below zero is clipped.
    pub fn reconstruction_energy(
        &self,
        kxx: f64,
        kxy: ArrayView1<'_, f64>,
        code: &SparseCode,
        levels_used: usize,
    ) -> Result<f64> {
        let n = self.kyy.nrows();
        if kxy.len() != n {
            return Err(Error::DimensionMismatch {
                context: "cross-kernel row",
                expected: n,
                found: kxy.len(),
            });
        }
        if code.picks.len() != self.levels.len() {
            return Err(Error::DimensionMismatch {
                context: "code levels",
                expected: self.levels.len(),
                found: code.picks.len(),
            });
        }
        let mut c = Array1::<f64>::zeros(n);
        let mut kc = Array1::<f64>::zeros(n);
        for (level, &(k, a)) in self.levels.iter().zip(&code.picks).take(levels_used) {
            c.scaled_add(a, &level.atoms.column(k));
            kc.scaled_add(a, &level.k_atoms.column(k));
        }
        let e = kxx - 2.0 * kxy.dot(&c) + c.dot(&kc);
        Ok(e.max(0.0))
    }

    pub fn s_levels(&self) -> usize {
        self.levels.len()
    }

    /// Atom coefficients `P_{s-1} A_s D_s` of a level (`N x K_s`).
    pub fn atom_coefficients(&self, level: usize) -> ArrayView2<'_, f64> {
        self.levels[level].atoms.view()
    }
}

fn dot_columns(u: ArrayView1<'_, f64>, g: ArrayView2<'_, f64>) -> Array1<f64> {
    let mut out = Array1::zeros(g.ncols());
    for (i, &ui) in u.iter().enumerate() {
        if ui != 0.0 {
            out.scaled_add(ui, &g.row(i));
        }
    }
    out
}

/// Levelwise pursuit of one sample (see [`Encoder::encode`]).
pub fn encode(kxy: ArrayView1<'_, f64>, kyy: ArrayView2<'_, f64>, mld: &MultilevelDictionary) -> Result<SparseCode> {
    Encoder::new(mld, kyy)?.encode(kxy)
}

/// Squared RKHS distance between a sample and its reconstruction from
/// `code` (all levels).
pub fn reconstruction_energy(
    kxx: f64,
    kxy: ArrayView1<'_, f64>,
    kyy: ArrayView2<'_, f64>,
    mld: &MultilevelDictionary,
    code: &SparseCode,
) -> Result<f64> {
    let enc = Encoder::new(mld, kyy)?;
    enc.reconstruction_energy(kxx, kxy, code, enc.s_levels())
}
