//! Discriminative multiple-kernel graph embedding.
//!
//! A sample `y_i` is represented by its kernel slice `K^(i)` (`N x R`,
//! column `r` holding `K_r(., y_i)`), and embedded as `U^T K^(i) beta`.
//! The basis `U` and the kernel weights `beta` are found by alternating a
//! trace-ratio step on `U` with a relaxed quadratic program on `beta`, both
//! minimizing the spread of the intra-class graph `W` relative to the
//! inter-class graph `W'` (or the degree matrix in the unsupervised case).

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::labels::class_count;
use crate::kernel::{KernelSet, KernelWeights};
use crate::linalg::{quad_trace, row_sums, sym_eigh, symmetrize, trace};
use crate::sdp::{round_to_beta, solve_relaxed, BarrierOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    Supervised,
    Unsupervised,
}

/// Intra-class graph `w` and inter-class graph `w_prime`. In unsupervised
/// mode `w_prime` is the diagonal degree matrix of `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraphs {
    pub w: Array2<f64>,
    pub w_prime: Array2<f64>,
    pub mode: GraphMode,
}

impl AffinityGraphs {
    /// Builds the unsupervised pair `(W, Delta)` from a similarity graph.
    pub fn unsupervised(w: Array2<f64>) -> Self {
        let w_prime = degree_matrix(w.view());
        Self {
            w,
            w_prime,
            mode: GraphMode::Unsupervised,
        }
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// Graph whose spread is minimized.
    pub fn numerator(&self) -> GraphForm<'_> {
        GraphForm::Pairwise(self.w.view())
    }

    /// Graph whose spread is held fixed.
    pub fn denominator(&self) -> GraphForm<'_> {
        match self.mode {
            GraphMode::Supervised => GraphForm::Pairwise(self.w_prime.view()),
            GraphMode::Unsupervised => GraphForm::Degree(self.w_prime.diag()),
        }
    }
}

/// How a graph enters a scatter matrix: pairwise differences
/// `sum_ij w_ij (x_i - x_j)(x_i - x_j)^T`, or the degree-weighted
/// `sum_i delta_i x_i x_i^T`.
#[derive(Debug, Clone, Copy)]
pub enum GraphForm<'a> {
    Pairwise(ArrayView2<'a, f64>),
    Degree(ArrayView1<'a, f64>),
}

impl GraphForm<'_> {
    fn n(&self) -> usize {
        match self {
            GraphForm::Pairwise(w) => w.nrows(),
            GraphForm::Degree(d) => d.len(),
        }
    }

    /// Matrix `L` with `sum_ij w_ij <a_i - a_j, b_i - b_j> = sum_ij L_ij <a_i, b_j>`.
    fn quadratic(&self) -> Array2<f64> {
        match self {
            GraphForm::Pairwise(w) => {
                let n = w.nrows();
                let rows = row_sums(*w);
                let cols = w.sum_axis(Axis(0));
                let mut l = Array2::zeros((n, n));
                for i in 0..n {
                    for j in 0..n {
                        l[[i, j]] = -(w[[i, j]] + w[[j, i]]);
                    }
                    l[[i, i]] += rows[i] + cols[i];
                }
                l
            }
            GraphForm::Degree(d) => Array2::from_diag(d),
        }
    }
}

/// Diagonal matrix of row sums.
pub fn degree_matrix(w: ArrayView2<'_, f64>) -> Array2<f64> {
    Array2::from_diag(&row_sums(w))
}

/// `max(w, w^T)` entrywise.
pub fn max_symmetrize(w: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = w.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| w[[i, j]].max(w[[j, i]]))
}

/// The `count` eligible indices with the largest `score`, highest first;
/// ties go to the lower index.
pub(crate) fn top_indices(score: ArrayView1<'_, f64>, count: usize, eligible: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..score.len()).filter(|&j| eligible(j)).collect();
    idx.sort_by(|&a, &b| {
        score[b]
            .partial_cmp(&score[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(count);
    idx
}

fn check_labels(n: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    let classes = class_count(labels)?;
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some((c, _)) = counts.iter().enumerate().find(|&(_, &k)| k == 1) {
        return Err(Error::ClassTooSmall(format!("class {c} has a single member")));
    }
    Ok(())
}

/// Kernel-neighborhood graphs: `w(i, j)` is the fraction of kernels in
/// which `j` is among the `tau` most similar same-class samples of `i`,
/// `w'(i, j)` likewise over the `tau'` most similar other-class samples.
/// Both are symmetrized by `max(w, w^T)`.
pub fn init_affinities(ks: &KernelSet, labels: &[usize], tau: usize, tau_prime: usize) -> Result<AffinityGraphs> {
    let n = ks.n();
    check_labels(n, labels)?;
    if tau == 0 || tau_prime == 0 {
        return Err(Error::InvalidParameter("neighborhood sizes must be at least 1".into()));
    }
    let r = ks.len() as f64;
    let mut w = Array2::<f64>::zeros((n, n));
    let mut wp = Array2::<f64>::zeros((n, n));
    for k in ks.kernels() {
        let vals = k.values();
        for i in 0..n {
            let row = vals.row(i);
            for j in top_indices(row, tau, |j| j != i && labels[j] == labels[i]) {
                w[[i, j]] += 1.0 / r;
            }
            for j in top_indices(row, tau_prime, |j| labels[j] != labels[i]) {
                wp[[i, j]] += 1.0 / r;
            }
        }
    }
    Ok(AffinityGraphs {
        w: max_symmetrize(w.view()),
        w_prime: max_symmetrize(wp.view()),
        mode: GraphMode::Supervised,
    })
}

/// Unlabeled variant of [`init_affinities`]: every other sample is
/// eligible, and `w'` is the degree matrix of `w`.
pub fn init_affinities_unsupervised(ks: &KernelSet, tau: usize) -> Result<AffinityGraphs> {
    if tau == 0 {
        return Err(Error::InvalidParameter("neighborhood size must be at least 1".into()));
    }
    let n = ks.n();
    let r = ks.len() as f64;
    let mut w = Array2::<f64>::zeros((n, n));
    for k in ks.kernels() {
        let vals = k.values();
        for i in 0..n {
            for j in top_indices(vals.row(i), tau, |j| j != i) {
                w[[i, j]] += 1.0 / r;
            }
        }
    }
    Ok(AffinityGraphs::unsupervised(max_symmetrize(w.view())))
}

/// Kernel slices `K^(i)`, stored as one `N x N x R` array indexed
/// `[i, n, r] = K_r(y_n, y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSliceStack {
    data: Array3<f64>,
}

impl KernelSliceStack {
    pub fn n(&self) -> usize {
        self.data.dim().0
    }

    pub fn r(&self) -> usize {
        self.data.dim().2
    }

    /// `K^(i)`, an `N x R` view.
    pub fn slice(&self, i: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), i)
    }

    /// `K_r` reassembled from the slices.
    pub fn kernel(&self, r: usize) -> Array2<f64> {
        self.data.index_axis(Axis(2), r).t().to_owned()
    }

    /// `K_r^T` as a view, rows indexed by sample `i`.
    fn kernel_t(&self, r: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(2), r)
    }

    /// Columns `K^(i) beta`, i.e. the ensemble kernel `K_beta`.
    fn combine(&self, beta: ArrayView1<'_, f64>) -> Array2<f64> {
        let n = self.n();
        let mut x = Array2::zeros((n, n));
        for (r, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                x.scaled_add(b, &self.kernel_t(r).t());
            }
        }
        x
    }
}

pub fn build_slices(ks: &KernelSet) -> KernelSliceStack {
    let n = ks.n();
    let mut data = Array3::zeros((n, n, ks.len()));
    for (r, k) in ks.kernels().iter().enumerate() {
        let vals = k.values();
        for i in 0..n {
            data.slice_mut(s![i, .., r]).assign(&vals.column(i));
        }
    }
    KernelSliceStack { data }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScatterKind {
    SwBeta,
    SwpBeta,
    SwU,
    SwpU,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterMatrix {
    pub values: Array2<f64>,
    pub which: ScatterKind,
}

fn check_graph(slices: &KernelSliceStack, graph: &GraphForm<'_>) -> Result<()> {
    if graph.n() != slices.n() {
        return Err(Error::DimensionMismatch {
            context: "graph size",
            expected: slices.n(),
            found: graph.n(),
        });
    }
    Ok(())
}

/// `N x N` scatter of the embedded samples `K^(i) beta` under `graph`.
pub fn scatter_beta(
    slices: &KernelSliceStack,
    beta: ArrayView1<'_, f64>,
    graph: GraphForm<'_>,
    which: ScatterKind,
) -> Result<ScatterMatrix> {
    check_graph(slices, &graph)?;
    if beta.len() != slices.r() {
        return Err(Error::DimensionMismatch {
            context: "kernel weights",
            expected: slices.r(),
            found: beta.len(),
        });
    }
    let x = slices.combine(beta);
    let l = graph.quadratic();
    let values = symmetrize(x.dot(&l).dot(&x.t()).view());
    Ok(ScatterMatrix { values, which })
}

/// `R x R` scatter `sum_ij w_ij (K^(i) - K^(j))^T U U^T (K^(i) - K^(j))`.
pub fn scatter_u(slices: &KernelSliceStack, u: ArrayView2<'_, f64>, graph: GraphForm<'_>, which: ScatterKind) -> Result<ScatterMatrix> {
    check_graph(slices, &graph)?;
    if u.nrows() != slices.n() {
        return Err(Error::DimensionMismatch {
            context: "embedding basis rows",
            expected: slices.n(),
            found: u.nrows(),
        });
    }
    let r = slices.r();
    let l = graph.quadratic();
    // P_r = K_r^T U: row i is the r-th column of K^(i) projected on U
    let p: Vec<Array2<f64>> = (0..r).map(|k| slices.kernel_t(k).dot(&u)).collect();
    let lp: Vec<Array2<f64>> = p.iter().map(|pk| l.dot(pk)).collect();
    let mut values = Array2::zeros((r, r));
    for a in 0..r {
        for b in a..r {
            let v = (&p[a] * &lp[b]).sum();
            values[[a, b]] = v;
            values[[b, a]] = v;
        }
    }
    Ok(ScatterMatrix {
        values: symmetrize(values.view()),
        which,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRatioSolution {
    /// Orthonormal `N x d` basis.
    pub u: Array2<f64>,
    /// `trace(U^T S_W U) / trace(U^T S_W' U)` on the unregularized pair.
    pub ratio: f64,
    /// Ratio sequence of the Newton iteration (regularized denominator).
    pub lambda_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub const TRACE_RATIO_TOL: f64 = 1e-9;
pub const TRACE_RATIO_MAX_ITER: usize = 200;
/// Ridge added to the denominator scatter, relative to its mean eigenvalue.
pub const DENOMINATOR_RIDGE: f64 = 1e-8;

/// Minimizes `trace(U^T S_W U) / trace(U^T S_W' U)` over orthonormal
/// `N x d` bases by the decomposed Newton iteration.
pub fn optimize_u(s_w: ArrayView2<'_, f64>, s_wp: ArrayView2<'_, f64>, d: usize) -> Result<TraceRatioSolution> {
    optimize_u_from(s_w, s_wp, d, None)
}

/// As [`optimize_u`], but falls back to `incumbent` when it scores better,
/// so alternating schemes never lose ground.
pub fn optimize_u_from(
    s_w: ArrayView2<'_, f64>,
    s_wp: ArrayView2<'_, f64>,
    d: usize,
    incumbent: Option<ArrayView2<'_, f64>>,
) -> Result<TraceRatioSolution> {
    let n = s_w.nrows();
    if s_w.ncols() != n || s_wp.dim() != (n, n) {
        return Err(Error::DimensionMismatch {
            context: "trace-ratio scatter pair",
            expected: n,
            found: s_wp.nrows(),
        });
    }
    if d == 0 || d > n {
        return Err(Error::InvalidParameter(format!("embedding dimension {d} outside 1..={n}")));
    }
    let a = symmetrize(s_w);
    let mut b = symmetrize(s_wp);
    let tb = trace(b.view());
    if !(tb > 0.0) {
        return Err(Error::SingularDenominator);
    }
    let eps = DENOMINATOR_RIDGE * tb / n as f64;
    for i in 0..n {
        b[[i, i]] += eps;
    }
    let ratio_of = |u: ArrayView2<'_, f64>| quad_trace(a.view(), u) / quad_trace(b.view(), u);

    let (_, vecs) = sym_eigh(a.view())?;
    let mut u = vecs.slice(s![.., ..d]).to_owned();
    let mut lambda = ratio_of(u.view());
    if let Some(inc) = incumbent.filter(|inc| inc.dim() == (n, d)) {
        let r = ratio_of(inc);
        if r < lambda {
            u = inc.to_owned();
            lambda = r;
        }
    }
    let mut history = vec![lambda];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < TRACE_RATIO_MAX_ITER {
        iterations += 1;
        let m = &a - &(&b * lambda);
        let (_, vecs) = sym_eigh(m.view())?;
        let u_new = vecs.slice(s![.., ..d]).to_owned();
        let next = ratio_of(u_new.view());
        if next > lambda {
            // round-off at the fixed point; keep the better basis
            converged = true;
            break;
        }
        u = u_new;
        history.push(next);
        let delta = (lambda - next).abs();
        lambda = next;
        if delta < TRACE_RATIO_TOL {
            converged = true;
            break;
        }
    }

    let true_ratio = |u: ArrayView2<'_, f64>| -> Option<f64> {
        let den = quad_trace(s_wp, u);
        (den >= 1e-12).then(|| quad_trace(s_w, u) / den)
    };
    let mut best = true_ratio(u.view()).map(|r| (u.clone(), r));
    if let Some(inc) = incumbent {
        if inc.dim() == (n, d) {
            if let Some(r_inc) = true_ratio(inc) {
                if best.as_ref().map_or(true, |(_, r)| r_inc < *r) {
                    best = Some((inc.to_owned(), r_inc));
                }
            }
        }
    }
    let (u, ratio) = best.ok_or(Error::SingularDenominator)?;
    Ok(TraceRatioSolution {
        u,
        ratio,
        lambda_history: history,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSolution {
    /// Satisfies `beta^T S_W'^U beta = 1`.
    pub beta: KernelWeights,
    pub objective: f64,
    /// Lower bound from the convex relaxation, when it was solved.
    pub relaxed_objective: Option<f64>,
}

/// Minimizes `beta^T S_W^U beta` subject to `beta^T S_W'^U beta = 1`,
/// `beta >= 0`.
pub fn optimize_beta(s_w_u: ArrayView2<'_, f64>, s_wp_u: ArrayView2<'_, f64>) -> Result<BetaSolution> {
    optimize_beta_from(s_w_u, s_wp_u, None)
}

/// Candidate starting points: the rank-one rounding of the relaxed
/// solution, `incumbent`, the uniform vector and every vertex. Each is
/// refined by projected gradient on the simplex and the best ratio wins.
pub fn optimize_beta_from(
    s_w_u: ArrayView2<'_, f64>,
    s_wp_u: ArrayView2<'_, f64>,
    incumbent: Option<ArrayView1<'_, f64>>,
) -> Result<BetaSolution> {
    let r = s_w_u.nrows();
    if r == 0 || s_w_u.ncols() != r || s_wp_u.dim() != (r, r) {
        return Err(Error::DimensionMismatch {
            context: "beta scatter pair",
            expected: r,
            found: s_wp_u.nrows(),
        });
    }
    if !crate::linalg::all_finite(s_w_u) || !crate::linalg::all_finite(s_wp_u) {
        return Err(Error::NonFiniteInput);
    }
    // scale-free copies: the argmin direction is invariant to positive scaling
    let sa = scale_of(s_w_u);
    let sb = scale_of(s_wp_u);
    let a = symmetrize(s_w_u).mapv(|v| v / sa);
    let b = symmetrize(s_wp_u).mapv(|v| v / sb);

    let mut starts: Vec<Array1<f64>> = Vec::new();
    let mut relaxed_objective = None;
    if r > 1 {
        let mut b_reg = b.clone();
        let ridge = 1e-6 * trace(b.view()).max(0.0) / r as f64;
        for i in 0..r {
            b_reg[[i, i]] += ridge;
        }
        // the relaxation only seeds the local search; failure is not fatal
        if let Ok(sol) = solve_relaxed(a.view(), b_reg.view(), &BarrierOptions::default()) {
            relaxed_objective = Some(sol.objective * sa / sb);
            if let Ok(Some(v)) = round_to_beta(sol.b.view()) {
                starts.push(v);
            }
        }
    }
    if let Some(inc) = incumbent {
        if inc.len() == r && inc.iter().all(|&v| v >= 0.0 && v.is_finite()) && inc.sum() > 0.0 {
            starts.push(inc.to_owned());
        }
    }
    starts.push(Array1::from_elem(r, 1.0 / r as f64));
    for k in 0..r {
        let mut e = Array1::zeros(r);
        e[k] = 1.0;
        starts.push(e);
    }

    let mut best: Option<(Array1<f64>, f64)> = None;
    for start in starts {
        let x0 = project_simplex(start.view());
        for x in [x0.clone(), polish(a.view(), b.view(), x0)] {
            if let Some(f) = ratio(a.view(), b.view(), x.view()) {
                if best.as_ref().map_or(true, |(_, fb)| f < *fb) {
                    best = Some((x, f));
                }
            }
        }
    }
    let (x, _) = best.ok_or(Error::Infeasible)?;
    let den = x.dot(&s_wp_u.dot(&x));
    if !(den > 0.0) {
        return Err(Error::Infeasible);
    }
    let beta = x.mapv(|v| v / den.sqrt());
    let objective = beta.dot(&s_w_u.dot(&beta));
    Ok(BetaSolution {
        beta: KernelWeights::new(beta)?,
        objective,
        relaxed_objective,
    })
}

fn scale_of(m: ArrayView2<'_, f64>) -> f64 {
    let t = trace(m).abs() / m.nrows() as f64;
    if t > 0.0 {
        t
    } else {
        let mx = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if mx > 0.0 {
            mx
        } else {
            1.0
        }
    }
}

fn ratio(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> Option<f64> {
    let den = x.dot(&b.dot(&x));
    // relative floor keeps near-infeasible directions out
    let floor = 1e-14 * b.diag().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    (den > floor).then(|| x.dot(&a.dot(&x)) / den)
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.mapv(|x| (x - theta).max(0.0))
}

/// Projected gradient with Armijo backtracking on the simplex for the
/// ratio `x^T A x / x^T B x`.
fn polish(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, mut x: Array1<f64>) -> Array1<f64> {
    let Some(mut f) = ratio(a, b, x.view()) else {
        return x;
    };
    let mut step = 1.0;
    for _ in 0..2000 {
        let ax = a.dot(&x);
        let bx = b.dot(&x);
        let den = x.dot(&bx);
        let grad = (&ax - &(&bx * f)) * (2.0 / den);
        let mut moved = false;
        while step > 1e-16 {
            let cand = project_simplex((&x - &(&grad * step)).view());
            if let Some(fc) = ratio(a, b, cand.view()) {
                let decrease = grad.dot(&(&x - &cand));
                if fc <= f - 1e-4 * decrease && decrease > 0.0 {
                    let shift = (&cand - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    x = cand;
                    let done = f - fc <= 1e-15 * f.abs().max(1e-300) || shift < 1e-13;
                    f = fc;
                    moved = !done;
                    step *= 2.0;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub u: Array2<f64>,
    /// Scaled so that `beta^T S_W'^U beta = 1` for the returned `U`.
    pub beta: KernelWeights,
    pub d: usize,
    /// Trace ratio of `(U, beta)` after every round; nonincreasing.
    pub objective_history: Vec<f64>,
    /// Trace ratio of the returned pair.
    pub ratio: f64,
    pub rounds: usize,
    pub converged: bool,
}

pub const ALTERNATION_TOL: f64 = 1e-6;
pub const ALTERNATION_MAX_ROUNDS: usize = 50;
/// Largest multiple of a weight step tried by the extrapolation.
const MAX_EXTRAPOLATION: f64 = 64.0;

fn u_step(
    slices: &KernelSliceStack,
    graphs: &AffinityGraphs,
    beta: ArrayView1<'_, f64>,
    d: usize,
    eps: f64,
    incumbent: Option<ArrayView2<'_, f64>>,
) -> Result<TraceRatioSolution> {
    let mut sw = scatter_beta(slices, beta, graphs.numerator(), ScatterKind::SwBeta)?.values;
    let swp = scatter_beta(slices, beta, graphs.denominator(), ScatterKind::SwpBeta)?;
    let shift = eps * beta.dot(&beta);
    sw.diag_mut().mapv_inplace(|v| v + shift);
    optimize_u_from(sw.view(), swp.values.view(), d, incumbent)
}

/// Alternates the `U` and `beta` steps from `init_beta` until the
/// simplex-normalized weights move by less than 1e-6 (ell-infinity) or
/// 50 rounds pass.
///
/// Plain alternation zig-zags when `U` and `beta` are coupled, so each
/// `beta` step is followed by a doubling search along the same direction
/// (projected onto the simplex), scored by the re-optimized trace ratio.
/// Candidates are only accepted when they lower the ratio.
///
/// `ridge` adds `eps ||beta||^2 I` to the numerator scatter, with `eps`
/// set to `ridge` times the mean diagonal of `S_W(init_beta)` per unit
/// weight norm. Without it a full-rank kernel can make every class graph
/// constant and reach a zero ratio regardless of how informative it is.
/// The `beta` step uses the matching `eps d I`, so both steps minimize the
/// same objective.
pub fn alternate_u_beta(
    slices: &KernelSliceStack,
    graphs: &AffinityGraphs,
    d: usize,
    init_beta: &KernelWeights,
    ridge: f64,
) -> Result<EmbeddingState> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge must be nonnegative, got {ridge}")));
    }
    if graphs.n() != slices.n() {
        return Err(Error::DimensionMismatch {
            context: "graph size",
            expected: slices.n(),
            found: graphs.n(),
        });
    }
    if init_beta.len() != slices.r() {
        return Err(Error::DimensionMismatch {
            context: "kernel weights",
            expected: slices.r(),
            found: init_beta.len(),
        });
    }
    let mut beta = init_beta.to_simplex().as_array().clone();
    let eps = if ridge == 0.0 {
        0.0
    } else {
        let sw = scatter_beta(slices, beta.view(), graphs.numerator(), ScatterKind::SwBeta)?;
        ridge * trace(sw.values.view()) / (slices.n() as f64 * beta.dot(&beta))
    };
    let mut tr = u_step(slices, graphs, beta.view(), d, eps, None)?;
    let mut history = Vec::new();
    let mut rounds = 0;
    let mut converged = false;
    while rounds < ALTERNATION_MAX_ROUNDS {
        rounds += 1;
        let mut su = scatter_u(slices, tr.u.view(), graphs.numerator(), ScatterKind::SwU)?.values;
        su.diag_mut().mapv_inplace(|v| v + eps * d as f64);
        let sup = scatter_u(slices, tr.u.view(), graphs.denominator(), ScatterKind::SwpU)?;
        let sol = optimize_beta_from(su.view(), sup.values.view(), Some(beta.view()))?;
        let step = sol.beta.to_simplex().as_array() - &beta;
        let mut best_beta = &beta + &step;
        let mut best = u_step(slices, graphs, best_beta.view(), d, eps, Some(tr.u.view()))?;
        if best.ratio > tr.ratio {
            // the beta step cannot lose against the old basis; keep the old pair
            best_beta = beta.clone();
            best = tr.clone();
        } else {
            let mut omega = 2.0;
            while omega <= MAX_EXTRAPOLATION {
                let cand = project_simplex((&beta + &(&step * omega)).view());
                if simplex_change(cand.view(), best_beta.view()) == 0.0 {
                    break;
                }
                let t = u_step(slices, graphs, cand.view(), d, eps, Some(best.u.view()))?;
                if t.ratio >= best.ratio {
                    break;
                }
                best_beta = cand;
                best = t;
                omega *= 2.0;
            }
        }
        let change = simplex_change(beta.view(), best_beta.view());
        beta = best_beta;
        tr = best;
        history.push(tr.ratio);
        if change < ALTERNATION_TOL {
            converged = true;
            break;
        }
    }
    // rescale onto the constraint set of the final basis
    let sup = scatter_u(slices, tr.u.view(), graphs.denominator(), ScatterKind::SwpU)?.values;
    let den = beta.dot(&sup.dot(&beta));
    if !(den > 0.0) {
        return Err(Error::Infeasible);
    }
    Ok(EmbeddingState {
        u: tr.u,
        beta: KernelWeights::new(beta / den.sqrt())?,
        d,
        objective_history: history,
        ratio: tr.ratio,
        rounds,
        converged,
    })
}

/// `max_r |a_r / sum(a) - b_r / sum(b)|`.
pub fn simplex_change(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let sa = a.sum();
    let sb = b.sum();
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x / sa - y / sb).abs()))
}
