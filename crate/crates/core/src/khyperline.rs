//! K-hyperline clustering: partitions samples among `K` one-dimensional
//! subspaces, each centroid being the principal direction of its members.
//!
//! [`k2hypl`] works purely from a Gram matrix, with every atom represented
//! implicitly as `phi(Y) a_k d_k`. [`khypl_euclidean`] is the same procedure
//! with explicit atoms in the input space; with a linear kernel the two
//! produce identical memberships.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Quadratic forms at or below this value mark a degenerate atom.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KHyperlineConfig {
    pub k_atoms: usize,
    /// Inner power-iteration steps per assignment.
    pub inner_iters: usize,
    pub max_outer: usize,
    /// Early exit of the inner loop on `max |H_new - H|`.
    pub tol: f64,
    pub norm_floor: f64,
    pub seed: u64,
    /// Keep the membership vector of every outer iteration.
    pub record_trace: bool,
}

impl KHyperlineConfig {
    pub fn new(k_atoms: usize, seed: u64) -> Self {
        Self {
            k_atoms,
            inner_iters: 10,
            max_outer: 100,
            tol: 1e-8,
            norm_floor: NORM_FLOOR,
            seed,
            record_trace: false,
        }
    }
}

/// Result of a clustering run.
///
/// `a = Z ⊙ h` holds exactly and `d` normalizes the atoms defined by `a`,
/// i.e. `diag((a d)^T K (a d)) = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// Cluster index of every sample.
    pub membership: Vec<usize>,
    pub h: Array2<f64>,
    pub a: Array2<f64>,
    /// Diagonal of the atom normalizer `D`.
    pub d: Array1<f64>,
    pub k_atoms: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    /// `sum_i h(i, z_i)^2` after each outer iteration.
    pub energy_history: Vec<f64>,
    pub repairs: usize,
    pub membership_trace: Vec<Vec<usize>>,
}

impl ClusterState {
    pub fn n(&self) -> usize {
        self.membership.len()
    }

    /// Binary `N x K` membership matrix.
    pub fn membership_matrix(&self) -> Array2<f64> {
        membership_matrix(&self.membership, self.k_atoms)
    }

    /// Coefficient of every sample on its own atom.
    pub fn coefficients(&self) -> Array1<f64> {
        Array1::from_iter(
            self.membership
                .iter()
                .enumerate()
                .map(|(i, &k)| self.a[[i, k]]),
        )
    }
}

pub fn membership_matrix(z: &[usize], k_atoms: usize) -> Array2<f64> {
    let mut m = Array2::zeros((z.len(), k_atoms));
    for (i, &k) in z.iter().enumerate() {
        m[[i, k]] = 1.0;
    }
    m
}

/// Column of the absolute maximum of every row; ties go to the lowest index.
pub fn assign_g(h: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(h.rows().into_iter().map(|row| abs_argmax(row.iter().copied())).collect())
}

pub(crate) fn abs_argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, v) in values.enumerate() {
        if v.abs() > best_val {
            best = k;
            best_val = v.abs();
        }
    }
    best
}

/// Diagonal of `D = diag(A^T K A)^{-1/2}`, the normalizer that gives every
/// implicit atom `phi(Y) a_k d_k` unit RKHS norm.
pub fn gamma_norm(a: ArrayView2<'_, f64>, kyy: ArrayView2<'_, f64>, norm_floor: f64) -> Result<Array1<f64>> {
    if kyy.nrows() != a.nrows() || kyy.ncols() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "gamma_norm kernel",
            expected: a.nrows(),
            found: kyy.nrows(),
        });
    }
    let ka = kyy.dot(&a);
    let mut d = Array1::zeros(a.ncols());
    for k in 0..a.ncols() {
        let q = a.column(k).dot(&ka.column(k));
        if !(q > norm_floor) {
            return Err(Error::DegenerateAtom { column: k, energy: q });
        }
        d[k] = q.sqrt().recip();
    }
    Ok(d)
}

/// Initial coefficients: each group centroid is the sum of its members,
/// every member oriented by the sign of its kernel value with the group's
/// lowest-index member. Negating a sample then leaves its contribution
/// unchanged, so memberships do not depend on sample signs.
fn oriented_membership(z: &[usize], k_atoms: usize, k: impl Fn(usize, usize) -> f64) -> Array2<f64> {
    let mut reference = vec![None; k_atoms];
    let mut h = Array2::zeros((z.len(), k_atoms));
    for (i, &c) in z.iter().enumerate() {
        let r = *reference[c].get_or_insert(i);
        h[[i, c]] = if k(i, r) < 0.0 { -1.0 } else { 1.0 };
    }
    h
}

/// Shuffles the samples and deals them round-robin into `k` groups, so that
/// no group starts empty.
pub fn random_partition(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut z = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        z[i] = pos % k;
    }
    z
}

fn check_sizes(n: usize, cfg: &KHyperlineConfig) -> Result<()> {
    if cfg.k_atoms == 0 {
        return Err(Error::InvalidParameter("k_atoms must be at least 1".into()));
    }
    if cfg.k_atoms > n {
        return Err(Error::InvalidParameter(format!(
            "k_atoms ({}) exceeds the number of samples ({n})",
            cfg.k_atoms
        )));
    }
    if cfg.inner_iters == 0 || cfg.max_outer == 0 {
        return Err(Error::InvalidParameter("iteration counts must be at least 1".into()));
    }
    Ok(())
}

/// Moves the highest-residual sample into each degenerate cluster and seeds
/// its correlation with the sample's own norm. Donor clusters must keep at
/// least one member.
fn repair(
    z: &mut [usize],
    h: &mut Array2<f64>,
    degenerate: &[usize],
    self_energy: &Array1<f64>,
    norm_floor: f64,
) -> Result<()> {
    let k_atoms = h.ncols();
    let mut counts = vec![0usize; k_atoms];
    for &k in z.iter() {
        counts[k] += 1;
    }
    let mut taken = vec![false; z.len()];
    for &k in degenerate {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..z.len() {
            let own = z[i];
            if taken[i] || own == k || counts[own] < 2 {
                continue;
            }
            let residual = self_energy[i] - h[[i, own]].powi(2);
            if best.map_or(true, |(_, e)| residual > e) {
                best = Some((i, residual));
            }
        }
        match best {
            Some((i, _)) if self_energy[i] > norm_floor => {
                counts[z[i]] -= 1;
                counts[k] += 1;
                z[i] = k;
                h[[i, k]] = self_energy[i].sqrt();
                taken[i] = true;
            }
            _ => {
                return Err(Error::DegenerateAtom {
                    column: k,
                    energy: 0.0,
                })
            }
        }
    }
    Ok(())
}

/// `out^T[k, :] = sum_{i in C_k} a_i K[i, :]`, exploiting one nonzero per row
/// of `A`. Returned as the `N x K` product `K A`.
fn kernel_times_coeffs(kyy: ArrayView2<'_, f64>, z: &[usize], coeff: &[f64], k_atoms: usize) -> Array2<f64> {
    let n = z.len();
    let mut out_t = Array2::<f64>::zeros((k_atoms, n));
    for i in 0..n {
        let a = coeff[i];
        if a == 0.0 {
            continue;
        }
        let mut dst = out_t.row_mut(z[i]);
        let src = kyy.row(i);
        for j in 0..n {
            dst[j] += a * src[j];
        }
    }
    out_t.reversed_axes()
}

/// Kernel K-hyperline clustering from a seeded random partition.
pub fn k2hypl(kyy: ArrayView2<'_, f64>, cfg: &KHyperlineConfig) -> Result<ClusterState> {
    let init = random_partition(kyy.nrows(), cfg.k_atoms.max(1), cfg.seed);
    k2hypl_from(kyy, init, cfg)
}

/// Kernel K-hyperline clustering from a given initial membership.
pub fn k2hypl_from(kyy: ArrayView2<'_, f64>, init: Vec<usize>, cfg: &KHyperlineConfig) -> Result<ClusterState> {
    let n = kyy.nrows();
    if kyy.ncols() != n {
        return Err(Error::NotSquare {
            rows: n,
            cols: kyy.ncols(),
        });
    }
    if init.len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial membership",
            expected: n,
            found: init.len(),
        });
    }
    check_sizes(n, cfg)?;
    if init.iter().any(|&k| k >= cfg.k_atoms) {
        return Err(Error::InvalidParameter("initial membership out of range".into()));
    }
    if kyy.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let k_atoms = cfg.k_atoms;
    let self_energy = kyy.diag().to_owned();
    let mut z = init;
    let mut trace = Vec::new();

    let mut h = oriented_membership(&z, k_atoms, |i, j| kyy[[i, j]]);
    let mut repairs = 0;
    let mut energy_history = Vec::new();
    let mut outer = 0;
    let mut converged = false;

    let (mut a_coeff, mut d) = loop {
        let coeff: Vec<f64> = (0..n).map(|i| h[[i, z[i]]]).collect();
        let ka = kernel_times_coeffs(kyy, &z, &coeff, k_atoms);
        match normalizers(&ka, &z, &coeff, k_atoms, cfg.norm_floor) {
            Ok(d) => {
                let mut h_new = ka;
                scale_columns(&mut h_new, &d);
                h = h_new;
                break (coeff, d);
            }
            Err(bad) => {
                if repairs > 0 {
                    return Err(Error::DegenerateAtom { column: bad[0], energy: 0.0 });
                }
                // no atoms yet: rank by raw sample energy
                let mut zero_h = Array2::zeros((n, k_atoms));
                repair(&mut z, &mut zero_h, &bad, &self_energy, cfg.norm_floor)?;
                for i in 0..n {
                    if zero_h[[i, z[i]]] != 0.0 {
                        h.row_mut(i).fill(0.0);
                        h[[i, z[i]]] = zero_h[[i, z[i]]];
                    }
                }
                repairs += 1;
            }
        }
    };
    let mut h_prev = h.clone();
    let mut z_a = z.clone();

    while outer < cfg.max_outer {
        outer += 1;
        if cfg.record_trace {
            trace.push(z.clone());
        }
        let mut repaired_here = false;
        let mut l = 0;
        while l < cfg.inner_iters {
            let coeff: Vec<f64> = (0..n).map(|i| h[[i, z[i]]]).collect();
            let ka = kernel_times_coeffs(kyy, &z, &coeff, k_atoms);
            let dn = match normalizers(&ka, &z, &coeff, k_atoms, cfg.norm_floor) {
                Ok(dn) => dn,
                Err(bad) => {
                    if repaired_here {
                        return Err(Error::DegenerateAtom { column: bad[0], energy: 0.0 });
                    }
                    repair(&mut z, &mut h, &bad, &self_energy, cfg.norm_floor)?;
                    repaired_here = true;
                    repairs += 1;
                    continue;
                }
            };
            let mut h_new = ka;
            scale_columns(&mut h_new, &dn);
            let delta = max_abs_diff(&h_new, &h);
            h_prev = std::mem::replace(&mut h, h_new);
            a_coeff = coeff;
            z_a.clone_from(&z);
            d = dn;
            l += 1;
            if delta < cfg.tol {
                break;
            }
        }
        let z_new = assign_g(h.view())?;
        energy_history.push(
            z_new
                .iter()
                .enumerate()
                .map(|(i, &k)| h[[i, k]].powi(2))
                .sum(),
        );
        if z_new == z {
            converged = true;
            break;
        }
        z = z_new;
    }

    let a = dense_coeffs(&z_a, &a_coeff, k_atoms);
    Ok(ClusterState {
        membership: z_a,
        h: h_prev,
        a,
        d,
        k_atoms,
        outer_iterations: outer,
        converged,
        energy_history,
        repairs,
        membership_trace: trace,
    })
}

fn normalizers(
    ka: &Array2<f64>,
    z: &[usize],
    coeff: &[f64],
    k_atoms: usize,
    floor: f64,
) -> std::result::Result<Array1<f64>, Vec<usize>> {
    let mut q = vec![0.0; k_atoms];
    for (i, (&k, &a)) in z.iter().zip(coeff).enumerate() {
        q[k] += a * ka[[i, k]];
    }
    let bad: Vec<usize> = (0..k_atoms).filter(|&k| !(q[k] > floor)).collect();
    if bad.is_empty() {
        Ok(Array1::from_iter(q.iter().map(|v| v.sqrt().recip())))
    } else {
        Err(bad)
    }
}

fn scale_columns(m: &mut Array2<f64>, d: &Array1<f64>) {
    for mut row in m.rows_mut() {
        for (v, &s) in row.iter_mut().zip(d) {
            *v *= s;
        }
    }
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn dense_coeffs(z: &[usize], coeff: &[f64], k_atoms: usize) -> Array2<f64> {
    let mut a = Array2::zeros((z.len(), k_atoms));
    for (i, (&k, &c)) in z.iter().zip(coeff).enumerate() {
        a[[i, k]] = c;
    }
    a
}

/// K-hyperline clustering with explicit atoms: `H = Y^T Psi`,
/// `Z = g(H)`, `Psi = Y A Gamma(Y A)^{-1}`. Columns of `y` are samples.
///
/// Initialization, inner-loop stopping and empty-cluster repair follow
/// [`k2hypl`] so that the two can be compared iteration by iteration.
pub fn khypl_euclidean(y: ArrayView2<'_, f64>, cfg: &KHyperlineConfig) -> Result<(Array2<f64>, ClusterState)> {
    let n = y.ncols();
    check_sizes(n, cfg)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let init = random_partition(n, cfg.k_atoms, cfg.seed);
    khypl_euclidean_from(y, init, cfg)
}

pub fn khypl_euclidean_from(
    y: ArrayView2<'_, f64>,
    init: Vec<usize>,
    cfg: &KHyperlineConfig,
) -> Result<(Array2<f64>, ClusterState)> {
    let (m, n) = y.dim();
    check_sizes(n, cfg)?;
    let k_atoms = cfg.k_atoms;
    let self_energy = Array1::from_iter(y.columns().into_iter().map(|c| c.dot(&c)));
    let mut z = init;
    let mut trace = Vec::new();
    let mut repairs = 0;

    // Psi = Y A Gamma(Y A)^{-1}; returns None listing collapsed columns.
    let atoms = |z: &[usize], a: &[f64]| -> std::result::Result<(Array2<f64>, Array1<f64>), Vec<usize>> {
        let mut ya = Array2::<f64>::zeros((m, k_atoms));
        for i in 0..n {
            if a[i] != 0.0 {
                let mut col = ya.column_mut(z[i]);
                col.scaled_add(a[i], &y.column(i));
            }
        }
        let mut d = Array1::zeros(k_atoms);
        let mut bad = Vec::new();
        for k in 0..k_atoms {
            let q = ya.column(k).dot(&ya.column(k));
            if q > cfg.norm_floor {
                d[k] = q.sqrt().recip();
            } else {
                bad.push(k);
            }
        }
        if !bad.is_empty() {
            return Err(bad);
        }
        scale_columns(&mut ya, &d);
        Ok((ya, d))
    };

    let mut h = oriented_membership(&z, k_atoms, |i, j| y.column(i).dot(&y.column(j)));
    let (mut psi, mut d) = loop {
        let coeff: Vec<f64> = (0..n).map(|i| h[[i, z[i]]]).collect();
        match atoms(&z, &coeff) {
            Ok(v) => break v,
            Err(bad) => {
                if repairs > 0 {
                    return Err(Error::DegenerateAtom { column: bad[0], energy: 0.0 });
                }
                let mut zero_h = Array2::zeros((n, k_atoms));
                repair(&mut z, &mut zero_h, &bad, &self_energy, cfg.norm_floor)?;
                for i in 0..n {
                    if zero_h[[i, z[i]]] != 0.0 {
                        h.row_mut(i).fill(0.0);
                        h[[i, z[i]]] = zero_h[[i, z[i]]];
                    }
                }
                repairs += 1;
            }
        }
    };
    let mut a_coeff: Vec<f64> = (0..n).map(|i| h[[i, z[i]]]).collect();
    h = y.t().dot(&psi);
    let mut h_prev = h.clone();
    let mut z_a = z.clone();
    let mut energy_history = Vec::new();
    let mut outer = 0;
    let mut converged = false;

    while outer < cfg.max_outer {
        outer += 1;
        if cfg.record_trace {
            trace.push(z.clone());
        }
        let mut repaired_here = false;
        let mut l = 0;
        while l < cfg.inner_iters {
            let coeff: Vec<f64> = (0..n).map(|i| h[[i, z[i]]]).collect();
            let (psi_new, dn) = match atoms(&z, &coeff) {
                Ok(v) => v,
                Err(bad) => {
                    if repaired_here {
                        return Err(Error::DegenerateAtom { column: bad[0], energy: 0.0 });
                    }
                    repair(&mut z, &mut h, &bad, &self_energy, cfg.norm_floor)?;
                    repaired_here = true;
                    repairs += 1;
                    continue;
                }
            };
            let h_new = y.t().dot(&psi_new);
            let delta = max_abs_diff(&h_new, &h);
            h_prev = std::mem::replace(&mut h, h_new);
            psi = psi_new;
            a_coeff = coeff;
            z_a.clone_from(&z);
            d = dn;
            l += 1;
            if delta < cfg.tol {
                break;
            }
        }
        let z_new = assign_g(h.view())?;
        energy_history.push(
            z_new
                .iter()
                .enumerate()
                .map(|(i, &k)| h[[i, k]].powi(2))
                .sum(),
        );
        if z_new == z {
            converged = true;
            break;
        }
        z = z_new;
    }

    let a = dense_coeffs(&z_a, &a_coeff, k_atoms);
    Ok((
        psi,
        ClusterState {
            membership: z_a,
            h: h_prev,
            a,
            d,
            k_atoms,
            outer_iterations: outer,
            converged,
            energy_history,
            repairs,
            membership_trace: trace,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};
    use proptest::prelude::*;
    use rand::Rng;

    fn lines(m: usize, per_line: usize, dirs: &[Vec<f64>], seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = per_line * dirs.len();
        let mut y = Array2::zeros((m, n));
        let mut truth = Vec::with_capacity(n);
        for (i, mut col) in y.columns_mut().into_iter().enumerate() {
            let l = i % dirs.len();
            let mut t: f64 = rng.gen_range(0.5..2.0);
            if rng.gen_bool(0.5) {
                t = -t;
            }
            for (c, &v) in col.iter_mut().zip(&dirs[l]) {
                *c = t * v;
            }
            truth.push(l);
        }
        (y, truth)
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        for i in 0..a.len() {
            for j in 0..a.len() {
                if (a[i] == a[j]) != (b[i] == b[j]) {
                    return false;
                }
            }
        }
        true
    }

    fn unit(m: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; m];
        v[k] = 1.0;
        v
    }

    #[test]
    fn assignment_uses_absolute_value_and_lowest_index() {
        let h = array![[1.0, -1.0], [0.5, -2.0], [0.0, 0.0], [-3.0, 2.9]];
        assert_eq!(assign_g(h.view()).unwrap(), vec![0, 1, 0, 0]);
        assert!(assign_g(array![[f64::NAN, 1.0]].view()).is_err());
    }

    #[test]
    fn gamma_norm_matches_explicit_quadratic_form() {
        let k = array![[2.0, 0.5, 0.1], [0.5, 1.0, 0.3], [0.1, 0.3, 3.0]];
        let a = array![[1.0, 0.0], [-2.0, 0.0], [0.0, 0.5]];
        let d = gamma_norm(a.view(), k.view(), NORM_FLOOR).unwrap();
        for c in 0..2 {
            let mut q = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    q += a[[i, c]] * k[[i, j]] * a[[j, c]];
                }
            }
            assert!((d[c] - 1.0 / q.sqrt()).abs() < 1e-14);
        }
        let zero = Array2::zeros((3, 1));
        assert!(matches!(
            gamma_norm(zero.view(), k.view(), NORM_FLOOR),
            Err(Error::DegenerateAtom { column: 0, .. })
        ));
    }

    #[test]
    fn random_partition_fills_every_group() {
        let z = random_partition(10, 3, 4);
        let mut counts = [0; 3];
        for &k in &z {
            counts[k] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 10);
        assert!(counts.iter().all(|&c| c >= 3));
        assert_eq!(z, random_partition(10, 3, 4));
    }

    #[test]
    fn recovers_orthogonal_lines_with_zero_residual() {
        let dirs = vec![unit(5, 0), unit(5, 2), unit(5, 4)];
        let (y, truth) = lines(5, 8, &dirs, 11);
        let k = y.t().dot(&y);
        let state = k2hypl(k.view(), &KHyperlineConfig::new(3, 3)).unwrap();
        assert!(state.converged);
        assert!(same_partition(&state.membership, &truth));
        // every sample lies on its atom: |h(i, z_i)|^2 equals its energy
        for i in 0..truth.len() {
            let hk = state.h[[i, state.membership[i]]];
            assert!((hk * hk - k[[i, i]]).abs() < 1e-9);
        }
    }

    #[test]
    fn single_atom_is_principal_eigenvector() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = Array2::from_shape_fn((4, 12), |_| rng.gen_range(-1.0..1.0));
        let k = y.t().dot(&y);
        let mut cfg = KHyperlineConfig::new(1, 0);
        cfg.inner_iters = 2000;
        cfg.tol = 1e-14;
        let state = k2hypl(k.view(), &cfg).unwrap();
        // eigen oracle via the small 4x4 scatter Y Y^T
        let (vals, vecs) = crate::linalg::sym_eigh(y.dot(&y.t()).view()).unwrap();
        let top = vecs.column(3);
        let proj = y.t().dot(&top);
        let flip = if proj.dot(&state.h.column(0)) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..12 {
            assert!((flip * state.h[[i, 0]] - proj[i]).abs() < 1e-8);
        }
        assert!((state.h.column(0).mapv(|v| v * v).sum() - vals[3]).abs() < 1e-8);
    }

    #[test]
    fn kernel_and_euclidean_versions_agree_with_linear_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = Array2::from_shape_fn((6, 30), |_| rng.gen_range(-1.0..1.0));
        let k = y.t().dot(&y);
        let mut cfg = KHyperlineConfig::new(4, 17);
        cfg.record_trace = true;
        let ks = k2hypl(k.view(), &cfg).unwrap();
        let (psi, es) = khypl_euclidean(y.view(), &cfg).unwrap();
        assert_eq!(ks.membership_trace, es.membership_trace);
        assert_eq!(ks.membership, es.membership);
        // implicit atoms Y a d equal the explicit ones
        let mut implicit = y.dot(&ks.a);
        for (mut col, &s) in implicit.axis_iter_mut(Axis(1)).zip(&ks.d) {
            col *= s;
        }
        for (p, q) in implicit.iter().zip(psi.iter()) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn atoms_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let y = Array2::from_shape_fn((3, 25), |_| rng.gen_range(-1.0..1.0));
        let k = y.t().dot(&y);
        let s = k2hypl(k.view(), &KHyperlineConfig::new(4, 1)).unwrap();
        for c in 0..4 {
            let ad = s.a.column(c).mapv(|v| v * s.d[c]);
            assert!((ad.dot(&k.dot(&ad)) - 1.0).abs() < 1e-10);
        }
        // a = Z ⊙ h
        let z = s.membership_matrix();
        for ((&a, &zz), &h) in s.a.iter().zip(z.iter()).zip(s.h.iter()) {
            assert_eq!(a, zz * h);
        }
    }

    #[test]
    fn duplicate_samples_trigger_repair_without_failing() {
        let y = array![[1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 0.0, 0.0]];
        let k = y.t().dot(&y);
        let mut cfg = KHyperlineConfig::new(2, 0);
        cfg.max_outer = 5;
        let s = k2hypl_from(k.view(), vec![0, 0, 0, 1], &cfg).unwrap();
        assert!(s.repairs > 0);
        assert!(s.d.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_bad_sizes() {
        let k = Array2::<f64>::eye(3);
        assert!(k2hypl(k.view(), &KHyperlineConfig::new(4, 0)).is_err());
        assert!(k2hypl(k.view(), &KHyperlineConfig::new(0, 0)).is_err());
        assert!(k2hypl_from(k.view(), vec![0, 5, 1], &KHyperlineConfig::new(2, 0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sign_flips_do_not_change_membership(seed in 0u64..500, flips in proptest::collection::vec(any::<bool>(), 15)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = Array2::from_shape_fn((4, 15), |_| rng.gen_range(-1.0..1.0));
            let mut yf = y.clone();
            for (mut col, &f) in yf.columns_mut().into_iter().zip(&flips) {
                if f {
                    col.mapv_inplace(|v| -v);
                }
            }
            let cfg = KHyperlineConfig::new(3, seed);
            let a = k2hypl(y.t().dot(&y).view(), &cfg).unwrap();
            let b = k2hypl(yf.t().dot(&yf).view(), &cfg).unwrap();
            prop_assert_eq!(a.membership, b.membership);
        }

        #[test]
        fn energy_does_not_decrease(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = Array2::from_shape_fn((5, 20), |_| rng.gen_range(-1.0..1.0));
            let mut cfg = KHyperlineConfig::new(3, seed);
            cfg.inner_iters = 500;
            cfg.tol = 1e-13;
            let s = k2hypl(y.t().dot(&y).view(), &cfg).unwrap();
            for w in s.energy_history.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{:?}", s.energy_history);
            }
        }
    }
}
