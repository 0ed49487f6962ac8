//! Small dense linear-algebra helpers on top of `ndarray`, with the
//! factorizations delegated to `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub(crate) fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Largest absolute entrywise difference between `a` and its transpose.
pub fn max_asymmetry(a: ArrayView2<'_, f64>) -> f64 {
    let n = a.nrows().min(a.ncols());
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

/// `(A + A^T) / 2`, bitwise symmetric.
pub fn symmetrize(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        out[[i, i]] = a[[i, i]];
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

pub fn all_finite(a: ArrayView2<'_, f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Eigen-decomposition of a symmetric matrix.
///
/// Eigenvalues come back in ascending order with eigenvectors in the
/// matching columns. Each eigenvector is sign-fixed so that its entry of
/// largest magnitude is positive (lowest index wins ties), which keeps
/// downstream results deterministic.
pub fn sym_eigh(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    if !all_finite(a) {
        return Err(Error::NonFiniteInput);
    }
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let eig = SymmetricEigen::try_new(to_na(a), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigen solver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[x]
            .partial_cmp(&eig.eigenvalues[y])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });
    let values = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, dst]] = sign * col[i];
        }
    }
    Ok((values, vectors))
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn solve_spd(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let chol = nalgebra::Cholesky::new(to_na(a)).ok_or(Error::SingularSystem)?;
    let x = chol.solve(&to_na(b));
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(from_na(&x))
}

/// `trace(U^T S U)` without forming the product.
pub fn quad_trace(s: ArrayView2<'_, f64>, u: ArrayView2<'_, f64>) -> f64 {
    let su = s.dot(&u);
    (&su * &u).sum()
}

pub fn trace(a: ArrayView2<'_, f64>) -> f64 {
    a.diag().sum()
}

/// Row sums as a vector.
pub fn row_sums(a: ArrayView2<'_, f64>) -> Array1<f64> {
    a.sum_axis(Axis(1))
}

/// Deterministic child seed: `index == 0` returns `master` unchanged.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    if index == 0 {
        return master;
    }
    // splitmix64 finalizer
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
