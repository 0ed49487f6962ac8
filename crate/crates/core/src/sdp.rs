//! Log-barrier interior-point solver for the convex relaxation of the
//! kernel-weight problem
//!
//! ```text
//! min  <S, B>   s.t.  <S', B> = 1,  beta >= 0,  B >= 0 (entrywise),
//!                     [[1, beta^T], [beta, B]] PSD
//! ```
//!
//! The block constraint is the Schur-complement form of `B >= beta beta^T`.
//! Problem sizes are tiny (one variable per kernel pair), so the Newton
//! systems are assembled densely.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, sym_eigh};

#[derive(Debug, Clone)]
pub struct BarrierOptions {
    /// Stop when the duality-gap bound `m / t` falls below this.
    pub gap_tol: f64,
    pub t0: f64,
    pub mu: f64,
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-10,
            t0: 1.0,
            mu: 20.0,
            max_newton: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    pub beta: Array1<f64>,
    pub b: Array2<f64>,
    pub objective: f64,
    pub newton_steps: usize,
}

struct Problem {
    r: usize,
    /// Upper-triangle index pairs of `B`, in variable order after `beta`.
    pairs: Vec<(usize, usize)>,
    c: Array1<f64>,
    a: Array1<f64>,
}

impl Problem {
    fn m(&self) -> usize {
        self.r + self.pairs.len()
    }

    /// Variables with their own `-log x` barrier: `beta` and off-diagonal `B`.
    fn is_sign_constrained(&self, k: usize) -> bool {
        k < self.r || {
            let (i, j) = self.pairs[k - self.r];
            i != j
        }
    }

    /// Nonzero unit entries of the block-matrix basis element of variable `k`.
    fn basis(&self, k: usize) -> Vec<(usize, usize)> {
        let (p, q) = if k < self.r {
            (0, k + 1)
        } else {
            let (i, j) = self.pairs[k - self.r];
            (i + 1, j + 1)
        };
        if p == q {
            vec![(p, p)]
        } else {
            vec![(p, q), (q, p)]
        }
    }

    fn block(&self, x: &Array1<f64>) -> Array2<f64> {
        let mut blk = Array2::zeros((self.r + 1, self.r + 1));
        blk[[0, 0]] = 1.0;
        for k in 0..self.m() {
            for (p, q) in self.basis(k) {
                blk[[p, q]] = x[k];
            }
        }
        blk
    }

    fn unpack_b(&self, x: &Array1<f64>) -> Array2<f64> {
        let mut b = Array2::zeros((self.r, self.r));
        for (idx, &(i, j)) in self.pairs.iter().enumerate() {
            b[[i, j]] = x[self.r + idx];
            b[[j, i]] = x[self.r + idx];
        }
        b
    }
}

/// `-log det` of the block plus the scalar barriers, or `None` outside the
/// interior.
fn barrier(p: &Problem, x: &Array1<f64>) -> Option<f64> {
    for k in 0..p.m() {
        if p.is_sign_constrained(k) && !(x[k] > 0.0) {
            return None;
        }
    }
    let chol = nalgebra::Cholesky::new(crate::linalg::to_na(p.block(x).view()))?;
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let mut phi = -logdet;
    for k in 0..p.m() {
        if p.is_sign_constrained(k) {
            phi -= x[k].ln();
        }
    }
    phi.is_finite().then_some(phi)
}

/// Undoes round-off drift in `<S', B> = 1`. Scaling `B` by `c` and `beta`
/// by `sqrt(c)` keeps the block PSD, so the iterate stays interior.
fn restore_equality(p: &Problem, mut x: Array1<f64>) -> Array1<f64> {
    let level = p.a.dot(&x);
    if level > 0.0 && level.is_finite() {
        let c = 1.0 / level;
        let sc = c.sqrt();
        for k in 0..p.m() {
            x[k] *= if k < p.r { sc } else { c };
        }
    }
    x
}

/// Solves the relaxation for symmetric `s` (objective) and positive
/// definite `s_prime` (normalization).
pub fn solve_relaxed(s: ArrayView2<'_, f64>, s_prime: ArrayView2<'_, f64>, opts: &BarrierOptions) -> Result<RelaxedSolution> {
    let r = s.nrows();
    if r == 0 || s.ncols() != r || s_prime.dim() != (r, r) {
        return Err(Error::DimensionMismatch {
            context: "relaxed beta program",
            expected: r,
            found: s_prime.nrows(),
        });
    }
    let mut pairs = Vec::new();
    for i in 0..r {
        for j in i..r {
            pairs.push((i, j));
        }
    }
    let m = r + pairs.len();
    let mut c = Array1::zeros(m);
    let mut a = Array1::zeros(m);
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        let w = if i == j { 1.0 } else { 2.0 };
        c[r + idx] = w * s[[i, j]];
        a[r + idx] = w * s_prime[[i, j]];
    }
    let prob = Problem { r, pairs, c, a };

    // strictly feasible start: B = alpha (I + 0.1 J), beta small
    let ones_quad: f64 = s_prime.sum();
    let tr: f64 = s_prime.diag().sum();
    let denom = tr + 0.1 * ones_quad;
    if !(denom > 0.0) {
        return Err(Error::Infeasible);
    }
    let alpha = 1.0 / denom;
    let mut x = Array1::zeros(m);
    for k in 0..r {
        x[k] = 0.1 * (alpha / r as f64).sqrt();
    }
    for (idx, &(i, j)) in prob.pairs.iter().enumerate() {
        x[r + idx] = if i == j { 1.1 * alpha } else { 0.1 * alpha };
    }
    if barrier(&prob, &x).is_none() {
        return Err(Error::Numerical("no strictly feasible starting point".into()));
    }

    let n_barrier = (r + 1) + prob.pairs.iter().filter(|(i, j)| i != j).count() + r;
    let mut t = opts.t0;
    let mut steps = 0;
    loop {
        // centering
        for _ in 0..opts.max_newton {
            let blk = prob.block(&x);
            let y = crate::linalg::from_na(
                &nalgebra::Cholesky::new(crate::linalg::to_na(blk.view()))
                    .ok_or_else(|| Error::Numerical("lost interior".into()))?
                    .inverse(),
            );
            let bases: Vec<Vec<(usize, usize)>> = (0..m).map(|k| prob.basis(k)).collect();
            let mut grad = Array1::zeros(m);
            let mut hess = Array2::zeros((m, m));
            for k in 0..m {
                let mut gk = 0.0;
                for &(p, q) in &bases[k] {
                    gk -= y[[q, p]];
                }
                if prob.is_sign_constrained(k) {
                    gk -= 1.0 / x[k];
                    hess[[k, k]] += 1.0 / (x[k] * x[k]);
                }
                grad[k] = t * prob.c[k] + gk;
                for l in k..m {
                    let mut h = 0.0;
                    for &(p, q) in &bases[k] {
                        for &(s_, t_) in &bases[l] {
                            h += y[[t_, p]] * y[[q, s_]];
                        }
                    }
                    hess[[k, l]] += h;
                    if l != k {
                        hess[[l, k]] += h;
                    }
                }
            }
            let rhs = ndarray::stack(ndarray::Axis(1), &[grad.view(), prob.a.view()])
                .map_err(|e| Error::Numerical(e.to_string()))?;
            let sol = solve_spd(hess.view(), rhs.view())?;
            let v1 = sol.column(0);
            let v2 = sol.column(1);
            let nu = -prob.a.dot(&v1) / prob.a.dot(&v2);
            let dx = -&v1.to_owned() - &(&v2 * nu);
            let decrement = dx.dot(&hess.dot(&dx));
            steps += 1;
            if decrement / 2.0 < 1e-12 {
                break;
            }
            let f0 = t * prob.c.dot(&x) + barrier(&prob, &x).unwrap_or(f64::INFINITY);
            let slope = grad.dot(&dx);
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-14 {
                let cand = &x + &(&dx * step);
                if let Some(phi) = barrier(&prob, &cand) {
                    if t * prob.c.dot(&cand) + phi <= f0 + 0.25 * step * slope {
                        x = restore_equality(&prob, cand);
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if n_barrier as f64 / t < opts.gap_tol {
            break;
        }
        t *= opts.mu;
    }

    let b = prob.unpack_b(&x);
    let objective = (&b * &s).sum();
    Ok(RelaxedSolution {
        beta: x.slice(ndarray::s![..r]).to_owned(),
        b,
        objective,
        newton_steps: steps,
    })
}

/// Rank-one rounding: principal eigenvector of `B`, oriented to a positive
/// sum, with negative entries clipped. `None` when nothing survives.
pub fn round_to_beta(b: ArrayView2<'_, f64>) -> Result<Option<Array1<f64>>> {
    let (vals, vecs) = sym_eigh(b)?;
    let r = b.nrows();
    let lead = vecs.column(r - 1).to_owned();
    let scale = vals[r - 1].max(0.0).sqrt();
    let oriented = if lead.sum() < 0.0 { -lead } else { lead };
    let clipped = oriented.mapv(|v| v.max(0.0) * scale);
    if clipped.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    Ok(Some(clipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_dimensional_program_is_pinned_by_constraint() {
        let sol = solve_relaxed(array![[3.0]].view(), array![[4.0]].view(), &BarrierOptions::default()).unwrap();
        assert!((sol.b[[0, 0]] - 0.25).abs() < 1e-8);
        assert!((sol.objective - 0.75).abs() < 1e-8);
    }

    #[test]
    fn relaxation_prefers_the_cheaper_kernel() {
        let s = array![[1.0, 0.0], [0.0, 5.0]];
        let sp = Array2::eye(2);
        let sol = solve_relaxed(s.view(), sp.view(), &BarrierOptions::default()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-6, "{}", sol.objective);
        let beta = round_to_beta(sol.b.view()).unwrap().unwrap();
        assert!(beta[0] > 0.99 && beta[1] < 1e-3, "{beta}");
    }

    #[test]
    fn entrywise_nonnegativity_blocks_mixed_signs() {
        // unconstrained optimum is (1, -1)/sqrt(2) with objective 0
        let s = array![[1.0, 1.0], [1.0, 1.0]];
        let sp = Array2::eye(2);
        let sol = solve_relaxed(s.view(), sp.view(), &BarrierOptions::default()).unwrap();
        // nonnegative optimum sits on an axis with value 1
        assert!((sol.objective - 1.0).abs() < 1e-6, "{}", sol.objective);
    }
}
