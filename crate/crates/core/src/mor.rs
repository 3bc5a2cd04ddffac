//! Balanced truncation of a linearized model.
//!
//! The controllability and observability Gramians are obtained from the two
//! Lyapunov equations of the stable linear model, balanced by the square-root
//! method, and the state space is truncated where the Hankel singular values
//! fall below a tolerance. The infinity-norm error of the truncated model is
//! bounded by twice the sum of the discarded Hankel values.

use crate::error::{Error, Result};
use crate::linearize::LinearModel;
use crate::scalar::Float;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

/// Result of balancing and truncating a linear model.
#[derive(Debug, Clone)]
pub struct BalancedReduction<T> {
    /// Full balancing transformation; the reduced state is the first `r`
    /// rows of `t * (x - x0)`.
    pub t: DMatrix<T>,
    /// Inverse balancing transformation; `t * t_inv == I`.
    pub t_inv: DMatrix<T>,
    /// Hankel singular values in nonincreasing order.
    pub hankel: DVector<T>,
    /// Retained order.
    pub r: usize,
    /// Reduced state matrix, `r x r`.
    pub a_r: DMatrix<T>,
    /// Reduced input matrix, `r x m`.
    pub b_r: DMatrix<T>,
    /// Reduced output matrix, `n x r`: the first `r` columns of `t_inv`,
    /// because every state is observed.
    pub c_r: DMatrix<T>,
    /// Retained rows of the balancing transformation, refined so that
    /// `t_r * c_r` is the identity to machine precision even when the
    /// Hankel spectrum spans many decades.
    t_r: DMatrix<T>,
}

impl<T: Float> BalancedReduction<T> {
    /// Original order.
    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    /// Retained rows of the balancing transformation.
    pub fn t_r(&self) -> &DMatrix<T> {
        &self.t_r
    }

    /// Truncation matrix that deletes the discarded rows of a balanced
    /// vector: `r x n`, identity on the left.
    pub fn projection(&self) -> DMatrix<T> {
        let mut p = DMatrix::zeros(self.r, self.n());
        for i in 0..self.r {
            p[(i, i)] = T::one();
        }
        p
    }

    /// Guaranteed infinity-norm error bound: twice the sum of the discarded
    /// Hankel singular values.
    pub fn error_bound(&self) -> T {
        let mut s = T::zero();
        for i in self.r..self.hankel.len() {
            s += self.hankel[i];
        }
        T::of(2.0) * s
    }

    /// Projects a physical state deviation into the reduced coordinates.
    pub fn project(&self, dx: &DVector<T>) -> DVector<T> {
        self.t_r() * dx
    }

    /// Lifts reduced coordinates back to a physical state deviation.
    pub fn lift(&self, xr: &DVector<T>) -> DVector<T> {
        &self.c_r * xr
    }
}

/// Solves the continuous Lyapunov equation `A W + W A' + Q = 0` for
/// symmetric `Q`, requiring `A` to be Hurwitz.
///
/// `A` is brought to complex triangular Schur form and the transformed
/// equation is solved column by column; the unique solution is symmetric.
/// The triangular backsolve loses accuracy when sums of eigenvalues nearly
/// cancel, so the factorization is reused for refinement passes against the
/// true residual until it sits near machine precision.
pub fn solve_lyapunov<T: Float>(a: &DMatrix<T>, q: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension("Lyapunov operands must be square and equal".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let (z, u) = complex_schur(a)?;
    let eigs: Vec<Complex<T>> = (0..n).map(|k| u[(k, k)]).collect();
    let bad: Vec<(f64, f64)> = eigs
        .iter()
        .filter(|e| e.re >= T::zero())
        .map(|e| (e.re.to_f64_lossy(), e.im.to_f64_lossy()))
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonHurwitz(bad));
    }

    let zh = z.adjoint();
    let at = a.transpose();
    let q_norm = q.norm();
    let mut w = schur_lyapunov_solve(&z, &zh, &u, q);
    if q_norm > T::zero() {
        let target = q_norm * T::default_epsilon() * T::of(100.0);
        let mut best = T::of(f64::INFINITY);
        for _ in 0..3 {
            let resid = a * &w + &w * &at + q;
            let r_norm = resid.norm();
            if r_norm <= target || r_norm >= best {
                break;
            }
            best = r_norm;
            w += schur_lyapunov_solve(&z, &zh, &u, &resid);
        }
    }
    Ok(w)
}

/// One triangular Lyapunov backsolve in Schur coordinates: given `A = Z U
/// Z^H`, returns the symmetrized solution of `A W + W A' + Q = 0`.
fn schur_lyapunov_solve<T: Float>(
    zc: &DMatrix<Complex<T>>,
    zh: &DMatrix<Complex<T>>,
    u: &DMatrix<Complex<T>>,
    q: &DMatrix<T>,
) -> DMatrix<T> {
    let n = u.nrows();
    let qc = q.map(|v| Complex::new(v, T::zero()));
    let qt = zh * qc * zc;

    // Solve U Y + Y U^H = -Q~ from the last column backwards. The solution
    // is Hermitian, so rows below the diagonal of each column are copied
    // from already-solved columns before the triangular backsolve runs.
    let mut y = DMatrix::<Complex<T>>::zeros(n, n);
    for k in (0..n).rev() {
        let mut rhs = DVector::<Complex<T>>::zeros(k + 1);
        for row in 0..=k {
            rhs[row] = -qt[(row, k)];
        }
        for j in (k + 1)..n {
            let w = u[(k, j)].conj();
            for row in 0..=k {
                rhs[row] -= y[(row, j)] * w;
            }
        }
        for row in (k + 1)..n {
            y[(row, k)] = y[(k, row)].conj();
        }
        let shift = u[(k, k)].conj();
        for row in (0..=k).rev() {
            let mut s = rhs[row];
            for c in (row + 1)..n {
                s -= u[(row, c)] * y[(c, k)];
            }
            y[(row, k)] = s / (u[(row, row)] + shift);
        }
    }

    let w = zc * y * zh;
    let mut out = DMatrix::<T>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = (w[(i, j)].re + w[(j, i)].re) * T::of(0.5);
        }
    }
    out
}

/// Complex Schur decomposition of a real matrix: returns unitary `Z` and
/// upper triangular `U` with `A = Z U Z^H`, by refining the real Schur form.
pub fn complex_schur<T: Float>(a: &DMatrix<T>) -> Result<(DMatrix<Complex<T>>, DMatrix<Complex<T>>)> {
    let n = a.nrows();
    let schur = nalgebra::Schur::try_new(a.clone(), T::default_epsilon() * T::of(10.0), 20000)
        .ok_or(Error::NoConvergence("real Schur decomposition"))?;
    let (q, t) = schur.unpack();
    let mut zc: DMatrix<Complex<T>> = q.map(|v| Complex::new(v, T::zero()));
    let mut tc: DMatrix<Complex<T>> = t.map(|v| Complex::new(v, T::zero()));

    // Convert each 2x2 real block into complex triangular form with a
    // complex Givens rotation.
    for m in (1..n).rev() {
        if tc[(m, m - 1)].norm_sqr() > T::zero() {
            let t11 = tc[(m - 1, m - 1)];
            let t12 = tc[(m - 1, m)];
            let t21 = tc[(m, m - 1)];
            let t22 = tc[(m, m)];
            let half = Complex::new(T::of(0.5), T::zero());
            let tr_half = (t11 - t22) * half;
            let disc = tr_half * tr_half + t12 * t21;
            let mu = tr_half + crate::scalar::csqrt(disc);
            let r = (mu.norm_sqr() + t21.norm_sqr()).sqrt();
            if r <= T::zero() {
                continue;
            }
            let c = mu / Complex::new(r, T::zero());
            let s = t21 / Complex::new(r, T::zero());
            // G = [c' s; -s c]; rows m-1..m of T from column m-1 on.
            for col in (m - 1)..n {
                let top = tc[(m - 1, col)];
                let bot = tc[(m, col)];
                tc[(m - 1, col)] = c.conj() * top + s * bot;
                tc[(m, col)] = -s * top + c * bot;
            }
            for row in 0..=m {
                let left = tc[(row, m - 1)];
                let right = tc[(row, m)];
                tc[(row, m - 1)] = left * c + right * s.conj();
                tc[(row, m)] = -left * s + right * c.conj();
            }
            for row in 0..n {
                let left = zc[(row, m - 1)];
                let right = zc[(row, m)];
                zc[(row, m - 1)] = left * c + right * s.conj();
                zc[(row, m)] = -left * s + right * c.conj();
            }
            tc[(m, m - 1)] = Complex::default();
        }
    }
    // Zero the strict lower triangle against rounding noise.
    for i in 0..n {
        for j in 0..i {
            tc[(i, j)] = Complex::default();
        }
    }
    Ok((zc, tc))
}

/// Symmetric square-root factor `L` with `W ~= L L'`, built from the
/// eigendecomposition with negative eigenvalues clipped to zero.
fn gramian_factor<T: Float>(w: &DMatrix<T>) -> DMatrix<T> {
    let n = w.nrows();
    let mut sym = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = (w[(i, j)] + w[(j, i)]) * T::of(0.5);
        }
    }
    let eig = sym.symmetric_eigen();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let lambda = eig.eigenvalues[j];
        let s = if lambda > T::zero() { lambda.sqrt() } else { T::zero() };
        for i in 0..n {
            l[(i, j)] = eig.eigenvectors[(i, j)] * s;
        }
    }
    l
}

/// Balances a Gramian pair by the square-root method.
///
/// Returns `(t, t_inv, hankel)` with `t * wc * t' == t_inv' * wo * t_inv ==
/// diag(hankel)` and `t * t_inv == I`. The Hankel values come back sorted in
/// nonincreasing order.
pub fn balance_transform<T: Float>(
    wc: &DMatrix<T>,
    wo: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>, DVector<T>)> {
    let n = wc.nrows();
    if wc.ncols() != n || wo.nrows() != n || wo.ncols() != n {
        return Err(Error::Dimension("Gramians must be square and equal size".into()));
    }
    let lc = gramian_factor(wc);
    let lo = gramian_factor(wo);
    let cross = lo.transpose() * &lc;
    let svd = cross.svd(true, true);
    let u = svd.u.as_ref().ok_or(Error::NoConvergence("SVD"))?;
    let v_t = svd.v_t.as_ref().ok_or(Error::NoConvergence("SVD"))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let hankel = DVector::from_iterator(n, order.iter().map(|&i| svd.singular_values[i]));

    let mut t = DMatrix::zeros(n, n);
    let mut t_inv = DMatrix::zeros(n, n);
    let lo_t = lo.transpose();
    for (row, &k) in order.iter().enumerate() {
        let sigma = hankel[row];
        let scale = if sigma > T::zero() {
            T::one() / sigma.sqrt()
        } else {
            T::zero()
        };
        // t row = sigma^{-1/2} u_k' Lo'; t_inv column = Lc v_k sigma^{-1/2}
        for j in 0..n {
            let mut acc = T::zero();
            for i in 0..n {
                acc += u[(i, k)] * lo_t[(i, j)];
            }
            t[(row, j)] = acc * scale;
        }
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..n {
                acc += lc[(i, j)] * v_t[(k, j)];
            }
            t_inv[(i, row)] = acc * scale;
        }
    }
    Ok((t, t_inv, hankel))
}

/// Smallest retained order whose guaranteed error bound does not exceed
/// `tol`, never splitting a group of equal Hankel values.
pub fn select_order<T: Float>(hankel: &DVector<T>, tol: T) -> usize {
    let n = hankel.len();
    let mut tail = T::zero();
    let mut tails = vec![T::zero(); n + 1];
    for i in (0..n).rev() {
        tail += hankel[i];
        tails[i] = tail;
    }
    let mut r = n;
    for k in 0..=n {
        if T::of(2.0) * tails[k] <= tol {
            r = k;
            break;
        }
    }
    // Keep whole groups of (numerically) equal values together.
    let tie = T::of(1e-12);
    while r > 0 && r < n {
        let kept = hankel[r - 1];
        let next = hankel[r];
        let scale = kept.abs().max(next.abs()).max(T::of(1e-300));
        if (kept - next).abs() / scale < tie {
            r += 1;
        } else {
            break;
        }
    }
    r
}

/// Balances and truncates a linearized model. The retained order is the
/// smallest one whose error bound is below `tol`.
pub fn reduce_linear<T: Float>(lin: &LinearModel<T>, tol: T) -> Result<BalancedReduction<T>> {
    let bbt = &lin.b * lin.b.transpose();
    let wc = solve_lyapunov(&lin.a, &bbt)?;
    let eye = DMatrix::identity(lin.n(), lin.n());
    let wo = solve_lyapunov(&lin.a.transpose(), &eye)?;
    let (t, t_inv, hankel) = balance_transform(&wc, &wo)?;
    let r = select_order(&hankel, tol);
    let mut t_r = t.rows(0, r).into_owned();
    let ti_r = t_inv.columns(0, r).into_owned();
    // Rounding in the balancing factors leaves `t_r * ti_r` off identity
    // by roughly eps * sigma_1 / sigma_r; refining through the
    // well-conditioned product restores bi-orthonormality so projection
    // after lifting is exact.
    let gram = &t_r * &ti_r;
    t_r = gram
        .lu()
        .solve(&t_r)
        .ok_or(Error::NoConvergence("projector refinement"))?;
    let a_r = &t_r * &lin.a * &ti_r;
    let b_r = &t_r * &lin.b;
    Ok(BalancedReduction {
        t,
        t_inv,
        hankel,
        r,
        a_r,
        b_r,
        c_r: ti_r,
        t_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_lyapunov() {
        // a = -1, q = 1: w = 1/2.
        let a = DMatrix::from_element(1, 1, -1.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        let w = solve_lyapunov(&a, &q).unwrap();
        assert_relative_eq!(w[(0, 0)], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn diagonal_lyapunov() {
        // a = diag(-1, -2), q = I: w = diag(1/2, 1/4).
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let q = DMatrix::identity(2, 2);
        let w = solve_lyapunov(&a, &q).unwrap();
        assert_relative_eq!(w[(0, 0)], 0.5, max_relative = 1e-13);
        assert_relative_eq!(w[(1, 1)], 0.25, max_relative = 1e-13);
        assert_relative_eq!(w[(0, 1)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn non_hurwitz_is_reported() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.5]));
        let q = DMatrix::identity(2, 2);
        match solve_lyapunov(&a, &q) {
            Err(crate::error::Error::NonHurwitz(eigs)) => {
                assert_eq!(eigs.len(), 1);
                assert_relative_eq!(eigs[0].0, 0.5, max_relative = 1e-10);
            }
            other => panic!("expected NonHurwitz, got {other:?}"),
        }
    }

    #[test]
    fn select_order_thresholds() {
        let h = DVector::from_vec(vec![1.0, 0.1, 0.001, 1e-6]);
        assert_eq!(select_order(&h, 1e-3), 3);
        assert_eq!(select_order(&h, 0.3), 1);
        assert_eq!(select_order(&h, 10.0), 0);
        assert_eq!(select_order(&h, 1e-9), 4);
    }

    #[test]
    fn select_order_keeps_ties_together() {
        let h = DVector::from_vec(vec![2.0, 2.0, 1e-8]);
        // tol passed between the two equal values would split them; the
        // whole group is kept instead.
        assert_eq!(select_order(&h, 2.0 * (2.0 + 1e-8)), 2);
    }

    #[test]
    fn complex_schur_reconstructs() {
        let a: DMatrix<f64> = DMatrix::from_row_slice(
            3,
            3,
            &[-1.0, 2.0, 0.5, -2.0, -1.0, 0.3, 0.0, 0.1, -3.0],
        );
        let (z, u) = complex_schur(&a).unwrap();
        for i in 0..3 {
            for j in 0..i {
                assert!(u[(i, j)].norm() == 0.0);
            }
        }
        let recon = &z * &u * z.adjoint();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(recon[(i, j)].re, a[(i, j)], epsilon = 1e-12);
                assert!(recon[(i, j)].im.abs() < 1e-12);
            }
        }
    }
}
