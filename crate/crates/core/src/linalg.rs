//! Dense complex linear algebra over a generic real scalar.
//!
//! The receiver needs a small set of kernels — Hermitian solves, LU
//! inversion, least squares, and a Hermitian eigendecomposition — on
//! matrices of at most a few hundred rows. They are implemented directly so
//! the whole crate stays generic over `f32`/`f64` and every kernel can
//! report an operation count and a condition proxy to its caller.
//!
//! Condition proxies are deliberately cheap: ratios of factor diagonals,
//! not singular-value ratios. They are used only to detect near-singular
//! systems, where they are within a small factor of the true condition
//! number.

use crate::counters::OpCounters;
use crate::error::Error;
use crate::scalar::Real;
use crate::{Cplx, Result};
use ndarray::{Array1, Array2, ArrayView2};

/// Complex matrix over real scalar `T`.
pub type CMat<T> = Array2<Cplx<T>>;
/// Complex vector over real scalar `T`.
pub type CVec<T> = Array1<Cplx<T>>;

/// Conjugate transpose.
pub fn adjoint<T: Real>(a: &ArrayView2<'_, Cplx<T>>) -> CMat<T> {
    a.t().mapv(|z| z.conj())
}

/// Counted dense product `A · B`.
pub fn matmul<T: Real>(
    a: &ArrayView2<'_, Cplx<T>>,
    b: &ArrayView2<'_, Cplx<T>>,
    ops: &mut OpCounters,
) -> CMat<T> {
    assert_eq!(
        a.ncols(),
        b.nrows(),
        "inner dimensions must agree: {}x{} · {}x{}",
        a.nrows(),
        a.ncols(),
        b.nrows(),
        b.ncols()
    );
    ops.add_gemm(a.nrows(), a.ncols(), b.ncols());
    a.dot(b)
}

/// Frobenius norm.
pub fn frobenius<T: Real>(a: &ArrayView2<'_, Cplx<T>>) -> T {
    a.iter()
        .map(|z| z.norm_sqr())
        .fold(T::zero(), |acc, v| acc + v)
        .sqrt()
}

/// `A + ridge·I` for square `A`.
pub fn add_ridge<T: Real>(a: &mut CMat<T>, ridge: T) {
    let n = a.nrows().min(a.ncols());
    for i in 0..n {
        a[[i, i]] += Cplx::new(ridge, T::zero());
    }
}

/// n×n identity.
pub fn identity<T: Real>(n: usize) -> CMat<T> {
    let mut m = CMat::<T>::zeros((n, n));
    for i in 0..n {
        m[[i, i]] = Cplx::new(T::one(), T::zero());
    }
    m
}

/// Lower-triangular Cholesky factor of a Hermitian positive-definite matrix,
/// with a condition proxy `(max diag(L) / min diag(L))²`.
pub struct CholeskyFactor<T: Real> {
    lower: CMat<T>,
    cond_proxy: f64,
}

/// Factor a Hermitian positive-definite matrix. Fails with a chunk-level
/// error when a pivot is not strictly positive (matrix not PD within
/// floating precision).
pub fn cholesky<T: Real>(
    a: &ArrayView2<'_, Cplx<T>>,
    ops: &mut OpCounters,
) -> Result<CholeskyFactor<T>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky needs a square matrix");
    let mut l = CMat::<T>::zeros((n, n));
    let mut max_d = T::neg_infinity();
    let mut min_d = T::infinity();
    for j in 0..n {
        let mut d = a[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::chunk(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let dj = d.sqrt();
        l[[j, j]] = Cplx::new(dj, T::zero());
        max_d = max_d.max(dj);
        min_d = min_d.min(dj);
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = s / dj;
        }
    }
    ops.add_solve(n, 0);
    let ratio = (max_d / min_d).to_f64().unwrap_or(f64::INFINITY);
    Ok(CholeskyFactor {
        lower: l,
        cond_proxy: ratio * ratio,
    })
}

impl<T: Real> CholeskyFactor<T> {
    /// Proxy for the condition number of the factored matrix.
    pub fn cond_proxy(&self) -> f64 {
        self.cond_proxy
    }

    /// Solve `A X = B` using the stored factor (forward then backward
    /// substitution, one column of `B` at a time).
    pub fn solve(&self, b: &ArrayView2<'_, Cplx<T>>, ops: &mut OpCounters) -> CMat<T> {
        let n = self.lower.nrows();
        assert_eq!(b.nrows(), n, "rhs row count must match matrix order");
        let rhs = b.ncols();
        let mut x = b.to_owned();
        for c in 0..rhs {
            // L y = b
            for i in 0..n {
                let mut s = x[[i, c]];
                for k in 0..i {
                    s -= self.lower[[i, k]] * x[[k, c]];
                }
                x[[i, c]] = s / self.lower[[i, i]].re;
            }
            // Lᴴ x = y
            for i in (0..n).rev() {
                let mut s = x[[i, c]];
                for k in (i + 1)..n {
                    s -= self.lower[[k, i]].conj() * x[[k, c]];
                }
                x[[i, c]] = s / self.lower[[i, i]].re;
            }
        }
        ops.add_solve(0, 0); // factor already counted
        ops.add_elementwise(n * n * rhs, 2, 2);
        x
    }
}

/// Solve the Hermitian positive-definite system `A X = B`.
/// Returns the solution and the factor's condition proxy.
pub fn solve_hermitian<T: Real>(
    a: &ArrayView2<'_, Cplx<T>>,
    b: &ArrayView2<'_, Cplx<T>>,
    ops: &mut OpCounters,
) -> Result<(CMat<T>, f64)> {
    let f = cholesky(a, ops)?;
    let x = f.solve(b, ops);
    Ok((x, f.cond_proxy()))
}

/// Invert a general square matrix by LU with partial pivoting.
/// Returns the inverse and the proxy `max|u_ii| / min|u_ii|`.
pub fn invert<T: Real>(
    a: &ArrayView2<'_, Cplx<T>>,
    ops: &mut OpCounters,
) -> Result<(CMat<T>, f64)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "invert needs a square matrix");
    let mut lu = a.to_owned();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let (mut pivot_row, mut pivot_mag) = (col, lu[[col, col]].norm_sqr());
        for r in (col + 1)..n {
            let m = lu[[r, col]].norm_sqr();
            if m > pivot_mag {
                pivot_row = r;
                pivot_mag = m;
            }
        }
        if !(pivot_mag > T::zero()) || !pivot_mag.is_finite() {
            return Err(Error::chunk(format!(
                "matrix is singular (no pivot in column {col})"
            )));
        }
        if pivot_row != col {
            for c in 0..n {
                lu.swap([col, c], [pivot_row, c]);
            }
            perm.swap(col, pivot_row);
        }
        let piv = lu[[col, col]];
        for r in (col + 1)..n {
            let factor = lu[[r, col]] / piv;
            lu[[r, col]] = factor;
            for c in (col + 1)..n {
                let delta = factor * lu[[col, c]];
                lu[[r, c]] -= delta;
            }
        }
    }
    ops.add_solve(n, n);

    let mut max_u = T::neg_infinity();
    let mut min_u = T::infinity();
    for i in 0..n {
        let m = lu[[i, i]].norm();
        max_u = max_u.max(m);
        min_u = min_u.min(m);
    }
    let cond_proxy = (max_u / min_u).to_f64().unwrap_or(f64::INFINITY);

    // Solve A X = I column by column: apply permutation, then L, then U.
    let mut inv = CMat::<T>::zeros((n, n));
    for c in 0..n {
        let mut x = vec![Cplx::new(T::zero(), T::zero()); n];
        for (row, &src) in perm.iter().enumerate() {
            x[row] = if src == c {
                Cplx::new(T::one(), T::zero())
            } else {
                Cplx::new(T::zero(), T::zero())
            };
        }
        for i in 0..n {
            for k in 0..i {
                let delta = lu[[i, k]] * x[k];
                x[i] -= delta;
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let delta = lu[[i, k]] * x[k];
                x[i] -= delta;
            }
            x[i] /= lu[[i, i]];
        }
        for i in 0..n {
            inv[[i, c]] = x[i];
        }
    }
    ops.add_elementwise(n * n * n, 1, 1);
    Ok((inv, cond_proxy))
}

/// Least squares for tall `A` (rows ≥ cols): minimize ‖A X − B‖_F via the
/// normal equations. Returns the solution and a proxy for cond(AᴴA).
pub fn least_squares<T: Real>(
    a: &ArrayView2<'_, Cplx<T>>,
    b: &ArrayView2<'_, Cplx<T>>,
    ops: &mut OpCounters,
) -> Result<(CMat<T>, f64)> {
    assert!(
        a.nrows() >= a.ncols(),
        "least_squares expects a tall or square matrix"
    );
    let ah = adjoint(a);
    let gram = matmul(&ah.view(), a, ops);
    let rhs = matmul(&ah.view(), b, ops);
    solve_hermitian(&gram.view(), &rhs.view(), ops)
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues in descending
/// order with matching eigenvector columns.
pub struct Eigh<T: Real> {
    /// Eigenvalues, descending.
    pub values: Vec<T>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: CMat<T>,
}

/// Cyclic Jacobi eigendecomposition for Hermitian matrices. Robust and
/// accurate for the small (≤ a few hundred) systems this crate builds.
pub fn eigh<T: Real>(a: &ArrayView2<'_, Cplx<T>>, ops: &mut OpCounters) -> Result<Eigh<T>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigh needs a square matrix");
    let mut m = a.to_owned();
    let mut vecs = identity::<T>(n);
    if n <= 1 {
        let values = if n == 1 { vec![m[[0, 0]].re] } else { vec![] };
        return Ok(Eigh { values, vectors: vecs });
    }

    let norm = frobenius(&m.view());
    let tol = norm * T::epsilon() * T::from_f64_lossy(n as f64);

    let max_sweeps = 60;
    for _sweep in 0..max_sweeps {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let beta = m[[p, q]];
                let beta_mag = beta.norm();
                if beta_mag <= tol * T::from_f64_lossy(1e-3) {
                    continue;
                }
                // Phase that makes the off-diagonal entry real, then a real
                // Jacobi rotation that annihilates it.
                let phase = beta / Cplx::new(beta_mag, T::zero());
                let alpha = m[[p, p]].re;
                let gamma = m[[q, q]].re;
                let tau = (gamma - alpha) / (beta_mag * (T::one() + T::one()));
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // Column rotation G: col p ← c·e^{iφ}·p − s·q ; col q ← s·e^{iφ}·p + c·q
                let gpp = phase * Cplx::new(c, T::zero());
                let gpq = phase * Cplx::new(s, T::zero());
                let gqp = Cplx::new(-s, T::zero());
                let gqq = Cplx::new(c, T::zero());
                for k in 0..n {
                    let akp = m[[k, p]];
                    let akq = m[[k, q]];
                    m[[k, p]] = akp * gpp + akq * gqp;
                    m[[k, q]] = akp * gpq + akq * gqq;
                }
                for k in 0..n {
                    let apk = m[[p, k]];
                    let aqk = m[[q, k]];
                    m[[p, k]] = gpp.conj() * apk + gqp.conj() * aqk;
                    m[[q, k]] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                // Clean up what should be exactly zero / real.
                m[[p, q]] = Cplx::new(T::zero(), T::zero());
                m[[q, p]] = Cplx::new(T::zero(), T::zero());
                m[[p, p]] = Cplx::new(m[[p, p]].re, T::zero());
                m[[q, q]] = Cplx::new(m[[q, q]].re, T::zero());
                for k in 0..n {
                    let vkp = vecs[[k, p]];
                    let vkq = vecs[[k, q]];
                    vecs[[k, p]] = vkp * gpp + vkq * gqp;
                    vecs[[k, q]] = vkp * gpq + vkq * gqq;
                }
                ops.add_elementwise(n, 12, 8);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| m[[i, i]].re).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<T> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = CMat::<T>::zeros((n, n));
    for (new_c, &old_c) in order.iter().enumerate() {
        for r in 0..n {
            vectors[[r, new_c]] = vecs[[r, old_c]];
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::chunk("eigendecomposition produced non-finite values"));
    }
    Ok(Eigh { values, vectors })
}

/// Orthonormal basis for the dominant column space of `r` (rows × cols,
/// rows ≥ cols): the left singular vectors whose singular values exceed
/// `rel_tol` times the largest, truncated to at most `max_keep` columns.
///
/// Computed through the Gram matrix `RᴴR`, whose eigenpairs give
/// `u_i = R v_i / σ_i` — accurate here because callers only threshold at
/// coarse relative tolerances (≥ 1e-10).
pub fn dominant_column_basis<T: Real>(
    r: &ArrayView2<'_, Cplx<T>>,
    max_keep: usize,
    rel_tol: T,
    ops: &mut OpCounters,
) -> Result<CMat<T>> {
    let rows = r.nrows();
    let cols = r.ncols();
    if cols == 0 || max_keep == 0 {
        return Ok(CMat::<T>::zeros((rows, 0)));
    }
    let rh = adjoint(r);
    let gram = matmul(&rh.view(), r, ops);
    let eig = eigh(&gram.view(), ops)?;
    let lam_max = eig.values[0].max(T::zero());
    if lam_max <= T::zero() {
        return Ok(CMat::<T>::zeros((rows, 0)));
    }
    // The Gram route cannot resolve singular values below ~sqrt(n·eps)
    // relative, so clamp the requested floor to the achievable resolution:
    // Gram eigenvalues of truly-zero directions land near n·eps·λ_max.
    let gram_floor = T::epsilon() * T::from_f64_lossy(4.0 * cols as f64);
    let lam_floor = lam_max * (rel_tol * rel_tol).max(gram_floor);
    let keep: usize = eig
        .values
        .iter()
        .take(max_keep.min(cols))
        .filter(|&&l| l > lam_floor)
        .count();
    let mut basis = CMat::<T>::zeros((rows, keep));
    for j in 0..keep {
        let sigma = eig.values[j].sqrt();
        for i in 0..rows {
            let mut acc = Cplx::new(T::zero(), T::zero());
            for k in 0..cols {
                acc += r[[i, k]] * eig.vectors[[k, j]];
            }
            basis[[i, j]] = acc / sigma;
        }
    }
    ops.add_gemm(rows, cols, keep);
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    type C = Cplx<f64>;

    fn randn_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat<f64> {
        CMat::from_shape_fn((rows, cols), |_| {
            C::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    fn hermitian_pd(rng: &mut impl Rng, n: usize) -> CMat<f64> {
        let b = randn_mat(rng, n + 2, n);
        let mut a = adjoint(&b.view()).dot(&b);
        add_ridge(&mut a, 0.5);
        a
    }

    #[test]
    fn adjoint_is_conjugate_transpose() {
        let a = array![[C::new(1.0, 2.0), C::new(3.0, -1.0)]];
        let at = adjoint(&a.view());
        assert_eq!(at.dim(), (2, 1));
        assert_eq!(at[[0, 0]], C::new(1.0, -2.0));
        assert_eq!(at[[1, 0]], C::new(3.0, 1.0));
    }

    #[test]
    fn cholesky_solve_recovers_known_solution() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let a = hermitian_pd(&mut rng, 12);
        let x_true = randn_mat(&mut rng, 12, 3);
        let b = a.dot(&x_true);
        let mut ops = OpCounters::default();
        let (x, cond) = solve_hermitian(&a.view(), &b.view(), &mut ops).unwrap();
        let err = frobenius(&(&x - &x_true).view()) / frobenius(&x_true.view());
        assert!(err < 1e-10, "relative error {err:e}");
        assert!(cond.is_finite() && cond >= 1.0);
        assert!(ops.complex_multiplies > 0);
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let a = array![
            [C::new(1.0, 0.0), C::new(0.0, 0.0)],
            [C::new(0.0, 0.0), C::new(-1.0, 0.0)]
        ];
        let mut ops = OpCounters::default();
        assert!(matches!(
            cholesky(&a.view(), &mut ops),
            Err(Error::ChunkFailure(_))
        ));
    }

    #[test]
    fn invert_times_original_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let a = randn_mat(&mut rng, 9, 9);
        let mut ops = OpCounters::default();
        let (inv, cond) = invert(&a.view(), &mut ops).unwrap();
        let prod = inv.dot(&a);
        let eye = identity::<f64>(9);
        let err = frobenius(&(&prod - &eye).view());
        assert!(err < 1e-10, "identity error {err:e}");
        assert!(cond.is_finite() && cond >= 1.0);
    }

    #[test]
    fn invert_flags_singular_matrix() {
        let a = array![
            [C::new(1.0, 0.0), C::new(2.0, 0.0)],
            [C::new(2.0, 0.0), C::new(4.0, 0.0)]
        ];
        let mut ops = OpCounters::default();
        assert!(matches!(
            invert(&a.view(), &mut ops),
            Err(Error::ChunkFailure(_))
        ));
    }

    #[test]
    fn least_squares_matches_exact_solution_for_consistent_system() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a = randn_mat(&mut rng, 20, 6);
        let x_true = randn_mat(&mut rng, 6, 2);
        let b = a.dot(&x_true);
        let mut ops = OpCounters::default();
        let (x, _) = least_squares(&a.view(), &b.view(), &mut ops).unwrap();
        let err = frobenius(&(&x - &x_true).view()) / frobenius(&x_true.view());
        assert!(err < 1e-9, "relative error {err:e}");
    }

    #[test]
    fn eigh_reconstructs_matrix_and_orthonormal_vectors() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let a = hermitian_pd(&mut rng, 15);
        let mut ops = OpCounters::default();
        let eig = eigh(&a.view(), &mut ops).unwrap();
        // V Λ Vᴴ == A
        let mut recon = CMat::<f64>::zeros((15, 15));
        for j in 0..15 {
            for r in 0..15 {
                for c in 0..15 {
                    recon[[r, c]] += eig.vectors[[r, j]]
                        * eig.vectors[[c, j]].conj()
                        * C::new(eig.values[j], 0.0);
                }
            }
        }
        let err = frobenius(&(&recon - &a).view()) / frobenius(&a.view());
        assert!(err < 1e-11, "reconstruction error {err:e}");
        // VᴴV == I
        let vh = adjoint(&eig.vectors.view());
        let gram = vh.dot(&eig.vectors);
        let eye = identity::<f64>(15);
        assert!(frobenius(&(&gram - &eye).view()) < 1e-11);
        // descending order
        for w in eig.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn eigh_matches_hand_computed_two_by_two() {
        // [[2, i], [-i, 2]] has eigenvalues 3 and 1.
        let a = array![
            [C::new(2.0, 0.0), C::new(0.0, 1.0)],
            [C::new(0.0, -1.0), C::new(2.0, 0.0)]
        ];
        let mut ops = OpCounters::default();
        let eig = eigh(&a.view(), &mut ops).unwrap();
        assert_abs_diff_eq!(eig.values[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dominant_basis_spans_planted_subspace() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        // R = Q S, rank 4 planted inside a 30x8 matrix.
        let q = randn_mat(&mut rng, 30, 4);
        let s = randn_mat(&mut rng, 4, 8);
        let r = q.dot(&s);
        let mut ops = OpCounters::default();
        let basis = dominant_column_basis(&r.view(), 8, 1e-10, &mut ops).unwrap();
        assert_eq!(basis.ncols(), 4, "numerical rank should be 4");
        // Every column of R must lie in span(basis).
        let bh = adjoint(&basis.view());
        let proj = basis.dot(&bh.dot(&r));
        let err = frobenius(&(&proj - &r).view()) / frobenius(&r.view());
        assert!(err < 1e-10, "projection residual {err:e}");
        // Basis orthonormal.
        let gram = bh.dot(&basis);
        let eye = identity::<f64>(4);
        assert!(frobenius(&(&gram - &eye).view()) < 1e-10);
    }

    #[test]
    fn dominant_basis_respects_max_keep() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let r = randn_mat(&mut rng, 20, 10);
        let mut ops = OpCounters::default();
        let basis = dominant_column_basis(&r.view(), 3, 1e-10, &mut ops).unwrap();
        assert_eq!(basis.ncols(), 3);
    }
}
