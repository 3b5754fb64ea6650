//! Low-rank factorization of the received chunk and ambiguity compensation.
//!
//! The receiver first estimates how many users are active in the chunk from
//! the received energy, factors `Y ≈ U·V` at that rank by regularized
//! alternating least squares, and then resolves the inherent invertible
//! ambiguity: because every row of `V` is a linear combination of rows of
//! `Y`, the pilot-segment columns of `V` are a mixed copy of the
//! transmitted pilot rows. A simultaneous orthogonal matching pursuit over
//! the pilot codebook recovers which pilots are present, and a least-squares
//! fit of the selected columns yields the mixing matrix, whose inverse
//! de-mixes `V` into per-user signal estimates and `U` into channel
//! estimates.
//!
//! Matching-pursuit scoring works in a whitened residual basis truncated to
//! the number of users still unfound: the dominant singular directions of
//! the residual. Plain correlation scoring fails at moderate user counts
//! because strong users' energy masks weak ones under nonzero codebook
//! coherence; the truncation equalizes found-user deflation residue without
//! amplifying noise directions.

use crate::channel::draw_noise;
use crate::codebooks::PilotCodebook;
use crate::counters::OpCounters;
use crate::error::Error;
use crate::linalg::{
    add_ridge, adjoint, dominant_column_basis, frobenius, invert, least_squares, matmul,
    solve_hermitian, CMat,
};
use crate::scalar::Real;
use crate::{Cplx, Result};
use ndarray::{s, ArrayView2};
use rand::Rng;

/// Condition-proxy ceiling for the alternating-minimization solves.
pub const ALT_MIN_COND_LIMIT: f64 = 1e12;
/// Condition-proxy ceiling for inverting the estimated mixing matrix.
pub const AMBIGUITY_COND_LIMIT: f64 = 1e8;
/// Relative singular-value floor for the residual scoring basis.
const BASIS_REL_TOL: f64 = 1e-7;

/// Estimate the number of active users in a chunk from received energy:
/// `round((‖Y‖²_F/M − σ²·T) / P)`, clamped to `[0, min(M,T)−1]`.
pub fn estimate_activity<T: Real>(
    y: &ArrayView2<'_, Cplx<T>>,
    frame_energy: T,
    sigma2: T,
) -> usize {
    let m = y.nrows();
    let t = y.ncols();
    if m == 0 || t == 0 {
        return 0;
    }
    let energy: T = y.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, v| a + v);
    let per_antenna = energy / T::from_f64_lossy(m as f64);
    let signal = per_antenna - sigma2 * T::from_f64_lossy(t as f64);
    let raw = (signal / frame_energy).to_f64().unwrap_or(0.0).round();
    let cap = m.min(t).saturating_sub(1);
    (raw.max(0.0) as usize).min(cap)
}

/// Result of the alternating minimization `Y ≈ U·V`.
#[derive(Debug, Clone)]
pub struct AltMinResult<T: Real> {
    /// Left factor, M × rank.
    pub u: CMat<T>,
    /// Right factor, rank × T. Every row lies in the row space of `Y` by
    /// construction of the update.
    pub v: CMat<T>,
    /// Regularized objective ‖Y−UV‖²_F + α‖U‖²_F + β‖V‖²_F after each
    /// iteration; nonincreasing by construction.
    pub objective_history: Vec<T>,
    /// Unregularized residual ‖Y−UV‖_F after each iteration (drives the
    /// stopping rule).
    pub residual_history: Vec<T>,
    /// Iterations actually run.
    pub iterations: usize,
}

/// Factor `Y ≈ U·V` at the given rank by alternating regularized least
/// squares:
/// `U ← Y·Vᴴ(V·Vᴴ + αI)⁻¹`, then `V ← (Uᴴ·U + βI)⁻¹·Uᴴ·Y`,
/// stopping when the relative change of the residual drops below `tol`.
pub fn alternating_minimize<T: Real>(
    y: &ArrayView2<'_, Cplx<T>>,
    rank: usize,
    reg_u: T,
    reg_v: T,
    max_iters: usize,
    tol: T,
    rng: &mut impl Rng,
    ops: &mut OpCounters,
) -> Result<AltMinResult<T>> {
    let (m, t) = (y.nrows(), y.ncols());
    if rank == 0 || rank > m.min(t) {
        return Err(Error::chunk(format!(
            "factorization rank {rank} invalid for a {m}×{t} observation"
        )));
    }
    let y_norm = frobenius(y);
    if !(y_norm > T::zero()) {
        return Err(Error::chunk("observation is identically zero"));
    }
    // Init: i.i.d. CN entries with per-component variance ‖Y‖_F/(M·T).
    let init_var = (T::one() + T::one()) * y_norm / T::from_f64_lossy((m * t) as f64);
    let mut u = draw_noise::<T>(m, rank, init_var, rng);
    let mut v = draw_noise::<T>(rank, t, init_var, rng);

    let mut objective_history = Vec::with_capacity(max_iters);
    let mut residual_history = Vec::with_capacity(max_iters);
    let mut prev_residual: Option<T> = None;
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        // U step: solve (V·Vᴴ + αI)·Z = V·Yᴴ, U = Zᴴ.
        let vh = adjoint(&v.view());
        let mut gram_v = matmul(&v.view(), &vh.view(), ops);
        add_ridge(&mut gram_v, reg_u);
        let yh = adjoint(y);
        let rhs_u = matmul(&v.view(), &yh.view(), ops);
        let (z, cond_u) = solve_hermitian(&gram_v.view(), &rhs_u.view(), ops)?;
        if cond_u > ALT_MIN_COND_LIMIT {
            return Err(Error::chunk(format!(
                "left factor update is ill conditioned (proxy {cond_u:.3e})"
            )));
        }
        u = adjoint(&z.view());

        // V step: solve (Uᴴ·U + βI)·V = Uᴴ·Y.
        let uh = adjoint(&u.view());
        let mut gram_u = matmul(&uh.view(), &u.view(), ops);
        add_ridge(&mut gram_u, reg_v);
        let rhs_v = matmul(&uh.view(), y, ops);
        let (v_new, cond_v) = solve_hermitian(&gram_u.view(), &rhs_v.view(), ops)?;
        if cond_v > ALT_MIN_COND_LIMIT {
            return Err(Error::chunk(format!(
                "right factor update is ill conditioned (proxy {cond_v:.3e})"
            )));
        }
        v = v_new;

        let approx = matmul(&u.view(), &v.view(), ops);
        let residual = frobenius(&(y - &approx).view());
        let objective = residual * residual
            + reg_u * frobenius(&u.view()).powi(2)
            + reg_v * frobenius(&v.view()).powi(2);
        residual_history.push(residual);
        objective_history.push(objective);

        if let Some(prev) = prev_residual {
            let denom = prev.max(T::epsilon());
            if ((prev - residual).abs() / denom) < tol {
                break;
            }
        }
        prev_residual = Some(residual);
    }

    Ok(AltMinResult {
        u,
        v,
        objective_history,
        residual_history,
        iterations,
    })
}

/// Greedy pilot-support search over the factored pilot segment.
///
/// `v` is the rank × T right factor; its first `pilot_len` columns are a
/// mixed copy of the transmitted pilot rows. Each step scores every
/// codebook column against the dominant singular directions of the current
/// residual (truncated to the number of users still unfound) and picks the
/// best, then deflates the residual by the picked column.
pub fn somp_support<T: Real>(
    v: &ArrayView2<'_, Cplx<T>>,
    pilots: &PilotCodebook<T>,
    pilot_len: usize,
    ops: &mut OpCounters,
) -> Result<Vec<usize>> {
    let rank = v.nrows();
    if rank == 0 {
        return Ok(Vec::new());
    }
    if v.ncols() < pilot_len || pilots.rows() != pilot_len {
        return Err(Error::internal(
            "pilot segment shape disagrees with the codebook",
        ));
    }
    let vp_t = {
        // Tp × rank: columns are the mixed pilot observations.
        let vp = v.slice(s![.., ..pilot_len]);
        adjoint(&vp).mapv(|z| z.conj())
    };

    let count = pilots.len();
    let mut picked: Vec<usize> = Vec::with_capacity(rank);
    let mut picked_mask = vec![false; count];
    // Orthonormal basis of the picked codebook columns (for deflation).
    let mut q_cols: Vec<crate::linalg::CVec<T>> = Vec::with_capacity(rank);
    let mut residual = vp_t.clone();

    for step in 0..rank {
        let remaining = rank - step;
        let basis =
            dominant_column_basis(&residual.view(), remaining, T::from_f64_lossy(BASIS_REL_TOL), ops)?;
        if basis.ncols() == 0 {
            // Residual numerically empty: nothing left to find.
            break;
        }
        let mut scores = vec![T::zero(); count];
        for b in basis.columns() {
            let corr = pilots.correlate(&b, ops);
            for (si, c) in scores.iter_mut().zip(corr.iter()) {
                *si += c.norm_sqr();
            }
        }
        let mut best = usize::MAX;
        let mut best_score = T::neg_infinity();
        for (i, &sc) in scores.iter().enumerate() {
            if !picked_mask[i] && sc > best_score {
                best = i;
                best_score = sc;
            }
        }
        if best == usize::MAX {
            break;
        }
        picked.push(best);
        picked_mask[best] = true;

        // Deflate: orthonormalize the picked column against earlier picks
        // (two Gram–Schmidt passes), then project it out of the residual.
        let mut col = pilots.column(best);
        for _ in 0..2 {
            for q in &q_cols {
                let ip: Cplx<T> = q
                    .iter()
                    .zip(col.iter())
                    .map(|(a, b)| a.conj() * *b)
                    .sum();
                ndarray::Zip::from(&mut col).and(q).for_each(|c, &qv| {
                    *c -= ip * qv;
                });
            }
        }
        ops.add_elementwise(pilot_len * q_cols.len().max(1) * 2, 2, 2);
        let norm = col
            .iter()
            .map(|z| z.norm_sqr())
            .fold(T::zero(), |a, b| a + b)
            .sqrt();
        let col_norm = pilots.column_energy().sqrt();
        if norm > col_norm * T::epsilon().sqrt() {
            col.mapv_inplace(|z| z / norm);
            for mut r in residual.columns_mut() {
                let ip: Cplx<T> = col
                    .iter()
                    .zip(r.iter())
                    .map(|(a, b)| a.conj() * *b)
                    .sum();
                ndarray::Zip::from(&mut r).and(&col).for_each(|rv, &qv| {
                    *rv -= ip * qv;
                });
            }
            ops.add_elementwise(pilot_len * rank, 2, 2);
            q_cols.push(col);
        }
    }
    Ok(picked)
}

/// The de-mixed factorization: per-user signal and channel estimates.
#[derive(Debug, Clone)]
pub struct Compensation<T: Real> {
    /// Pilot indices, in discovery order; row/column `k` below belongs to
    /// `support[k]`.
    pub support: Vec<usize>,
    /// De-mixed signal estimate, |support| × T (pilot and data segments).
    pub x_hat: CMat<T>,
    /// Effective channel estimate, M × |support|.
    pub h_hat: CMat<T>,
    /// The de-mixing matrix applied to `V` (inverse of the estimated
    /// mixing).
    pub g: CMat<T>,
}

/// Resolve the factorization ambiguity for a recovered support: fit the
/// selected pilot columns to the pilot segment of `V`, invert the fitted
/// mixing, and de-mix both factors.
pub fn compensate<T: Real>(
    u: &ArrayView2<'_, Cplx<T>>,
    v: &ArrayView2<'_, Cplx<T>>,
    support: &[usize],
    pilots: &PilotCodebook<T>,
    pilot_len: usize,
    ops: &mut OpCounters,
) -> Result<Compensation<T>> {
    let rank = v.nrows();
    if support.len() != rank {
        return Err(Error::chunk(format!(
            "support size {} does not match factorization rank {rank}",
            support.len()
        )));
    }
    if rank == 0 {
        return Ok(Compensation {
            support: Vec::new(),
            x_hat: CMat::<T>::zeros((0, v.ncols())),
            h_hat: CMat::<T>::zeros((u.nrows(), 0)),
            g: CMat::<T>::zeros((0, 0)),
        });
    }
    let a_sel = pilots.columns(support);
    let vp = v.slice(s![.., ..pilot_len]);
    let vp_t = adjoint(&vp).mapv(|z| z.conj());
    // Vpᵀ = A_S·Wᵀ  ⇒  G̃ = A_S† Vpᵀ estimates Wᵀ.
    let (g_tilde, ls_cond) = least_squares(&a_sel.view(), &vp_t.view(), ops)?;
    if ls_cond > AMBIGUITY_COND_LIMIT {
        return Err(Error::chunk(format!(
            "selected pilot columns are near collinear (proxy {ls_cond:.3e})"
        )));
    }
    let w_t = g_tilde; // rank × rank, estimate of Wᵀ
    let (g, inv_cond) = invert(&adjoint(&w_t.view()).mapv(|z| z.conj()).view(), ops)?;
    if inv_cond > AMBIGUITY_COND_LIMIT {
        return Err(Error::chunk(format!(
            "mixing matrix is near singular (proxy {inv_cond:.3e})"
        )));
    }
    let x_hat = matmul(&g.view(), v, ops);
    // H = U·W: transport the mixing onto the left factor.
    let w = adjoint(&w_t.view()).mapv(|z| z.conj());
    let h_hat = matmul(u, &w.view(), ops);
    Ok(Compensation {
        support: support.to_vec(),
        x_hat,
        h_hat,
        g,
    })
}

/// Full factorization stage for one chunk: activity estimate (unless a
/// rank is forced), alternating minimization, support search, and
/// compensation.
pub struct ChunkFactorization<T: Real> {
    /// Estimated (or forced) number of active users.
    pub ka_est: usize,
    /// The raw factorization.
    pub alt_min: AltMinResult<T>,
    /// The de-mixed result.
    pub compensation: Compensation<T>,
}

/// Run the complete factorization stage on one received chunk.
#[allow(clippy::too_many_arguments)]
pub fn factor_chunk<T: Real>(
    y: &ArrayView2<'_, Cplx<T>>,
    frame_energy: T,
    sigma2: T,
    pilots: &PilotCodebook<T>,
    pilot_len: usize,
    algo: &crate::config::AlgoConfig,
    rank_override: Option<usize>,
    rng: &mut impl Rng,
    ops: &mut OpCounters,
) -> Result<ChunkFactorization<T>> {
    let ka_est = match rank_override {
        Some(r) => r,
        None => estimate_activity(y, frame_energy, sigma2),
    };
    if ka_est == 0 {
        return Err(Error::chunk("no activity detected in chunk"));
    }
    let alt_min = alternating_minimize(
        y,
        ka_est,
        T::from_f64_lossy(algo.reg_u),
        T::from_f64_lossy(algo.reg_v),
        algo.alt_min_max_iters,
        T::from_f64_lossy(algo.alt_min_tol),
        rng,
        ops,
    )?;
    let support = somp_support(&alt_min.v.view(), pilots, pilot_len, ops)?;
    if support.len() < ka_est {
        return Err(Error::chunk(format!(
            "support search found {} of {ka_est} users",
            support.len()
        )));
    }
    let compensation = compensate(
        &alt_min.u.view(),
        &alt_min.v.view(),
        &support,
        pilots,
        pilot_len,
        ops,
    )?;
    Ok(ChunkFactorization {
        ka_est,
        alt_min,
        compensation,
    })
}
