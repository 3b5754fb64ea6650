//! Joint pattern and data detection on the data sub-frame.
//!
//! Each data slot is a small multi-user system `y_t = H x_t + n_t` where
//! every entry of `x_t` is either silent (the user skipped this slot) or a
//! QPSK symbol. An approximate-message-passing recursion produces per-user
//! posterior distributions over the five states at linear cost in the user
//! count; a linear-MMSE detector is provided as a baseline. Downstream,
//! per-user slot posteriors select the transmission pattern by maximum
//! log-score and feed soft bit LLRs to the channel decoder.

use crate::codebooks::{PatternCodebook, QpskAlphabet};
use crate::config::PriorMode;
use crate::counters::OpCounters;
use crate::linalg::{add_ridge, adjoint, invert, matmul, CVec};
use crate::scalar::Real;
use crate::Cplx;
use ndarray::{Array2, ArrayView1, ArrayView2};

/// Number of per-slot states: silent plus the four QPSK points.
pub const STATE_COUNT: usize = 5;
/// Soft-output clamp for bit LLRs.
pub const LLR_CLAMP: f64 = 30.0;
/// Floor for the effective noise variance inside the state posteriors.
const TAU_EFF_FLOOR: f64 = 1e-12;
/// Internal floor keeping the recursion finite when driven at zero noise.
const SIGMA2_FLOOR: f64 = 1e-30;

/// Prior over the per-slot states `{0} ∪ QPSK`, in the fixed state order
/// `[silent, s00, s01, s10, s11]`.
#[derive(Debug, Clone)]
pub struct StatePrior<T: Real> {
    states: [Cplx<T>; STATE_COUNT],
    weights: [T; STATE_COUNT],
    variance: T,
}

impl<T: Real> StatePrior<T> {
    /// Build the prior for a QPSK alphabet. `activity_fraction` is the
    /// marginal probability that a user occupies a given slot (pattern
    /// weight over slot count); it is only used by the sparsity-weighted
    /// mode.
    pub fn new(alphabet: &QpskAlphabet<T>, mode: PriorMode, activity_fraction: T) -> Self {
        let zero = Cplx::new(T::zero(), T::zero());
        let pts = alphabet.points();
        let states = [zero, pts[0], pts[1], pts[2], pts[3]];
        let weights = match mode {
            PriorMode::UniformStates => {
                let w = T::one() / T::from_f64_lossy(STATE_COUNT as f64);
                [w; STATE_COUNT]
            }
            PriorMode::SparsityWeighted => {
                let lam = activity_fraction
                    .max(T::zero())
                    .min(T::one());
                let wq = lam / T::from_f64_lossy(4.0);
                [T::one() - lam, wq, wq, wq, wq]
            }
        };
        let variance = states
            .iter()
            .zip(weights.iter())
            .map(|(s, &w)| w * s.norm_sqr())
            .fold(T::zero(), |a, b| a + b);
        Self {
            states,
            weights,
            variance,
        }
    }

    /// The five states in fixed order.
    pub fn states(&self) -> &[Cplx<T>; STATE_COUNT] {
        &self.states
    }

    /// The prior weights in state order (sum to 1).
    pub fn weights(&self) -> &[T; STATE_COUNT] {
        &self.weights
    }

    /// Second moment `E|x|²` of a slot entry under this prior (its mean is
    /// zero by symmetry).
    pub fn variance(&self) -> T {
        self.variance
    }

    /// A full prior posterior matrix (fallback when detection fails).
    fn prior_matrix(&self, users: usize) -> Array2<T> {
        let mut p = Array2::<T>::zeros((users, STATE_COUNT));
        for mut row in p.rows_mut() {
            for (v, &w) in row.iter_mut().zip(self.weights.iter()) {
                *v = w;
            }
        }
        p
    }
}

/// Per-slot detection output.
#[derive(Debug, Clone)]
pub struct SlotDetection<T: Real> {
    /// Per-user posterior over the five states; rows sum to 1.
    pub posteriors: Array2<T>,
    /// Posterior-mean symbol estimates.
    pub x_hat: CVec<T>,
    /// Iterations actually run (1 for the MMSE baseline).
    pub iterations: usize,
    /// True when the detector hit a non-finite iterate and fell back to the
    /// prior.
    pub failed: bool,
}

/// Evaluate the five-state posterior for one scalar observation `s` at
/// effective variance `tau_eff` (already floored). Returns the normalized
/// probabilities together with the posterior mean and variance.
fn state_posterior<T: Real>(
    s: Cplx<T>,
    tau_eff: T,
    prior: &StatePrior<T>,
) -> ([T; STATE_COUNT], Cplx<T>, T) {
    let two = T::one() + T::one();
    let mut logw = [T::zero(); STATE_COUNT];
    let mut max_lw = T::neg_infinity();
    for (i, (&st, &w)) in prior.states.iter().zip(prior.weights.iter()).enumerate() {
        let d = s - st;
        let lw = w.max(T::from_f64_lossy(f64::MIN_POSITIVE)).ln()
            - d.norm_sqr() / (two * tau_eff);
        logw[i] = lw;
        if lw > max_lw {
            max_lw = lw;
        }
    }
    let mut p = [T::zero(); STATE_COUNT];
    let mut total = T::zero();
    for i in 0..STATE_COUNT {
        let v = (logw[i] - max_lw).exp();
        p[i] = v;
        total += v;
    }
    let mut mean = Cplx::new(T::zero(), T::zero());
    let mut second = T::zero();
    for i in 0..STATE_COUNT {
        p[i] /= total;
        mean += prior.states[i] * p[i];
        second += p[i] * prior.states[i].norm_sqr();
    }
    let var = (second - mean.norm_sqr()).max(T::zero());
    (p, mean, var)
}

/// Approximate-message-passing detection of one data slot.
///
/// Runs the four-step recursion
/// `s = x̃ + (1/M)·Hᴴr`,
/// `x̃⁺ = η[s, σ²(1/M + τ)]`,
/// `τ⁺ = (β/σ²)·⟨ζ[s, σ²(1/M + τ)]⟩`,
/// `r⁺ = y − H·x̃⁺ + (τ⁺/(1+τ))·r`
/// from `x̃¹ = 0`, `r¹ = y`, `τ¹ = Var[s]/σ²`, where η/ζ are the posterior
/// mean/variance over the five states with weights
/// `∝ prior·exp(−|s−sᵢ|²/(2τ_eff))` and `β` is users-per-antenna. A
/// non-finite iterate aborts the slot and falls back to the prior.
pub fn amp_detect_slot<T: Real>(
    y_t: &ArrayView1<'_, Cplx<T>>,
    h: &ArrayView2<'_, Cplx<T>>,
    sigma2: T,
    prior: &StatePrior<T>,
    max_iters: usize,
    damping: T,
    ops: &mut OpCounters,
) -> SlotDetection<T> {
    let m = h.nrows();
    let k = h.ncols();
    assert_eq!(y_t.len(), m, "observation length must match antenna count");
    if k == 0 {
        return SlotDetection {
            posteriors: Array2::zeros((0, STATE_COUNT)),
            x_hat: CVec::<T>::zeros(0),
            iterations: 0,
            failed: false,
        };
    }
    let s2 = sigma2.max(T::from_f64_lossy(SIGMA2_FLOOR));
    let beta = T::from_f64_lossy(k as f64) / T::from_f64_lossy(m as f64);
    let inv_m = T::one() / T::from_f64_lossy(m as f64);
    let tau_floor = T::from_f64_lossy(TAU_EFF_FLOOR);

    let mut x_tilde = CVec::<T>::zeros(k);
    let mut resid: CVec<T> = y_t.to_owned();
    let mut tau = prior.variance / s2;
    let mut posteriors = prior.prior_matrix(k);
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        // s = x̃ + (1/M) Hᴴ r
        let mut s_vec = CVec::<T>::zeros(k);
        for (j, col) in h.columns().into_iter().enumerate() {
            let acc: Cplx<T> = col
                .iter()
                .zip(resid.iter())
                .map(|(hv, rv)| hv.conj() * *rv)
                .sum();
            s_vec[j] = x_tilde[j] + acc * inv_m;
        }
        ops.add_gemm(k, m, 1);
        ops.add_elementwise(k, 1, 1);

        let tau_eff = (s2 * (inv_m + tau)).max(tau_floor);
        let mut new_x = CVec::<T>::zeros(k);
        let mut new_post = Array2::<T>::zeros((k, STATE_COUNT));
        let mut zeta_sum = T::zero();
        for j in 0..k {
            let (p, mean, var) = state_posterior(s_vec[j], tau_eff, prior);
            for (dst, src) in new_post.row_mut(j).iter_mut().zip(p.iter()) {
                *dst = *src;
            }
            new_x[j] = mean;
            zeta_sum += var;
        }
        // Per-user posterior: 5 distances, exps, and moment sums.
        ops.add_elementwise(k, 3 * STATE_COUNT, 4 * STATE_COUNT);

        if damping > T::zero() {
            for j in 0..k {
                new_x[j] = new_x[j] * (T::one() - damping) + x_tilde[j] * damping;
            }
            ops.add_elementwise(k, 2, 1);
        }

        let new_tau = (beta / s2) * (zeta_sum / T::from_f64_lossy(k as f64));
        // r = y − H x̃ + (τ⁺/(1+τ)) r
        let onsager = new_tau / (T::one() + tau);
        let mut new_resid = CVec::<T>::zeros(m);
        for (i, row) in h.rows().into_iter().enumerate() {
            let acc: Cplx<T> = row
                .iter()
                .zip(new_x.iter())
                .map(|(hv, xv)| *hv * *xv)
                .sum();
            new_resid[i] = y_t[i] - acc + resid[i] * onsager;
        }
        ops.add_gemm(m, k, 1);
        ops.add_elementwise(m, 1, 2);

        let finite = new_tau.is_finite()
            && new_x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
            && new_resid.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return SlotDetection {
                posteriors: prior.prior_matrix(k),
                x_hat: CVec::<T>::zeros(k),
                iterations,
                failed: true,
            };
        }
        x_tilde = new_x;
        resid = new_resid;
        tau = new_tau;
        posteriors = new_post;
    }

    SlotDetection {
        posteriors,
        x_hat: x_tilde,
        iterations,
        failed: false,
    }
}

/// Linear-MMSE baseline detection of one data slot: estimate
/// `x̂ = (HᴴH + (σ²/v)I)⁻¹ Hᴴ y` with prior symbol variance `v`, then map
/// each estimate to state posteriors with the same exponential-weight rule,
/// using the per-user MMSE error variance as the effective variance.
pub fn mmse_detect_slot<T: Real>(
    y_t: &ArrayView1<'_, Cplx<T>>,
    h: &ArrayView2<'_, Cplx<T>>,
    sigma2: T,
    prior: &StatePrior<T>,
    ops: &mut OpCounters,
) -> SlotDetection<T> {
    let m = h.nrows();
    let k = h.ncols();
    assert_eq!(y_t.len(), m, "observation length must match antenna count");
    if k == 0 {
        return SlotDetection {
            posteriors: Array2::zeros((0, STATE_COUNT)),
            x_hat: CVec::<T>::zeros(0),
            iterations: 0,
            failed: false,
        };
    }
    let hh = adjoint(h);
    let mut gram = matmul(&hh.view(), h, ops);
    let prior_var = prior.variance.max(T::from_f64_lossy(f64::MIN_POSITIVE));
    add_ridge(&mut gram, sigma2 / prior_var);
    let (inv, _cond) = match invert(&gram.view(), ops) {
        Ok(v) => v,
        Err(_) => {
            return SlotDetection {
                posteriors: prior.prior_matrix(k),
                x_hat: CVec::<T>::zeros(k),
                iterations: 1,
                failed: true,
            };
        }
    };
    let y_col = y_t
        .to_owned()
        .into_shape_with_order((m, 1))
        .expect("column reshape");
    let hty = matmul(&hh.view(), &y_col.view(), ops);
    let x_col = matmul(&inv.view(), &hty.view(), ops);
    let tau_floor = T::from_f64_lossy(TAU_EFF_FLOOR);

    let mut posteriors = Array2::<T>::zeros((k, STATE_COUNT));
    let mut x_hat = CVec::<T>::zeros(k);
    let mut finite = true;
    for j in 0..k {
        let est = x_col[[j, 0]];
        let err_var = (sigma2 * inv[[j, j]].re).max(tau_floor);
        let (p, _, _) = state_posterior(est, err_var, prior);
        if !est.re.is_finite() || !est.im.is_finite() || p.iter().any(|v| !v.is_finite()) {
            finite = false;
            break;
        }
        for (dst, src) in posteriors.row_mut(j).iter_mut().zip(p.iter()) {
            *dst = *src;
        }
        x_hat[j] = est;
    }
    ops.add_elementwise(k, 3 * STATE_COUNT, 4 * STATE_COUNT);
    if !finite {
        return SlotDetection {
            posteriors: prior.prior_matrix(k),
            x_hat: CVec::<T>::zeros(k),
            iterations: 1,
            failed: true,
        };
    }
    SlotDetection {
        posteriors,
        x_hat,
        iterations: 1,
        failed: false,
    }
}

/// Which detector to run on the data sub-frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DetectorKind {
    /// The message-passing joint pattern/data detector.
    Amp,
    /// The linear-MMSE baseline.
    Mmse,
}

/// Detect every data slot independently.
#[allow(clippy::too_many_arguments)]
pub fn detect_data_frame<T: Real>(
    y_data: &ArrayView2<'_, Cplx<T>>,
    h: &ArrayView2<'_, Cplx<T>>,
    sigma2: T,
    prior: &StatePrior<T>,
    detector: DetectorKind,
    max_iters: usize,
    damping: T,
    ops: &mut OpCounters,
) -> Vec<SlotDetection<T>> {
    y_data
        .columns()
        .into_iter()
        .map(|col| match detector {
            DetectorKind::Amp => {
                amp_detect_slot(&col, h, sigma2, prior, max_iters, damping, ops)
            }
            DetectorKind::Mmse => mmse_detect_slot(&col, h, sigma2, prior, ops),
        })
        .collect()
}

/// Gather one user's slot-by-state posterior matrix (Tc × 5) from per-slot
/// detections.
pub fn user_posteriors<T: Real>(slots: &[SlotDetection<T>], user: usize) -> Array2<T> {
    let tc = slots.len();
    let mut out = Array2::<T>::zeros((tc, STATE_COUNT));
    for (t, slot) in slots.iter().enumerate() {
        out.row_mut(t).assign(&slot.posteriors.row(user));
    }
    out
}

/// Select the transmission pattern for one user by maximum log-score:
/// `score(c) = Σ_{on} ln(max(P_active, floor)) + Σ_{off} ln(max(P_idle, floor))`
/// with `P_idle` the silent-state posterior and `P_active = 1 − P_idle`.
/// Ties break toward the lowest index. Returns the winner and its log-score
/// margin over the runner-up.
pub fn retrieve_pattern<T: Real>(
    user_post: &ArrayView2<'_, T>,
    patterns: &PatternCodebook,
    prob_floor: T,
) -> (usize, T) {
    let tc = user_post.nrows();
    assert_eq!(
        tc,
        patterns.slot_count(),
        "posterior rows must cover every data slot"
    );
    let mut log_active = vec![T::zero(); tc];
    let mut log_idle = vec![T::zero(); tc];
    let mut base = T::zero();
    for t in 0..tc {
        let p_idle = user_post[[t, 0]];
        let p_active = (T::one() - p_idle).max(T::zero());
        log_active[t] = p_active.max(prob_floor).ln();
        log_idle[t] = p_idle.max(prob_floor).ln();
        base += log_idle[t];
    }
    let mut best_idx = 0usize;
    let mut best = T::neg_infinity();
    let mut second = T::neg_infinity();
    for c in 0..patterns.len() {
        let mut score = base;
        for &t in patterns.on_positions(c) {
            let t = t as usize;
            score += log_active[t] - log_idle[t];
        }
        if score > best {
            second = best;
            best = score;
            best_idx = c;
        } else if score > second {
            second = score;
        }
    }
    let margin = if patterns.len() > 1 {
        best - second
    } else {
        T::infinity()
    };
    (best_idx, margin)
}

/// Extract soft bit LLRs for one user given its selected pattern: for each
/// on-slot in ascending order, renormalize the four QPSK-state posteriors
/// and emit
/// `llr0 = ln((p00+p01)/(p10+p11))`, `llr1 = ln((p00+p10)/(p01+p11))`,
/// clamped to ±30.
pub fn extract_llrs<T: Real>(
    user_post: &ArrayView2<'_, T>,
    pattern_index: usize,
    patterns: &PatternCodebook,
    prob_floor: T,
) -> Vec<T> {
    let clamp = T::from_f64_lossy(LLR_CLAMP);
    let quarter = T::from_f64_lossy(0.25);
    let mut llrs = Vec::with_capacity(2 * patterns.weight());
    for &t in patterns.on_positions(pattern_index) {
        let row = user_post.row(t as usize);
        let mut q = [row[1], row[2], row[3], row[4]];
        let total = q[0] + q[1] + q[2] + q[3];
        if total > T::zero() {
            for v in &mut q {
                *v /= total;
            }
        } else {
            q = [quarter; 4];
        }
        let llr0 = (q[0] + q[1]).max(prob_floor).ln() - (q[2] + q[3]).max(prob_floor).ln();
        let llr1 = (q[0] + q[2]).max(prob_floor).ln() - (q[1] + q[3]).max(prob_floor).ln();
        llrs.push(llr0.max(-clamp).min(clamp));
        llrs.push(llr1.max(-clamp).min(clamp));
    }
    llrs
}

/// Exhaustive joint-MAP per-user decisions for small systems (test oracle):
/// enumerates all state combinations, weights each by the exact Gaussian
/// likelihood `exp(−‖y − Hx‖²/σ²)` times the prior, and returns each user's
/// marginal-MAP state index.
pub fn joint_map_decisions<T: Real>(
    y_t: &ArrayView1<'_, Cplx<T>>,
    h: &ArrayView2<'_, Cplx<T>>,
    sigma2: T,
    prior: &StatePrior<T>,
) -> Vec<usize> {
    let m = h.nrows();
    let k = h.ncols();
    assert!(k <= 8, "oracle is exponential in the user count");
    let combos = STATE_COUNT.pow(k as u32);
    let mut marginals = Array2::<T>::zeros((k, STATE_COUNT));
    let mut log_terms: Vec<(Vec<usize>, T)> = Vec::with_capacity(combos);
    let mut max_log = T::neg_infinity();
    for combo in 0..combos {
        let mut idx = vec![0usize; k];
        let mut rem = combo;
        for slot in idx.iter_mut() {
            *slot = rem % STATE_COUNT;
            rem /= STATE_COUNT;
        }
        let mut log_prior = T::zero();
        for &i in &idx {
            log_prior += prior.weights[i].max(T::from_f64_lossy(f64::MIN_POSITIVE)).ln();
        }
        let mut dist = T::zero();
        for r in 0..m {
            let mut acc = y_t[r];
            for (j, &i) in idx.iter().enumerate() {
                acc -= h[[r, j]] * prior.states[i];
            }
            dist += acc.norm_sqr();
        }
        let lg = log_prior - dist / sigma2;
        if lg > max_log {
            max_log = lg;
        }
        log_terms.push((idx, lg));
    }
    for (idx, lg) in log_terms {
        let w = (lg - max_log).exp();
        for (j, &i) in idx.iter().enumerate() {
            marginals[[j, i]] += w;
        }
    }
    (0..k)
        .map(|j| {
            let row = marginals.row(j);
            let mut best = 0;
            for i in 1..STATE_COUNT {
                if row[i] > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Argmax state per user from a slot detection.
pub fn argmax_states<T: Real>(slot: &SlotDetection<T>) -> Vec<usize> {
    slot.posteriors
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for i in 1..STATE_COUNT {
                if row[i] > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
