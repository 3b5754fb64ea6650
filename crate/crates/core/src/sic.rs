//! Successive interference cancellation: the per-chunk receiver loop.
//!
//! Each round runs the full pipeline on the current residual — activity
//! estimation, low-rank factorization with ambiguity compensation, per-slot
//! detection, pattern retrieval, LLR extraction, and list decoding. Messages
//! whose CRC verifies are re-encoded, their channels re-estimated by
//! regularized least squares against the residual, and their contribution
//! subtracted; the loop repeats until a round produces no new messages or
//! the round budget is exhausted. Stage failures end the chunk's loop
//! gracefully with the partial list.

use crate::bits::BitVec;
use crate::config::{derive_energy_budget, SystemConfig};
use crate::counters::{ComplexityCounters, OpCounters};
use crate::detection::{
    detect_data_frame, extract_llrs, retrieve_pattern, user_posteriors, DetectorKind, StatePrior,
};
use crate::encoder::{assemble_message, encode_message, Codecs};
use crate::error::Error;
use crate::factorization::{estimate_activity, factor_chunk};
use crate::linalg::{add_ridge, adjoint, frobenius, matmul, solve_hermitian, CMat};
use crate::rng::{substream, Purpose};
use crate::scalar::Real;
use crate::{Cplx, Result};
use ndarray::{s, ArrayView2};
use std::collections::HashSet;

/// Condition-proxy ceiling for the channel-refinement solve; beyond it the
/// refinement is skipped in favor of the detector-stage channel columns.
pub const REFINE_COND_LIMIT: f64 = 1e10;

/// Regularized least-squares channel re-estimate for re-encoded frames:
/// `H = Y·Xᴴ·(X·Xᴴ + σ²I)⁻¹`, returned as M × |passed|.
pub fn refine_channel<T: Real>(
    y: &ArrayView2<'_, Cplx<T>>,
    x_passed: &ArrayView2<'_, Cplx<T>>,
    sigma2: T,
    ops: &mut OpCounters,
) -> Result<CMat<T>> {
    if x_passed.nrows() == 0 {
        return Err(Error::internal("refinement needs at least one frame"));
    }
    if x_passed.ncols() != y.ncols() {
        return Err(Error::internal(
            "frame length must match the observation width",
        ));
    }
    let xh = adjoint(x_passed);
    let mut gram = matmul(x_passed, &xh.view(), ops);
    add_ridge(&mut gram, sigma2);
    let yh = adjoint(y);
    let rhs = matmul(x_passed, &yh.view(), ops);
    let (z, cond) = solve_hermitian(&gram.view(), &rhs.view(), ops)?;
    if cond > REFINE_COND_LIMIT {
        return Err(Error::chunk(format!(
            "refinement system is ill conditioned (proxy {cond:.3e})"
        )));
    }
    Ok(adjoint(&z.view()))
}

/// Subtract `H·X` from the residual in place.
pub fn subtract_contribution<T: Real>(
    residual: &mut CMat<T>,
    h: &ArrayView2<'_, Cplx<T>>,
    x: &ArrayView2<'_, Cplx<T>>,
    ops: &mut OpCounters,
) {
    let contribution = matmul(h, x, ops);
    *residual -= &contribution;
    ops.add_elementwise(residual.len(), 0, 1);
}

/// One row of per-round diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct RoundDiagnostics {
    /// Chunk index.
    pub chunk: usize,
    /// Round index within the chunk (0 = first pass).
    pub round: usize,
    /// Activity estimate the round started from.
    pub ka_estimate: usize,
    /// Newly accepted messages this round.
    pub passers: usize,
    /// Residual energy ‖Y‖²_F after the round's subtraction.
    pub residual_energy: f64,
}

/// Result of decoding one chunk.
#[derive(Debug, Clone)]
pub struct ChunkDecodeOutcome {
    /// Accepted messages (full reassembled bit vectors, deduplicated).
    pub messages: Vec<BitVec>,
    /// Pipeline passes actually executed.
    pub rounds: usize,
    /// Per-round diagnostics.
    pub diagnostics: Vec<RoundDiagnostics>,
    /// If a stage failed, the reason the loop ended early.
    pub failure: Option<String>,
}

/// Run the successive-interference-cancellation loop on one chunk
/// observation. The factorization initializer draws from a dedicated
/// substream indexed by (chunk, round) so reruns are reproducible.
pub fn run_sic_loop<T: Real>(
    y_chunk: &ArrayView2<'_, Cplx<T>>,
    chunk_index: usize,
    config: &SystemConfig,
    codecs: &Codecs<T>,
    master_seed: u64,
    trial: u64,
    counters: &mut ComplexityCounters,
) -> ChunkDecodeOutcome {
    let budget = derive_energy_budget(config);
    let sigma2 = T::from_f64_lossy(budget.sigma2);
    let frame_energy = T::from_f64_lossy(budget.frame_energy);
    let tp = config.pilot_length;
    let activity_fraction = T::from_f64_lossy(
        codecs.patterns.weight() as f64 / codecs.patterns.slot_count() as f64,
    );
    let prior = StatePrior::new(&codecs.alphabet, config.algo.amp_prior_mode, activity_fraction);
    let prob_floor = T::from_f64_lossy(config.algo.pattern_prob_floor);
    let damping = T::from_f64_lossy(config.algo.amp_damping);

    let mut residual = y_chunk.to_owned();
    let mut accepted: Vec<BitVec> = Vec::new();
    let mut accepted_set: HashSet<BitVec> = HashSet::new();
    let mut diagnostics = Vec::new();
    let mut rounds = 0usize;
    let mut failure = None;

    for round in 0..=config.algo.sic_max_rounds {
        let energy_now = || {
            let f = frobenius(&residual.view());
            (f * f).to_f64().unwrap_or(f64::NAN)
        };
        let ka = estimate_activity(&residual.view(), frame_energy, sigma2);
        if ka == 0 {
            diagnostics.push(RoundDiagnostics {
                chunk: chunk_index,
                round,
                ka_estimate: 0,
                passers: 0,
                residual_energy: energy_now(),
            });
            break;
        }
        rounds += 1;
        let mut init_rng = substream(
            master_seed,
            trial,
            Purpose::FactorInit,
            (chunk_index * 64 + round) as u32,
        );
        let fact = match factor_chunk(
            &residual.view(),
            frame_energy,
            sigma2,
            &codecs.pilots,
            tp,
            &config.algo,
            Some(ka),
            &mut init_rng,
            &mut counters.factorization,
        ) {
            Ok(f) => f,
            Err(e) => {
                diagnostics.push(RoundDiagnostics {
                    chunk: chunk_index,
                    round,
                    ka_estimate: ka,
                    passers: 0,
                    residual_energy: energy_now(),
                });
                failure = Some(e.to_string());
                break;
            }
        };

        let y_data = residual.slice(s![.., tp..]);
        let slots = detect_data_frame(
            &y_data,
            &fact.compensation.h_hat.view(),
            sigma2,
            &prior,
            DetectorKind::Amp,
            config.algo.amp_max_iters,
            damping,
            &mut counters.detection,
        );

        // Decode every resolved user; keep CRC passers that are new.
        let mut new_frames: Vec<(BitVec, crate::encoder::TxMessage<T>)> = Vec::new();
        let mut passer_columns: Vec<usize> = Vec::new();
        for k in 0..fact.compensation.support.len() {
            let up = user_posteriors(&slots, k);
            let (pattern_idx, _margin) =
                retrieve_pattern(&up.view(), &codecs.patterns, prob_floor);
            let llrs = extract_llrs(&up.view(), pattern_idx, &codecs.patterns, prob_floor);
            let decoded = match codecs.code.decode(&llrs, &mut counters.fec) {
                Ok(d) => d,
                Err(_) => continue,
            };
            if !decoded.crc_ok {
                continue;
            }
            let message = match assemble_message(
                chunk_index,
                fact.compensation.support[k],
                pattern_idx,
                &decoded.payload,
                config,
            ) {
                Ok(msg) => msg,
                Err(_) => continue,
            };
            if accepted_set.contains(&message)
                || new_frames.iter().any(|(m, _)| *m == message)
            {
                continue;
            }
            let tx = match encode_message(&message, config, codecs) {
                Ok(t) => t,
                Err(_) => continue,
            };
            new_frames.push((message, tx));
            passer_columns.push(k);
        }

        let passers = new_frames.len();
        if passers == 0 {
            diagnostics.push(RoundDiagnostics {
                chunk: chunk_index,
                round,
                ka_estimate: ka,
                passers: 0,
                residual_energy: energy_now(),
            });
            break;
        }

        // Re-estimate the passers' channels from the residual they were
        // decoded against, then cancel them.
        let t_len = y_chunk.ncols();
        let mut x_passed = CMat::<T>::zeros((passers, t_len));
        for (i, (_, tx)) in new_frames.iter().enumerate() {
            x_passed.row_mut(i).assign(&tx.frame);
        }
        let h_passed = match refine_channel(
            &residual.view(),
            &x_passed.view(),
            sigma2,
            &mut counters.sic,
        ) {
            Ok(h) => h,
            Err(_) => {
                // Fall back to the detector-stage channel columns.
                let m = y_chunk.nrows();
                let mut h = CMat::<T>::zeros((m, passers));
                for (i, &col) in passer_columns.iter().enumerate() {
                    h.column_mut(i)
                        .assign(&fact.compensation.h_hat.column(col));
                }
                h
            }
        };
        subtract_contribution(
            &mut residual,
            &h_passed.view(),
            &x_passed.view(),
            &mut counters.sic,
        );
        for (message, _) in new_frames {
            accepted_set.insert(message.clone());
            accepted.push(message);
        }
        diagnostics.push(RoundDiagnostics {
            chunk: chunk_index,
            round,
            ka_estimate: ka,
            passers,
            residual_energy: {
                let f = frobenius(&residual.view());
                (f * f).to_f64().unwrap_or(f64::NAN)
            },
        });
    }

    ChunkDecodeOutcome {
        messages: accepted,
        rounds,
        diagnostics,
        failure,
    }
}

/// Decode all chunk observations of one trial and merge the accepted lists.
#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    /// Union of accepted messages across chunks (deduplicated).
    pub messages: Vec<BitVec>,
    /// Per-chunk outcomes, indexed by chunk.
    pub per_chunk: Vec<ChunkDecodeOutcome>,
}

impl DecodeOutcome {
    /// Mean pipeline passes over all chunks.
    pub fn average_rounds(&self) -> f64 {
        if self.per_chunk.is_empty() {
            return 0.0;
        }
        let total: usize = self.per_chunk.iter().map(|c| c.rounds).sum();
        total as f64 / self.per_chunk.len() as f64
    }
}

/// Run the receiver over every chunk observation of one trial.
pub fn run_receiver<T: Real>(
    chunk_observations: &[CMat<T>],
    config: &SystemConfig,
    codecs: &Codecs<T>,
    master_seed: u64,
    trial: u64,
    counters: &mut ComplexityCounters,
) -> DecodeOutcome {
    let mut per_chunk = Vec::with_capacity(chunk_observations.len());
    let mut messages = Vec::new();
    let mut seen: HashSet<BitVec> = HashSet::new();
    for (c, y) in chunk_observations.iter().enumerate() {
        let outcome = run_sic_loop(
            &y.view(),
            c,
            config,
            codecs,
            master_seed,
            trial,
            counters,
        );
        for msg in &outcome.messages {
            if seen.insert(msg.clone()) {
                messages.push(msg.clone());
            }
        }
        per_chunk.push(outcome);
    }
    DecodeOutcome {
        messages,
        per_chunk,
    }
}
