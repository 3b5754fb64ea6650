//! Monte-Carlo experiment orchestration: parameter sweeps, trial
//! parallelism, metric aggregation, and deterministic CSV emission.
//!
//! Three experiment modes are provided. The end-to-end mode simulates the
//! full uplink (random messages, per-chunk block fading, the complete
//! receiver with cancellation) and reports per-user probability of error.
//! The detector benchmark isolates the per-slot detectors on a
//! known-channel model and reports symbol error rates for both the
//! message-passing detector and the MMSE baseline on paired realizations.
//! The factorization benchmark isolates the factor-and-compensate stage and
//! reports pilot-support recovery and signal reconstruction error.
//!
//! Every trial draws from dedicated, purpose-tagged substreams of the
//! master seed, so results are bit-identical for a fixed (spec, seed)
//! regardless of worker count or scheduling.

use crate::channel::{draw_channel, transmit};
use crate::codebooks::QpskAlphabet;
use crate::config::{derive_energy_budget, SystemConfig};
use crate::counters::ComplexityCounters;
use crate::detection::{
    amp_detect_slot, argmax_states, mmse_detect_slot, DetectorKind, StatePrior,
};
use crate::encoder::{build_scenes, encode_message, sample_messages, Codecs};
use crate::error::Error;
use crate::factorization::factor_chunk;
use crate::linalg::CMat;
use crate::metrics::{compute_pupe, wilson_interval};
use crate::rng::{substream, Purpose};
use crate::sic::run_receiver;
use crate::Result;
use rand::Rng;
use rayon::prelude::*;
use std::fmt;
use std::io::Write as IoWrite;
use std::path::Path;
use std::str::FromStr;

/// z-score for 95% two-sided confidence intervals.
pub const WILSON_Z: f64 = 1.96;

/// Which parameter the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SweepAxis {
    /// Energy per bit (dB), end-to-end experiments.
    EbN0,
    /// Receive antenna count M.
    AntennaCount,
    /// Active user count.
    ActiveUsers,
    /// Per-slot SNR (dB), detector benchmark only.
    DetectorSnr,
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ebn0" | "eb_n0" | "energy_per_bit_db" => Ok(SweepAxis::EbN0),
            "antenna_count" | "antennas" | "m" => Ok(SweepAxis::AntennaCount),
            "active_users" | "ka" | "users" => Ok(SweepAxis::ActiveUsers),
            "detector_snr" | "snr" | "snr_db" => Ok(SweepAxis::DetectorSnr),
            other => Err(Error::config(format!(
                "unknown sweep axis '{other}' (expected ebn0 | antenna_count | active_users | detector_snr)"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SweepAxis::EbN0 => "ebn0",
            SweepAxis::AntennaCount => "antenna_count",
            SweepAxis::ActiveUsers => "active_users",
            SweepAxis::DetectorSnr => "detector_snr",
        };
        f.write_str(name)
    }
}

/// Experiment mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentMode {
    /// Full uplink + receiver, per-user error probability.
    EndToEndPupe,
    /// Known-channel per-slot detector benchmark.
    DetectorSer,
    /// Factorization/compensation quality benchmark.
    FactorBench,
}

/// A complete experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// What to run.
    pub mode: ExperimentMode,
    /// Swept parameter.
    pub sweep_axis: SweepAxis,
    /// Values the axis takes, one output row (or row pair) each.
    pub sweep_values: Vec<f64>,
    /// Monte-Carlo trials per sweep value.
    pub trials_per_point: usize,
    /// Base configuration; the axis overrides one field per value.
    pub base_config: SystemConfig,
    /// Master seed for all substreams.
    pub master_seed: u64,
    /// Worker threads (0 = library default).
    pub workers: usize,
    /// Per-slot SNR (dB) for the detector benchmark when the axis does not
    /// sweep it.
    pub detector_snr_db: f64,
    /// Disable noise in the factorization benchmark.
    pub noiseless: bool,
    /// Force pairwise-distinct pilot indices in factorization-benchmark
    /// scenes (collisions are otherwise left in and counted unrecovered).
    pub distinct_pilots: bool,
}

impl ExperimentSpec {
    /// Check the spec is runnable.
    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            return Err(Error::config("sweep_values must be nonempty"));
        }
        if self.trials_per_point == 0 {
            return Err(Error::config("trials_per_point must be ≥ 1"));
        }
        if self.sweep_axis == SweepAxis::DetectorSnr && self.mode != ExperimentMode::DetectorSer
        {
            return Err(Error::config(
                "the detector_snr axis only applies to the detector benchmark",
            ));
        }
        Ok(())
    }
}

/// Apply one sweep value to a config copy.
fn apply_axis(config: &mut SystemConfig, axis: SweepAxis, value: f64) -> Result<()> {
    let as_count = |v: f64, what: &str| -> Result<usize> {
        if v < 1.0 || v.fract() != 0.0 {
            return Err(Error::config(format!(
                "{what} sweep value {v} must be a positive integer"
            )));
        }
        Ok(v as usize)
    };
    match axis {
        SweepAxis::EbN0 => config.energy_per_bit_db = value,
        SweepAxis::AntennaCount => config.antenna_count = as_count(value, "antenna_count")?,
        SweepAxis::ActiveUsers => config.active_users = as_count(value, "active_users")?,
        SweepAxis::DetectorSnr => {}
    }
    Ok(())
}

fn run_pool<R: Send>(workers: usize, job: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    Ok(pool.install(job))
}

// ---------------------------------------------------------------------------
// End-to-end PUPE experiment
// ---------------------------------------------------------------------------

/// One aggregated row of the end-to-end experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PupeRow {
    /// The sweep value this row belongs to.
    pub sweep_value: f64,
    /// Trials aggregated.
    pub trials: usize,
    /// Pooled missed-detection rate.
    pub p_md: f64,
    /// Mean per-trial false-alarm rate.
    pub p_fa: f64,
    /// p_md + p_fa.
    pub pupe: f64,
    /// Wilson 95% interval on the pooled missed-detection counts.
    pub p_md_lo: f64,
    /// Upper end of the interval.
    pub p_md_hi: f64,
    /// Wilson 95% interval on the pooled false-alarm counts.
    pub p_fa_lo: f64,
    /// Upper end of the interval.
    pub p_fa_hi: f64,
    /// Mean cancellation rounds per chunk, averaged over trials.
    pub avg_sic_rounds: f64,
    /// Total complex multiplies across all trials at this point.
    pub cmul: u64,
    /// Total complex adds across all trials at this point.
    pub cadd: u64,
}

struct PupeTrialResult {
    missed: usize,
    false_alarms: usize,
    users: usize,
    list_size: usize,
    fa_ratio: f64,
    avg_rounds: f64,
    counters: ComplexityCounters,
}

fn run_pupe_trial(
    config: &SystemConfig,
    master_seed: u64,
    trial: u64,
) -> Result<PupeTrialResult> {
    let codecs = Codecs::<f64>::build(config, master_seed, trial)?;
    let budget = derive_energy_budget(config);
    let mut msg_rng = substream(master_seed, trial, Purpose::Messages, 0);
    let messages = sample_messages(config.active_users, config.message_bits, &mut msg_rng);
    let encoded = messages
        .iter()
        .map(|m| encode_message(m, config, &codecs))
        .collect::<Result<Vec<_>>>()?;
    let scenes = build_scenes(&encoded, config);
    let mut chunk_obs: Vec<CMat<f64>> = Vec::with_capacity(scenes.len());
    for (c, scene) in scenes.iter().enumerate() {
        let mut ch_rng = substream(master_seed, trial, Purpose::Channel, c as u32);
        let h = draw_channel::<f64>(config.antenna_count, scene.x.nrows(), &mut ch_rng);
        let mut n_rng = substream(master_seed, trial, Purpose::Noise, c as u32);
        chunk_obs.push(transmit(&h.view(), &scene.x.view(), budget.sigma2, &mut n_rng));
    }
    let mut counters = ComplexityCounters::default();
    let outcome = run_receiver(
        &chunk_obs,
        config,
        &codecs,
        master_seed,
        trial,
        &mut counters,
    );
    let report = compute_pupe(&messages, &outcome.messages, config.message_bits)?;
    Ok(PupeTrialResult {
        missed: report.missed,
        false_alarms: report.false_alarms,
        users: config.active_users,
        list_size: report.list_size,
        fa_ratio: report.p_fa,
        avg_rounds: outcome.average_rounds(),
        counters,
    })
}

/// Run the end-to-end experiment over the sweep.
pub fn run_end_to_end(spec: &ExperimentSpec) -> Result<Vec<PupeRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.sweep_values.len());
    for &value in &spec.sweep_values {
        let mut config = spec.base_config.clone();
        apply_axis(&mut config, spec.sweep_axis, value)?;
        config.validate()?;
        let seed = spec.master_seed;
        let trials: Vec<PupeTrialResult> = run_pool(spec.workers, || {
            (0..spec.trials_per_point as u64)
                .into_par_iter()
                .map(|t| run_pupe_trial(&config, seed, t))
                .collect::<Result<Vec<_>>>()
        })??;

        let mut missed = 0u64;
        let mut users = 0u64;
        let mut false_alarms = 0u64;
        let mut listed = 0u64;
        let mut fa_ratio_sum = 0.0;
        let mut rounds_sum = 0.0;
        let mut counters = ComplexityCounters::default();
        for t in &trials {
            missed += t.missed as u64;
            users += t.users as u64;
            false_alarms += t.false_alarms as u64;
            listed += t.list_size as u64;
            fa_ratio_sum += t.fa_ratio;
            rounds_sum += t.avg_rounds;
            counters += t.counters;
        }
        let n = trials.len() as f64;
        let p_md = if users > 0 {
            missed as f64 / users as f64
        } else {
            0.0
        };
        let p_fa = fa_ratio_sum / n;
        let (p_md_lo, p_md_hi) = wilson_interval(missed, users, WILSON_Z);
        let (p_fa_lo, p_fa_hi) = wilson_interval(false_alarms, listed.max(1), WILSON_Z);
        let total = counters.total();
        rows.push(PupeRow {
            sweep_value: value,
            trials: trials.len(),
            p_md,
            p_fa,
            pupe: p_md + p_fa,
            p_md_lo,
            p_md_hi,
            p_fa_lo,
            p_fa_hi,
            avg_sic_rounds: rounds_sum / n,
            cmul: total.complex_multiplies,
            cadd: total.complex_adds,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Detector SER benchmark
// ---------------------------------------------------------------------------

/// One aggregated row of the detector benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SerRow {
    /// Antenna count.
    pub m: usize,
    /// Slot user count.
    pub ka: usize,
    /// Per-slot SNR in dB.
    pub snr_db: f64,
    /// Which detector produced the row ("amp" or "mmse").
    pub detector: DetectorKind,
    /// Trials aggregated.
    pub trials: usize,
    /// Symbol error rate over all (user, trial) decisions.
    pub ser: f64,
    /// Slots where the detector raised its failure flag (prior fallback).
    /// Diagnostic only — not part of the CSV schema.
    pub failed_slots: u64,
}

fn detector_name(kind: DetectorKind) -> &'static str {
    match kind {
        DetectorKind::Amp => "amp",
        DetectorKind::Mmse => "mmse",
    }
}

/// Run the per-slot detector benchmark: at each sweep value, draw paired
/// (channel, states, noise) realizations of the slot model and count
/// argmax-state errors for both detectors.
pub fn run_detector_bench(spec: &ExperimentSpec) -> Result<Vec<SerRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.sweep_values.len() * 2);
    for &value in &spec.sweep_values {
        let mut config = spec.base_config.clone();
        apply_axis(&mut config, spec.sweep_axis, value)?;
        let snr_db = if spec.sweep_axis == SweepAxis::DetectorSnr {
            value
        } else {
            spec.detector_snr_db
        };
        let m = config.antenna_count;
        let ka = config.active_users;
        if m == 0 || ka == 0 {
            return Err(Error::config("detector bench needs m ≥ 1 and ka ≥ 1"));
        }
        let es = 1.0f64;
        let alphabet = QpskAlphabet::<f64>::new(es);
        let activity = config.symbols_per_frame() as f64 / config.data_length() as f64;
        let prior = StatePrior::new(&alphabet, config.algo.amp_prior_mode, activity);
        // SNR = E‖Hx‖² / E‖n‖² per receive antenna: E|x|² = prior variance.
        let sigma2 = ka as f64 * prior.variance() / 10f64.powf(snr_db / 10.0);
        let seed = spec.master_seed;
        let amp_iters = config.algo.amp_max_iters;
        let damping = config.algo.amp_damping;

        let per_trial: Vec<(u64, u64, u64, u64)> = run_pool(spec.workers, || {
            (0..spec.trials_per_point as u64)
                .into_par_iter()
                .map(|t| {
                    let mut ch_rng = substream(seed, t, Purpose::Channel, 0);
                    let h = draw_channel::<f64>(m, ka, &mut ch_rng);
                    let mut st_rng = substream(seed, t, Purpose::Messages, 0);
                    let states: Vec<usize> =
                        (0..ka).map(|_| st_rng.gen_range(0..5usize)).collect();
                    let x = CMat::<f64>::from_shape_fn((ka, 1), |(j, _)| {
                        prior.states()[states[j]]
                    });
                    let mut n_rng = substream(seed, t, Purpose::Noise, 0);
                    let y = transmit(&h.view(), &x.view(), sigma2, &mut n_rng);
                    let mut counters = ComplexityCounters::default();
                    let amp = amp_detect_slot(
                        &y.column(0),
                        &h.view(),
                        sigma2,
                        &prior,
                        amp_iters,
                        damping,
                        &mut counters.detection,
                    );
                    let mmse = mmse_detect_slot(
                        &y.column(0),
                        &h.view(),
                        sigma2,
                        &prior,
                        &mut counters.detection,
                    );
                    let amp_err = argmax_states(&amp)
                        .iter()
                        .zip(states.iter())
                        .filter(|(a, b)| a != b)
                        .count() as u64;
                    let mmse_err = argmax_states(&mmse)
                        .iter()
                        .zip(states.iter())
                        .filter(|(a, b)| a != b)
                        .count() as u64;
                    (amp_err, mmse_err, amp.failed as u64, mmse.failed as u64)
                })
                .collect()
        })?;

        let decisions = (spec.trials_per_point * ka) as f64;
        let amp_errors: u64 = per_trial.iter().map(|r| r.0).sum();
        let mmse_errors: u64 = per_trial.iter().map(|r| r.1).sum();
        let amp_failed: u64 = per_trial.iter().map(|r| r.2).sum();
        let mmse_failed: u64 = per_trial.iter().map(|r| r.3).sum();
        for (kind, errors, failed_slots) in [
            (DetectorKind::Amp, amp_errors, amp_failed),
            (DetectorKind::Mmse, mmse_errors, mmse_failed),
        ] {
            rows.push(SerRow {
                m,
                ka,
                snr_db,
                detector: kind,
                trials: spec.trials_per_point,
                ser: errors as f64 / decisions,
                failed_slots,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Factorization benchmark
// ---------------------------------------------------------------------------

/// One aggregated row of the factorization benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorRow {
    /// Antenna count.
    pub m: usize,
    /// Chunk length (pilot + data).
    pub t: usize,
    /// Users in the synthesized scene.
    pub ka: usize,
    /// Energy per bit in dB, or +inf for the noiseless variant.
    pub snr_db: f64,
    /// Fraction of users whose pilot was recovered (collisions count as
    /// unrecovered for every collided user).
    pub support_recovery_rate: f64,
    /// Mean relative reconstruction error over recovered users' rows.
    pub relative_frame_error: f64,
}

struct FactorTrialResult {
    recovered: usize,
    users: usize,
    frame_error: f64,
}

/// Sample `ka` distinct messages pinned to chunk 0, optionally rejecting
/// pilot-index collisions, for factorization-benchmark scenes.
fn sample_scene_messages(
    config: &SystemConfig,
    ka: usize,
    distinct_pilots: bool,
    rng: &mut impl Rng,
) -> Result<Vec<crate::bits::BitVec>> {
    use std::collections::HashSet;
    if distinct_pilots && ka > (1usize << config.pilot_bits) {
        return Err(Error::config(
            "cannot synthesize a scene with the requested pilot constraints",
        ));
    }
    let mut messages: Vec<crate::bits::BitVec> = Vec::with_capacity(ka);
    let mut seen_messages: HashSet<crate::bits::BitVec> = HashSet::new();
    let mut seen_pilots: HashSet<usize> = HashSet::new();
    let mut attempts = 0usize;
    while messages.len() < ka {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::config(
                "cannot synthesize a scene with the requested pilot constraints",
            ));
        }
        let mut msg: crate::bits::BitVec =
            (0..config.message_bits).map(|_| rng.gen_range(0..2u8)).collect();
        for b in msg.iter_mut().take(config.chunk_bits) {
            *b = 0;
        }
        let (_, pilot, _, _) = crate::encoder::split_message(&msg, config)?;
        if seen_messages.contains(&msg) || (distinct_pilots && seen_pilots.contains(&pilot)) {
            continue;
        }
        seen_pilots.insert(pilot);
        seen_messages.insert(msg.clone());
        messages.push(msg);
    }
    Ok(messages)
}

fn run_factor_trial(
    config: &SystemConfig,
    master_seed: u64,
    trial: u64,
    noiseless: bool,
    distinct_pilots: bool,
) -> Result<FactorTrialResult> {
    let ka = config.active_users;
    if ka == 0 {
        return Ok(FactorTrialResult {
            recovered: 0,
            users: 0,
            frame_error: 0.0,
        });
    }
    let codecs = Codecs::<f64>::build(config, master_seed, trial)?;
    let budget = derive_energy_budget(config);
    let mut msg_rng = substream(master_seed, trial, Purpose::Messages, 0);
    let messages = sample_scene_messages(config, ka, distinct_pilots, &mut msg_rng)?;
    let encoded = messages
        .iter()
        .map(|m| encode_message(m, config, &codecs))
        .collect::<Result<Vec<_>>>()?;
    let scenes = build_scenes(&encoded, config);
    let scene = &scenes[0];
    let users = scene.x.nrows();
    let sigma2 = if noiseless { 0.0 } else { budget.sigma2 };
    let mut ch_rng = substream(master_seed, trial, Purpose::Channel, 0);
    let h = draw_channel::<f64>(config.antenna_count, users, &mut ch_rng);
    let mut n_rng = substream(master_seed, trial, Purpose::Noise, 0);
    let y = transmit(&h.view(), &scene.x.view(), sigma2, &mut n_rng);

    let mut counters = ComplexityCounters::default();
    let mut init_rng = substream(master_seed, trial, Purpose::FactorInit, 0);
    let outcome = factor_chunk(
        &y.view(),
        budget.frame_energy,
        sigma2,
        &codecs.pilots,
        config.pilot_length,
        &config.algo,
        Some(users),
        &mut init_rng,
        &mut counters.factorization,
    );
    let fact = match outcome {
        Ok(f) => f,
        Err(_) => {
            return Ok(FactorTrialResult {
                recovered: 0,
                users,
                frame_error: 1.0,
            });
        }
    };
    // A user is recovered when its pilot is unique in the scene and present
    // in the found support.
    let pilots: Vec<usize> = encoded.iter().map(|tx| tx.pilot_index).collect();
    let mut recovered = 0usize;
    let mut err_num = 0.0f64;
    let mut err_den = 0.0f64;
    for (row, tx) in encoded.iter().enumerate() {
        let unique = pilots.iter().filter(|&&p| p == tx.pilot_index).count() == 1;
        let found_at = fact
            .compensation
            .support
            .iter()
            .position(|&p| p == tx.pilot_index);
        if let (true, Some(k)) = (unique, found_at) {
            recovered += 1;
            let mut num = 0.0;
            let mut den = 0.0;
            for (a, b) in fact
                .compensation
                .x_hat
                .row(k)
                .iter()
                .zip(scene.x.row(row).iter())
            {
                num += (a - b).norm_sqr();
                den += b.norm_sqr();
            }
            err_num += num;
            err_den += den;
        }
    }
    let frame_error = if recovered == 0 {
        if users == 0 {
            0.0
        } else {
            1.0
        }
    } else {
        (err_num / err_den).sqrt()
    };
    Ok(FactorTrialResult {
        recovered,
        users,
        frame_error,
    })
}

/// Run the factorization benchmark over the sweep.
pub fn run_factor_bench(spec: &ExperimentSpec) -> Result<Vec<FactorRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.sweep_values.len());
    for &value in &spec.sweep_values {
        let mut config = spec.base_config.clone();
        apply_axis(&mut config, spec.sweep_axis, value)?;
        config.validate()?;
        let seed = spec.master_seed;
        let noiseless = spec.noiseless;
        let distinct = spec.distinct_pilots;
        let trials: Vec<FactorTrialResult> = run_pool(spec.workers, || {
            (0..spec.trials_per_point as u64)
                .into_par_iter()
                .map(|t| run_factor_trial(&config, seed, t, noiseless, distinct))
                .collect::<Result<Vec<_>>>()
        })??;
        let total_users: usize = trials.iter().map(|t| t.users).sum();
        let total_recovered: usize = trials.iter().map(|t| t.recovered).sum();
        let rate = if total_users == 0 {
            1.0
        } else {
            total_recovered as f64 / total_users as f64
        };
        let err_mean =
            trials.iter().map(|t| t.frame_error).sum::<f64>() / trials.len() as f64;
        rows.push(FactorRow {
            m: config.antenna_count,
            t: config.chunk_length(),
            ka: config.active_users,
            snr_db: if noiseless {
                f64::INFINITY
            } else {
                config.energy_per_bit_db
            },
            support_recovery_rate: rate,
            relative_frame_error: err_mean,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

/// Header of the end-to-end CSV.
pub const PUPE_CSV_HEADER: &str =
    "sweep_value,trials,p_md,p_fa,pupe,p_md_lo,p_md_hi,p_fa_lo,p_fa_hi,avg_sic_rounds,cmul,cadd";
/// Header of the detector-benchmark CSV.
pub const SER_CSV_HEADER: &str = "m,ka,snr_db,detector,trials,ser";
/// Header of the factorization-benchmark CSV.
pub const FACTOR_CSV_HEADER: &str = "m,t,ka,snr_db,support_recovery_rate,relative_frame_error";

impl PupeRow {
    /// Render the row in the frozen column order.
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.sweep_value,
            self.trials,
            self.p_md,
            self.p_fa,
            self.pupe,
            self.p_md_lo,
            self.p_md_hi,
            self.p_fa_lo,
            self.p_fa_hi,
            self.avg_sic_rounds,
            self.cmul,
            self.cadd
        )
    }
}

impl SerRow {
    /// Render the row in the frozen column order.
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.m,
            self.ka,
            self.snr_db,
            detector_name(self.detector),
            self.trials,
            self.ser
        )
    }
}

impl FactorRow {
    /// Render the row in the frozen column order.
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.m, self.t, self.ka, self.snr_db, self.support_recovery_rate,
            self.relative_frame_error
        )
    }
}

fn write_csv(path: &Path, header: &str, lines: &[String]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{header}")?;
    for line in lines {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Run the experiment the spec describes and write its CSV to `path`.
pub fn run_to_csv(spec: &ExperimentSpec, path: &Path) -> Result<()> {
    match spec.mode {
        ExperimentMode::EndToEndPupe => {
            let rows = run_end_to_end(spec)?;
            let lines: Vec<String> = rows.iter().map(PupeRow::to_csv_line).collect();
            write_csv(path, PUPE_CSV_HEADER, &lines)
        }
        ExperimentMode::DetectorSer => {
            let rows = run_detector_bench(spec)?;
            let lines: Vec<String> = rows.iter().map(SerRow::to_csv_line).collect();
            write_csv(path, SER_CSV_HEADER, &lines)
        }
        ExperimentMode::FactorBench => {
            let rows = run_factor_bench(spec)?;
            let lines: Vec<String> = rows.iter().map(FactorRow::to_csv_line).collect();
            write_csv(path, FACTOR_CSV_HEADER, &lines)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FecConfig;

    fn mini_config(energy_per_bit_db: f64, active_users: usize) -> SystemConfig {
        SystemConfig {
            total_channel_uses: 400,
            chunk_count: 4,
            chunk_bits: 2,
            pilot_bits: 7,
            pattern_bits: 8,
            payload_bits: 68,
            message_bits: 2 + 7 + 8 + 68,
            pilot_length: 25,
            antenna_count: 32,
            active_users,
            energy_per_bit_db,
            power_allocation_ratio: 0.2,
            fec: FecConfig::default(),
            ..Default::default()
        }
    }

    fn mini_spec(mode: ExperimentMode) -> ExperimentSpec {
        ExperimentSpec {
            mode,
            sweep_axis: SweepAxis::EbN0,
            sweep_values: vec![6.0],
            trials_per_point: 2,
            base_config: mini_config(6.0, 4),
            master_seed: 424242,
            workers: 2,
            detector_snr_db: 10.0,
            noiseless: false,
            distinct_pilots: false,
        }
    }

    #[test]
    fn axis_parsing_and_application() {
        assert_eq!("ebn0".parse::<SweepAxis>().unwrap(), SweepAxis::EbN0);
        assert_eq!("m".parse::<SweepAxis>().unwrap(), SweepAxis::AntennaCount);
        assert_eq!("ka".parse::<SweepAxis>().unwrap(), SweepAxis::ActiveUsers);
        assert_eq!(
            "detector_snr".parse::<SweepAxis>().unwrap(),
            SweepAxis::DetectorSnr
        );
        assert!("banana".parse::<SweepAxis>().is_err());

        let mut cfg = mini_config(0.0, 4);
        apply_axis(&mut cfg, SweepAxis::EbN0, -3.5).unwrap();
        assert_eq!(cfg.energy_per_bit_db, -3.5);
        apply_axis(&mut cfg, SweepAxis::AntennaCount, 64.0).unwrap();
        assert_eq!(cfg.antenna_count, 64);
        apply_axis(&mut cfg, SweepAxis::ActiveUsers, 9.0).unwrap();
        assert_eq!(cfg.active_users, 9);
        assert!(apply_axis(&mut cfg, SweepAxis::AntennaCount, 2.5).is_err());
        assert!(apply_axis(&mut cfg, SweepAxis::ActiveUsers, 0.0).is_err());
    }

    #[test]
    fn spec_validation_rejects_degenerate_requests() {
        let mut spec = mini_spec(ExperimentMode::EndToEndPupe);
        spec.sweep_values.clear();
        assert!(spec.validate().is_err());
        let mut spec = mini_spec(ExperimentMode::EndToEndPupe);
        spec.trials_per_point = 0;
        assert!(spec.validate().is_err());
        let mut spec = mini_spec(ExperimentMode::EndToEndPupe);
        spec.sweep_axis = SweepAxis::DetectorSnr;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn end_to_end_mini_run_is_clean_and_deterministic() {
        let spec = mini_spec(ExperimentMode::EndToEndPupe);
        let rows = run_end_to_end(&spec).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.trials, 2);
        assert_eq!(row.p_md, 0.0, "missed users at 6 dB in the mini system");
        assert_eq!(row.p_fa, 0.0);
        assert!(row.cmul > 0 && row.cadd > 0);
        // User-empty chunks run zero rounds, so the per-chunk mean can dip
        // below 1 while staying positive.
        assert!(row.avg_sic_rounds > 0.0);
        // Same spec, same rows — including counters.
        let rows2 = run_end_to_end(&spec).unwrap();
        assert_eq!(rows, rows2);
        // Worker count must not change results.
        let mut serial = mini_spec(ExperimentMode::EndToEndPupe);
        serial.workers = 1;
        let rows3 = run_end_to_end(&serial).unwrap();
        assert_eq!(rows, rows3);
    }

    #[test]
    fn detector_bench_pairs_and_orders_rows() {
        let mut spec = mini_spec(ExperimentMode::DetectorSer);
        spec.sweep_axis = SweepAxis::DetectorSnr;
        spec.sweep_values = vec![0.0, 10.0];
        spec.trials_per_point = 50;
        spec.base_config.active_users = 4;
        spec.base_config.antenna_count = 16;
        let rows = run_detector_bench(&spec).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].detector, DetectorKind::Amp);
        assert_eq!(rows[1].detector, DetectorKind::Mmse);
        assert_eq!(rows[0].snr_db, 0.0);
        assert_eq!(rows[2].snr_db, 10.0);
        for row in &rows {
            assert!((0.0..=1.0).contains(&row.ser));
            assert_eq!(row.m, 16);
            assert_eq!(row.ka, 4);
        }
        // Higher SNR should not be worse for the same detector.
        assert!(rows[2].ser <= rows[0].ser + 1e-12);
        let again = run_detector_bench(&spec).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn factor_bench_noiseless_recovers_everything() {
        let mut spec = mini_spec(ExperimentMode::FactorBench);
        spec.noiseless = true;
        spec.distinct_pilots = true;
        spec.trials_per_point = 3;
        spec.base_config.active_users = 5;
        let rows = run_factor_bench(&spec).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.m, 32);
        assert_eq!(row.t, 100);
        assert_eq!(row.support_recovery_rate, 1.0);
        assert!(
            row.relative_frame_error < 1e-3,
            "frame error {:.3e}",
            row.relative_frame_error
        );
        assert!(row.snr_db.is_infinite());
    }

    #[test]
    fn factor_bench_collisions_count_as_unrecovered() {
        // Five users over a four-column pilot codebook: collisions are
        // unavoidable, and colliding users must not be counted recovered.
        let mut spec = mini_spec(ExperimentMode::FactorBench);
        spec.noiseless = true;
        spec.trials_per_point = 2;
        spec.base_config.pilot_bits = 2;
        spec.base_config.message_bits = 2 + 2 + 8 + 68;
        spec.base_config.active_users = 5;
        spec.base_config.algo.pilot_mode = crate::config::PilotMode::Gaussian;
        let rows = run_factor_bench(&spec).unwrap();
        assert!(rows[0].support_recovery_rate < 1.0);
        // And requesting distinct pilots in an over-subscribed codebook must
        // fail loudly instead of looping.
        spec.distinct_pilots = true;
        assert!(run_factor_bench(&spec).is_err());
    }

    #[test]
    fn csv_files_are_schema_stable_and_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let spec = mini_spec(ExperimentMode::EndToEndPupe);
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        run_to_csv(&spec, &p1).unwrap();
        run_to_csv(&spec, &p2).unwrap();
        let c1 = std::fs::read_to_string(&p1).unwrap();
        let c2 = std::fs::read_to_string(&p2).unwrap();
        assert_eq!(c1, c2, "repeated runs must be byte-identical");
        assert!(c1.starts_with(PUPE_CSV_HEADER));
        assert_eq!(c1.lines().count(), 2);

        let mut ser_spec = mini_spec(ExperimentMode::DetectorSer);
        ser_spec.sweep_axis = SweepAxis::DetectorSnr;
        ser_spec.sweep_values = vec![5.0];
        ser_spec.trials_per_point = 10;
        let p3 = dir.path().join("ser.csv");
        run_to_csv(&ser_spec, &p3).unwrap();
        let c3 = std::fs::read_to_string(&p3).unwrap();
        assert!(c3.starts_with(SER_CSV_HEADER));
        assert_eq!(c3.lines().count(), 3);

        let mut fb = mini_spec(ExperimentMode::FactorBench);
        fb.noiseless = true;
        fb.trials_per_point = 1;
        let p4 = dir.path().join("factor.csv");
        run_to_csv(&fb, &p4).unwrap();
        let c4 = std::fs::read_to_string(&p4).unwrap();
        assert!(c4.starts_with(FACTOR_CSV_HEADER));
    }
}
