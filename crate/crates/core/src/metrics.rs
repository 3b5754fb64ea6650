//! Error metrics for unsourced random access: per-user misdetection and
//! false-alarm rates, their sum, and confidence intervals for Monte-Carlo
//! estimates.
//!
//! Decoded and transmitted messages are compared as *sets* of bit strings —
//! the receiver never learns which user sent which message, so credit is
//! given for recovering the message itself, in any order.

use crate::bits::BitVec;
use crate::error::Error;
use crate::Result;
use std::collections::HashSet;

/// Outcome of comparing a decoded list against the transmitted set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PupeReport {
    /// Transmitted messages not present in the decoded list.
    pub missed: usize,
    /// Decoded messages not present in the transmitted set.
    pub false_alarms: usize,
    /// missed / (number of active users).
    pub p_md: f64,
    /// false_alarms / max(1, decoded list size).
    pub p_fa: f64,
    /// p_md + p_fa.
    pub pupe: f64,
    /// Size of the decoded list.
    pub list_size: usize,
}

/// Compare transmitted and decoded message sets.
///
/// Every message must be exactly `message_bits` long; duplicates within
/// either list collapse to one set element.
pub fn compute_pupe(
    transmitted: &[BitVec],
    decoded: &[BitVec],
    message_bits: usize,
) -> Result<PupeReport> {
    if transmitted.is_empty() {
        return Err(Error::config("transmitted message set must be non-empty"));
    }
    for (label, list) in [("transmitted", transmitted), ("decoded", decoded)] {
        for m in list {
            if m.len() != message_bits {
                return Err(Error::config(format!(
                    "{label} message has {} bits, expected {message_bits}",
                    m.len()
                )));
            }
            if m.iter().any(|&b| b > 1) {
                return Err(Error::config(format!(
                    "{label} message contains a non-binary symbol"
                )));
            }
        }
    }
    let tx: HashSet<&BitVec> = transmitted.iter().collect();
    let rx: HashSet<&BitVec> = decoded.iter().collect();
    let missed = tx.difference(&rx).count();
    let false_alarms = rx.difference(&tx).count();
    let p_md = missed as f64 / tx.len() as f64;
    let p_fa = false_alarms as f64 / rx.len().max(1) as f64;
    Ok(PupeReport {
        missed,
        false_alarms,
        p_md,
        p_fa,
        pupe: p_md + p_fa,
        list_size: rx.len(),
    })
}

/// Wilson score interval for a binomial proportion at the given normal
/// quantile `z` (use 1.96 for 95% confidence).
///
/// Returns `(lo, hi)`; degenerates to `(0, 0)`..`(1, 1)` gracefully at the
/// boundaries and to `(0, 1)` when there are no trials.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}
