//! Complexity accounting: complex multiply/add counters per receiver stage.
//!
//! Counts are analytic — each numeric kernel adds the operation count its
//! dimensions imply — so they measure algorithmic cost independent of
//! compiler vectorization. Counters merge associatively, which keeps
//! parallel aggregation order-independent.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign};

/// Complex-operation counts for one stage or one run.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    /// Complex multiplications.
    pub complex_multiplies: u64,
    /// Complex additions/subtractions.
    pub complex_adds: u64,
}

impl OpCounters {
    /// Account a dense m×k by k×n complex matrix product.
    pub fn add_gemm(&mut self, m: usize, k: usize, n: usize) {
        let mk = (m * n) as u64 * k as u64;
        self.complex_multiplies += mk;
        self.complex_adds += mk.saturating_sub((m * n) as u64);
    }

    /// Account a triangular factorization/solve of an n×n system with
    /// `rhs` right-hand sides (Cholesky-order cost: n³/3 + n²·rhs).
    pub fn add_solve(&mut self, n: usize, rhs: usize) {
        let n = n as u64;
        let factor = n * n * n / 3 + n * n;
        let sub = n * n * rhs as u64;
        self.complex_multiplies += factor + sub;
        self.complex_adds += factor + sub;
    }

    /// Account an FFT of the given size (radix-2-equivalent counts,
    /// ⌈log₂ size⌉ stages).
    pub fn add_fft(&mut self, size: usize) {
        if size < 2 {
            return;
        }
        let n = size as u64;
        let stages = (usize::BITS - (size - 1).leading_zeros()) as u64;
        self.complex_multiplies += n / 2 * stages;
        self.complex_adds += n * stages;
    }

    /// Account elementwise complex work (e.g. posterior updates): `n` units
    /// each costing `mul` multiplies and `add` additions.
    pub fn add_elementwise(&mut self, n: usize, mul: usize, add: usize) {
        self.complex_multiplies += (n * mul) as u64;
        self.complex_adds += (n * add) as u64;
    }
}

impl Add for OpCounters {
    type Output = OpCounters;
    fn add(self, rhs: OpCounters) -> OpCounters {
        OpCounters {
            complex_multiplies: self.complex_multiplies + rhs.complex_multiplies,
            complex_adds: self.complex_adds + rhs.complex_adds,
        }
    }
}

impl AddAssign for OpCounters {
    fn add_assign(&mut self, rhs: OpCounters) {
        self.complex_multiplies += rhs.complex_multiplies;
        self.complex_adds += rhs.complex_adds;
    }
}

/// Per-stage complexity breakdown for one decode (or one aggregated run).
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityCounters {
    /// Activity estimation + alternating minimization + ambiguity search.
    pub factorization: OpCounters,
    /// AMP / MMSE slot detection, pattern retrieval, LLR extraction.
    pub detection: OpCounters,
    /// Polar list decoding (path-metric arithmetic, counted as adds).
    pub fec: OpCounters,
    /// Channel refinement and subtraction.
    pub sic: OpCounters,
}

impl ComplexityCounters {
    /// Sum over all stages.
    pub fn total(&self) -> OpCounters {
        self.factorization + self.detection + self.fec + self.sic
    }
}

impl Add for ComplexityCounters {
    type Output = ComplexityCounters;
    fn add(self, rhs: ComplexityCounters) -> ComplexityCounters {
        ComplexityCounters {
            factorization: self.factorization + rhs.factorization,
            detection: self.detection + rhs.detection,
            fec: self.fec + rhs.fec,
            sic: self.sic + rhs.sic,
        }
    }
}

impl AddAssign for ComplexityCounters {
    fn add_assign(&mut self, rhs: ComplexityCounters) {
        *self = *self + rhs;
    }
}
