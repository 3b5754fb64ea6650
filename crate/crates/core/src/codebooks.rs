//! Pilot codebook, on-off pattern codebook, and the QPSK alphabet.
//!
//! The pilot codebook carries the first message segment: each user
//! transmits one of `2^B1` length-`Tp` columns. The default construction
//! samples `Tp` distinct rows of the `2^B1`-point DFT matrix, which keeps
//! every column at exactly the pilot energy and lets the receiver correlate
//! against **all** columns with a single inverse FFT. A dense Gaussian
//! codebook is available as an alternative.
//!
//! The pattern codebook carries the third segment: `2^B2` distinct on-off
//! patterns, each activating `Ns` of the `Tc` data slots.

use crate::config::PilotMode;
use crate::counters::OpCounters;
use crate::error::Error;
use crate::linalg::{CMat, CVec};
use crate::rng::substream;
use crate::scalar::Real;
use crate::{Cplx, Result};
use ndarray::ArrayView1;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use std::collections::HashSet;
use std::sync::Arc;

/// Pilot codebook: `rows × count` complex matrix with constant-energy
/// columns, stored implicitly (DFT mode) or densely (Gaussian mode).
pub struct PilotCodebook<T: Real> {
    mode: PilotMode,
    rows: usize,
    count: usize,
    column_energy: T,
    amplitude: T,
    row_selection: Vec<usize>,
    dense: Option<CMat<T>>,
    inverse_fft: Option<Arc<dyn Fft<T>>>,
}

impl<T: Real> std::fmt::Debug for PilotCodebook<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PilotCodebook")
            .field("mode", &self.mode)
            .field("rows", &self.rows)
            .field("count", &self.count)
            .finish()
    }
}

impl<T: Real> PilotCodebook<T> {
    /// Generate a codebook with `count` columns of `rows` samples, each
    /// column carrying exactly `column_energy`.
    pub fn generate(
        mode: PilotMode,
        rows: usize,
        count: usize,
        column_energy: T,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if rows == 0 || count == 0 {
            return Err(Error::config("pilot codebook needs positive dimensions"));
        }
        if column_energy <= T::zero() {
            return Err(Error::config("pilot column energy must be positive"));
        }
        let amplitude = (column_energy / T::from_f64_lossy(rows as f64)).sqrt();
        match mode {
            PilotMode::SubsampledDft => {
                if count < rows {
                    return Err(Error::config(format!(
                        "subsampled-DFT codebook needs at least as many columns \
                         as rows ({count} < {rows})"
                    )));
                }
                let row_selection = rand::seq::index::sample(rng, count, rows).into_vec();
                let inverse_fft = FftPlanner::<T>::new().plan_fft_inverse(count);
                Ok(PilotCodebook {
                    mode,
                    rows,
                    count,
                    column_energy,
                    amplitude,
                    row_selection,
                    dense: None,
                    inverse_fft: Some(inverse_fft),
                })
            }
            PilotMode::Gaussian => {
                let half = T::from_f64_lossy(0.5).sqrt();
                let mut dense = CMat::<T>::from_shape_fn((rows, count), |_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Cplx::new(T::from_f64_lossy(re) * half, T::from_f64_lossy(im) * half)
                });
                // Renormalize every column to the exact pilot energy.
                let target = column_energy.sqrt();
                for mut col in dense.columns_mut() {
                    let norm = col
                        .iter()
                        .map(|z| z.norm_sqr())
                        .fold(T::zero(), |a, v| a + v)
                        .sqrt();
                    if norm <= T::zero() {
                        return Err(Error::internal("drew an all-zero pilot column"));
                    }
                    let scale = target / norm;
                    col.mapv_inplace(|z| z * scale);
                }
                Ok(PilotCodebook {
                    mode,
                    rows,
                    count,
                    column_energy,
                    amplitude,
                    row_selection: Vec::new(),
                    dense: Some(dense),
                    inverse_fft: None,
                })
            }
        }
    }

    /// Number of columns (2^B1).
    pub fn len(&self) -> usize {
        self.count
    }

    /// True when the codebook has no columns (never, post-construction).
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Pilot sequence length Tp.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Squared norm of every column.
    pub fn column_energy(&self) -> T {
        self.column_energy
    }

    /// The codebook mode.
    pub fn mode(&self) -> PilotMode {
        self.mode
    }

    /// One column as a vector.
    pub fn column(&self, index: usize) -> CVec<T> {
        assert!(index < self.count, "column index out of range");
        match self.mode {
            PilotMode::SubsampledDft => {
                let mut col = CVec::<T>::zeros(self.rows);
                let step = T::from_f64_lossy(-2.0) * T::PI() / T::from_f64_lossy(self.count as f64);
                for (r, &sel) in self.row_selection.iter().enumerate() {
                    let phase = step * T::from_f64_lossy(((sel * index) % self.count) as f64);
                    col[r] = Cplx::from_polar(self.amplitude, phase);
                }
                col
            }
            PilotMode::Gaussian => self
                .dense
                .as_ref()
                .expect("gaussian codebook stores a dense matrix")
                .column(index)
                .to_owned(),
        }
    }

    /// The `rows × indices.len()` submatrix of the selected columns.
    pub fn columns(&self, indices: &[usize]) -> CMat<T> {
        let mut m = CMat::<T>::zeros((self.rows, indices.len()));
        for (j, &idx) in indices.iter().enumerate() {
            m.column_mut(j).assign(&self.column(idx));
        }
        m
    }

    /// Correlate one observation against every column: returns `Aᴴ u`
    /// (length `count`). DFT mode uses a single inverse FFT.
    pub fn correlate(&self, u: &ArrayView1<'_, Cplx<T>>, ops: &mut OpCounters) -> CVec<T> {
        assert_eq!(u.len(), self.rows, "observation length must equal Tp");
        match self.mode {
            PilotMode::SubsampledDft => {
                // (Aᴴu)[c] = amp·Σ_r ω^{−sel_r·c}·u_r — an unnormalized
                // inverse DFT of u scattered onto the selected bins.
                let mut buf =
                    vec![Cplx::new(T::zero(), T::zero()); self.count];
                for (r, &sel) in self.row_selection.iter().enumerate() {
                    buf[sel] = u[r];
                }
                self.inverse_fft
                    .as_ref()
                    .expect("dft codebook stores an fft plan")
                    .process(&mut buf);
                ops.add_fft(self.count);
                ops.add_elementwise(self.count, 1, 0);
                let amp = self.amplitude;
                CVec::from_iter(buf.into_iter().map(|z| z * amp))
            }
            PilotMode::Gaussian => {
                let a = self
                    .dense
                    .as_ref()
                    .expect("gaussian codebook stores a dense matrix");
                ops.add_gemm(self.count, self.rows, 1);
                let mut out = CVec::<T>::zeros(self.count);
                for (c, col) in a.columns().into_iter().enumerate() {
                    let mut acc = Cplx::new(T::zero(), T::zero());
                    for (x, y) in col.iter().zip(u.iter()) {
                        acc += x.conj() * *y;
                    }
                    out[c] = acc;
                }
                out
            }
        }
    }

    /// Exact maximum cross-column coherence max_{i≠j} |⟨a_i,a_j⟩| / ‖a‖².
    ///
    /// For the DFT construction the inner product depends only on the index
    /// difference, so one forward FFT of the row-selection indicator covers
    /// all pairs.
    pub fn max_cross_coherence(&self) -> T {
        match self.mode {
            PilotMode::SubsampledDft => {
                let mut buf = vec![Cplx::new(T::zero(), T::zero()); self.count];
                for &sel in &self.row_selection {
                    buf[sel] = Cplx::new(T::one(), T::zero());
                }
                FftPlanner::<T>::new()
                    .plan_fft_forward(self.count)
                    .process(&mut buf);
                let peak = buf
                    .iter()
                    .skip(1)
                    .map(|z| z.norm())
                    .fold(T::zero(), |a, v| a.max(v));
                peak / T::from_f64_lossy(self.rows as f64)
            }
            PilotMode::Gaussian => {
                let a = self
                    .dense
                    .as_ref()
                    .expect("gaussian codebook stores a dense matrix");
                let mut peak = T::zero();
                for i in 0..self.count {
                    let ci = a.column(i);
                    for j in (i + 1)..self.count {
                        let cj = a.column(j);
                        let mut acc = Cplx::new(T::zero(), T::zero());
                        for (x, y) in ci.iter().zip(cj.iter()) {
                            acc += x.conj() * *y;
                        }
                        peak = peak.max(acc.norm());
                    }
                }
                peak / self.column_energy
            }
        }
    }
}

/// On-off pattern codebook: `count` distinct patterns, each switching on
/// `weight` of `slot_count` data slots.
#[derive(Debug, Clone)]
pub struct PatternCodebook {
    slot_count: usize,
    weight: usize,
    on_positions: Vec<Vec<u16>>,
}

impl PatternCodebook {
    /// Draw `count` distinct weight-`weight` patterns uniformly (rejection
    /// sampling on collisions, which are vanishingly rare at design sizes).
    pub fn generate(
        slot_count: usize,
        weight: usize,
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if weight == 0 || weight > slot_count {
            return Err(Error::config(format!(
                "pattern weight {weight} must lie in [1, slot_count {slot_count}]"
            )));
        }
        if slot_count > u16::MAX as usize {
            return Err(Error::config("slot_count exceeds the u16 position range"));
        }
        let mut seen: HashSet<Vec<u16>> = HashSet::with_capacity(count);
        let mut on_positions = Vec::with_capacity(count);
        let mut attempts = 0usize;
        let max_attempts = count.saturating_mul(100).max(1000);
        while on_positions.len() < count {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::config(format!(
                    "could not draw {count} distinct weight-{weight} patterns \
                     over {slot_count} slots"
                )));
            }
            let mut pat: Vec<u16> = rand::seq::index::sample(rng, slot_count, weight)
                .into_iter()
                .map(|p| p as u16)
                .collect();
            pat.sort_unstable();
            if seen.insert(pat.clone()) {
                on_positions.push(pat);
            }
        }
        Ok(PatternCodebook {
            slot_count,
            weight,
            on_positions,
        })
    }

    /// Number of patterns (2^B2).
    pub fn len(&self) -> usize {
        self.on_positions.len()
    }

    /// True when the codebook holds no patterns.
    pub fn is_empty(&self) -> bool {
        self.on_positions.is_empty()
    }

    /// Number of data slots Tc.
    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    /// On-slots per pattern Ns.
    pub fn weight(&self) -> usize {
        self.weight
    }

    /// Sorted on-slot positions of one pattern.
    pub fn on_positions(&self, index: usize) -> &[u16] {
        &self.on_positions[index]
    }

    /// Dense on/off indicator of one pattern.
    pub fn indicator(&self, index: usize) -> Vec<bool> {
        let mut v = vec![false; self.slot_count];
        for &p in self.on_positions(index) {
            v[p as usize] = true;
        }
        v
    }
}

/// Gray-mapped QPSK alphabet at a configurable symbol energy.
///
/// Bit pair (b0, b1) maps to `sqrt(Es/2)·((1−2·b0) + i·(1−2·b1))`: b0 picks
/// the real sign, b1 the imaginary sign, so adjacent constellation points
/// differ in exactly one bit.
#[derive(Debug, Clone, Copy)]
pub struct QpskAlphabet<T: Real> {
    symbol_energy: T,
    points: [Cplx<T>; 4],
}

impl<T: Real> QpskAlphabet<T> {
    /// Build the alphabet with every point at squared magnitude
    /// `symbol_energy`.
    pub fn new(symbol_energy: T) -> Self {
        let half = (symbol_energy / (T::one() + T::one())).sqrt();
        let point = |b0: u8, b1: u8| {
            Cplx::new(
                half * T::from_f64_lossy(1.0 - 2.0 * b0 as f64),
                half * T::from_f64_lossy(1.0 - 2.0 * b1 as f64),
            )
        };
        QpskAlphabet {
            symbol_energy,
            points: [point(0, 0), point(0, 1), point(1, 0), point(1, 1)],
        }
    }

    /// Squared magnitude of every constellation point.
    pub fn symbol_energy(&self) -> T {
        self.symbol_energy
    }

    /// The four points, indexed by `b0·2 + b1`.
    pub fn points(&self) -> &[Cplx<T>; 4] {
        &self.points
    }

    /// Map a bit pair to its point.
    pub fn modulate(&self, b0: u8, b1: u8) -> Cplx<T> {
        debug_assert!(b0 <= 1 && b1 <= 1, "modulate takes single bits");
        self.points[(b0 as usize) * 2 + (b1 as usize)]
    }

    /// The bit pair of point `index`.
    pub fn bits_of(&self, index: usize) -> (u8, u8) {
        assert!(index < 4);
        ((index as u8) >> 1, (index as u8) & 1)
    }
}

/// Deterministically generate the pilot and pattern codebooks for one
/// simulation trial from the master seed.
pub fn build_codebooks<T: Real>(
    config: &crate::config::SystemConfig,
    pilot_energy: T,
    master_seed: u64,
    trial: u64,
) -> Result<(PilotCodebook<T>, PatternCodebook)> {
    let mut rng = substream(master_seed, trial, crate::rng::Purpose::Scene, 0);
    let pilots = PilotCodebook::generate(
        config.algo.pilot_mode,
        config.pilot_length,
        1usize << config.pilot_bits,
        pilot_energy,
        &mut rng,
    )?;
    let patterns = PatternCodebook::generate(
        config.data_length(),
        config.symbols_per_frame(),
        1usize << config.pattern_bits,
        &mut rng,
    )?;
    Ok((pilots, patterns))
}
