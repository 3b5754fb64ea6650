//! Transmit-side message encoding: bit split, FEC, modulation, frame build.
//!
//! A B-bit message is consumed MSB-first in four segments:
//! chunk selector | pilot index | pattern index | polar payload.
//! The frame transmitted inside the selected chunk is the pilot column
//! followed by `Tc` data slots that are zero except at the pattern's
//! on-positions, which carry the QPSK-modulated polar codeword in
//! ascending slot order.

use crate::bits::{bits_to_index, index_to_bits, BitVec};
use crate::codebooks::{build_codebooks, PatternCodebook, PilotCodebook, QpskAlphabet};
use crate::config::{derive_energy_budget, SystemConfig};
use crate::error::Error;
use crate::fec::polar::PolarCode;
use crate::linalg::{CMat, CVec};
use crate::scalar::Real;
use crate::Result;
use rand::Rng;
use std::collections::HashSet;

/// Everything both sides of the link agree on for one trial: codebooks,
/// alphabet, and the polar code.
pub struct Codecs<T: Real> {
    /// Pilot codebook (2^B1 columns of length Tp).
    pub pilots: PilotCodebook<T>,
    /// Pattern codebook (2^B2 weight-Ns patterns over Tc slots).
    pub patterns: PatternCodebook,
    /// QPSK alphabet at the per-symbol energy.
    pub alphabet: QpskAlphabet<T>,
    /// CRC-aided polar code for the payload segment.
    pub code: PolarCode,
}

impl<T: Real> Codecs<T> {
    /// Build the full codec set for one trial, deterministically from the
    /// master seed.
    pub fn build(config: &SystemConfig, master_seed: u64, trial: u64) -> Result<Self> {
        let budget = derive_energy_budget(config);
        let (pilots, patterns) = build_codebooks::<T>(
            config,
            T::from_f64_lossy(budget.pilot_energy),
            master_seed,
            trial,
        )?;
        Ok(Codecs {
            pilots,
            patterns,
            alphabet: QpskAlphabet::new(T::from_f64_lossy(budget.per_symbol_energy)),
            code: PolarCode::from_config(&config.fec, config.payload_bits)?,
        })
    }
}

/// One user's encoded transmission.
#[derive(Debug, Clone)]
pub struct TxMessage<T: Real> {
    /// The original B message bits.
    pub message: BitVec,
    /// Chunk the user transmits in.
    pub chunk_index: usize,
    /// Pilot codebook column.
    pub pilot_index: usize,
    /// Pattern codebook column.
    pub pattern_index: usize,
    /// The transmitted frame: Tp pilot samples then Tc data slots.
    pub frame: CVec<T>,
}

/// Split a message into its four segment indices; the payload is returned
/// as a borrowed bit slice.
pub fn split_message<'m>(
    message: &'m [u8],
    config: &SystemConfig,
) -> Result<(usize, usize, usize, &'m [u8])> {
    if message.len() != config.message_bits {
        return Err(Error::config(format!(
            "message has {} bits, expected {}",
            message.len(),
            config.message_bits
        )));
    }
    let (b0, b1, b2) = (config.chunk_bits, config.pilot_bits, config.pattern_bits);
    let chunk = bits_to_index(&message[..b0])?;
    let pilot = bits_to_index(&message[b0..b0 + b1])?;
    let pattern = bits_to_index(&message[b0 + b1..b0 + b1 + b2])?;
    Ok((chunk, pilot, pattern, &message[b0 + b1 + b2..]))
}

/// Rebuild a message from its decoded segments (the receiver's inverse of
/// [`split_message`]).
pub fn assemble_message(
    chunk_index: usize,
    pilot_index: usize,
    pattern_index: usize,
    payload: &[u8],
    config: &SystemConfig,
) -> Result<BitVec> {
    if payload.len() != config.payload_bits {
        return Err(Error::config(format!(
            "payload has {} bits, expected {}",
            payload.len(),
            config.payload_bits
        )));
    }
    let mut out = index_to_bits(chunk_index, config.chunk_bits)?;
    out.extend(index_to_bits(pilot_index, config.pilot_bits)?);
    out.extend(index_to_bits(pattern_index, config.pattern_bits)?);
    out.extend_from_slice(payload);
    Ok(out)
}

/// Encode one message into its transmitted frame.
pub fn encode_message<T: Real>(
    message: &[u8],
    config: &SystemConfig,
    codecs: &Codecs<T>,
) -> Result<TxMessage<T>> {
    let (chunk_index, pilot_index, pattern_index, payload) = split_message(message, config)?;
    let codeword = codecs.code.encode(payload)?;
    let tp = config.pilot_length;
    let tc = config.data_length();
    let mut frame = CVec::<T>::zeros(tp + tc);
    frame
        .slice_mut(ndarray::s![..tp])
        .assign(&codecs.pilots.column(pilot_index));
    let on = codecs.patterns.on_positions(pattern_index);
    debug_assert_eq!(on.len() * 2, codeword.len());
    for (s, &slot) in on.iter().enumerate() {
        let b0 = codeword[2 * s];
        let b1 = codeword[2 * s + 1];
        frame[tp + slot as usize] = codecs.alphabet.modulate(b0, b1);
    }
    Ok(TxMessage {
        message: message.to_vec(),
        chunk_index,
        pilot_index,
        pattern_index,
        frame,
    })
}

/// The users of one chunk, stacked into a transmit matrix.
#[derive(Debug, Clone)]
pub struct ChunkScene<T: Real> {
    /// Which chunk this is.
    pub chunk_index: usize,
    /// Row k of `x` belongs to `user_ids[k]` in the frame-level list.
    pub user_ids: Vec<usize>,
    /// K × T transmit matrix (rows are user frames).
    pub x: CMat<T>,
    /// Per-row pilot indices (ground truth, for diagnostics).
    pub pilot_indices: Vec<usize>,
    /// Per-row pattern indices (ground truth, for diagnostics).
    pub pattern_indices: Vec<usize>,
}

/// Group encoded messages by chunk. Chunks with no users yield scenes with
/// zero rows.
pub fn build_scenes<T: Real>(
    messages: &[TxMessage<T>],
    config: &SystemConfig,
) -> Vec<ChunkScene<T>> {
    let t = config.chunk_length();
    let mut scenes: Vec<ChunkScene<T>> = (0..config.chunk_count)
        .map(|j| ChunkScene {
            chunk_index: j,
            user_ids: Vec::new(),
            x: CMat::<T>::zeros((0, t)),
            pilot_indices: Vec::new(),
            pattern_indices: Vec::new(),
        })
        .collect();
    for (j, scene) in scenes.iter_mut().enumerate() {
        let members: Vec<usize> = messages
            .iter()
            .enumerate()
            .filter(|(_, m)| m.chunk_index == j)
            .map(|(i, _)| i)
            .collect();
        let mut x = CMat::<T>::zeros((members.len(), t));
        for (row, &uid) in members.iter().enumerate() {
            x.row_mut(row).assign(&messages[uid].frame);
            scene.pilot_indices.push(messages[uid].pilot_index);
            scene.pattern_indices.push(messages[uid].pattern_index);
        }
        scene.user_ids = members;
        scene.x = x;
    }
    scenes
}

/// Draw `count` distinct uniform B-bit messages.
pub fn sample_messages(count: usize, bits: usize, rng: &mut impl Rng) -> Vec<BitVec> {
    let mut seen: HashSet<BitVec> = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let m: BitVec = (0..bits).map(|_| rng.gen_range(0..2u8)).collect();
        if seen.insert(m.clone()) {
            out.push(m);
        }
    }
    out
}

/// Residual energy bookkeeping used in tests: total squared norm of a frame.
pub fn frame_energy<T: Real>(frame: &CVec<T>) -> T {
    frame.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, v| a + v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EnergyBudget;
    use crate::Cplx;
    use approx::assert_relative_eq;
    use proptest::{prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn setup() -> (SystemConfig, EnergyBudget, Codecs<f64>) {
        let config = SystemConfig::default();
        let budget = derive_energy_budget(&config);
        let codecs = Codecs::<f64>::build(&config, 7, 0).unwrap();
        (config, budget, codecs)
    }

    fn random_message(rng: &mut impl Rng, bits: usize) -> BitVec {
        (0..bits).map(|_| rng.gen_range(0..2u8)).collect()
    }

    #[test]
    fn split_reads_segments_msb_first() {
        let config = SystemConfig::default();
        let mut m = vec![0u8; 100];
        // chunk = 0b0011 = 3
        m[2] = 1;
        m[3] = 1;
        // pilot = lowest bit of its 14-bit field
        m[4 + 13] = 1;
        // pattern = highest bit of its field = 2^13
        m[18] = 1;
        let (c, pi, pa, payload) = split_message(&m, &config).unwrap();
        assert_eq!(c, 3);
        assert_eq!(pi, 1);
        assert_eq!(pa, 1 << 13);
        assert_eq!(payload.len(), 68);
    }

    #[test]
    fn frame_carries_exactly_the_budgeted_energy() {
        let (config, budget, codecs) = setup();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..10 {
            let m = random_message(&mut rng, config.message_bits);
            let tx = encode_message(&m, &config, &codecs).unwrap();
            assert_relative_eq!(
                frame_energy(&tx.frame),
                budget.frame_energy,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn frame_layout_matches_pilot_and_pattern() {
        let (config, _, codecs) = setup();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let m = random_message(&mut rng, config.message_bits);
        let tx = encode_message(&m, &config, &codecs).unwrap();
        let tp = config.pilot_length;
        // Pilot segment is the codebook column.
        let col = codecs.pilots.column(tx.pilot_index);
        for r in 0..tp {
            assert_eq!(tx.frame[r], col[r]);
        }
        // Data slots: on-positions carry codeword symbol pairs in ascending
        // order, everything else is zero.
        let (_, _, _, payload) = split_message(&m, &config).unwrap();
        let cw = codecs.code.encode(payload).unwrap();
        let on = codecs.patterns.on_positions(tx.pattern_index);
        let on_set: std::collections::HashSet<usize> =
            on.iter().map(|&p| p as usize).collect();
        for slot in 0..config.data_length() {
            let v = tx.frame[tp + slot];
            if !on_set.contains(&slot) {
                assert_eq!(v, Cplx::new(0.0, 0.0), "off slot {slot} must be silent");
            }
        }
        for (s, &slot) in on.iter().enumerate() {
            let expect = codecs.alphabet.modulate(cw[2 * s], cw[2 * s + 1]);
            assert_eq!(tx.frame[tp + slot as usize], expect);
        }
    }

    #[test]
    fn scenes_partition_users_by_chunk() {
        let (config, _, codecs) = setup();
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let msgs: Vec<TxMessage<f64>> = sample_messages(40, config.message_bits, &mut rng)
            .iter()
            .map(|m| encode_message(m, &config, &codecs).unwrap())
            .collect();
        let scenes = build_scenes(&msgs, &config);
        assert_eq!(scenes.len(), config.chunk_count);
        let total: usize = scenes.iter().map(|s| s.user_ids.len()).sum();
        assert_eq!(total, 40);
        for scene in &scenes {
            assert_eq!(scene.x.nrows(), scene.user_ids.len());
            assert_eq!(scene.x.ncols(), config.chunk_length());
            for (row, &uid) in scene.user_ids.iter().enumerate() {
                assert_eq!(msgs[uid].chunk_index, scene.chunk_index);
                assert_eq!(scene.x.row(row), msgs[uid].frame.view());
            }
        }
    }

    #[test]
    fn sampled_messages_are_distinct() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let msgs = sample_messages(500, 100, &mut rng);
        let set: HashSet<&BitVec> = msgs.iter().collect();
        assert_eq!(set.len(), 500);
    }

    proptest! {
        #[test]
        fn assemble_inverts_split(seed in 0u64..10_000) {
            let config = SystemConfig::default();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let m = random_message(&mut rng, config.message_bits);
            let (c, pi, pa, payload) = split_message(&m, &config).unwrap();
            let back = assemble_message(c, pi, pa, payload, &config).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
