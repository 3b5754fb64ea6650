//! System and algorithm configuration, the energy budget, and JSON loading.
//!
//! The config file is a flat JSON object: `SystemConfig` fields plus the
//! flattened fields of [`FecConfig`] and [`AlgoConfig`] are all top-level
//! keys (snake_case). Every field has a default matching the reference
//! parameter set, so a config file only needs the keys it overrides.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// How the pilot codebook is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotMode {
    /// Distinct seeded rows of the 2^B1-point unitary DFT matrix
    /// (enables FFT-accelerated correlation in the ambiguity search).
    SubsampledDft,
    /// I.i.d. circular Gaussian entries, columns renormalized.
    Gaussian,
}

/// Prior over the per-slot state set {0} ∪ 𝒬 used by the detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// All Q+1 states equally weighted (the APP weight rule as written).
    UniformStates,
    /// Zero state weighted (1−λ), each symbol λ/Q, with λ = Ns/Tc
    /// (the true marginal activity of a slot).
    SparsityWeighted,
}

/// FEC parameters: CRC-aided polar code for the payload segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FecConfig {
    /// Codeword length N (power of two).
    pub codeword_bits: usize,
    /// CRC length in bits.
    pub crc_bits: usize,
    /// CRC generator polynomial, MSB (x^crc_bits) first, as unpacked bits.
    /// Default: x^14+x^10+x^9+x^7+x^6+x^5+x+1.
    pub crc_polynomial: Vec<u8>,
    /// Number of list-decoding paths.
    pub list_size: usize,
    /// Design SNR (dB) for the Gaussian-approximation frozen-set
    /// construction.
    pub design_snr_db: f64,
}

impl Default for FecConfig {
    fn default() -> Self {
        FecConfig {
            codeword_bits: 128,
            crc_bits: 14,
            crc_polynomial: vec![1, 0, 0, 0, 1, 1, 0, 1, 1, 1, 0, 0, 0, 1, 1],
            list_size: 8,
            design_snr_db: 2.0,
        }
    }
}

/// Receiver algorithm knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgoConfig {
    /// Ridge regularizer on the left factor U in the alternating
    /// minimization (small and positive).
    pub reg_u: f64,
    /// Ridge regularizer on the right factor V.
    pub reg_v: f64,
    /// Alternating-minimization iteration cap.
    pub alt_min_max_iters: usize,
    /// Stop when the relative change of ‖Y−UV‖_F drops below this.
    pub alt_min_tol: f64,
    /// AMP iterations per slot.
    pub amp_max_iters: usize,
    /// Prior over the slot state set.
    pub amp_prior_mode: PriorMode,
    /// Damping on the AMP mean update: 0 = pure update (default),
    /// d ∈ (0,1] keeps d of the previous estimate.
    pub amp_damping: f64,
    /// Maximum number of interference-cancellation rounds (subtractions);
    /// 0 means a single decoding pass.
    pub sic_max_rounds: usize,
    /// Probability floor inside log-domain pattern scoring.
    pub pattern_prob_floor: f64,
    /// Master seed for codebooks and all simulation substreams.
    pub seed: u64,
    /// Pilot codebook generation mode.
    pub pilot_mode: PilotMode,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            reg_u: 1e-3,
            reg_v: 1e-3,
            alt_min_max_iters: 100,
            alt_min_tol: 1e-5,
            amp_max_iters: 30,
            amp_prior_mode: PriorMode::UniformStates,
            amp_damping: 0.0,
            sic_max_rounds: 4,
            pattern_prob_floor: 1e-30,
            seed: 0,
            pilot_mode: PilotMode::SubsampledDft,
        }
    }
}

/// All system constants for one simulation setup.
///
/// Defaults are the reference parameter set: L=3200 channel uses split into
/// J=16 chunks of T=200 (Tp=50 pilot + Tc=150 data slots), B=100 message
/// bits split 4+14+14+68, M=50 antennas, QPSK, α=0.2 power on the pilot.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Total channel uses L.
    pub total_channel_uses: usize,
    /// Number of chunks J (must equal 2^chunk_bits).
    pub chunk_count: usize,
    /// Pilot sub-frame length Tp.
    pub pilot_length: usize,
    /// Message length B in bits.
    pub message_bits: usize,
    /// Bits selecting the chunk (Bchunk).
    pub chunk_bits: usize,
    /// Bits carried by the pilot index (B1).
    pub pilot_bits: usize,
    /// Bits carried by the on-off pattern index (B2).
    pub pattern_bits: usize,
    /// Polar-coded payload bits (B3).
    pub payload_bits: usize,
    /// Receive antennas M.
    pub antenna_count: usize,
    /// Number of active users Ka.
    pub active_users: usize,
    /// Energy per bit over noise density, dB.
    pub energy_per_bit_db: f64,
    /// Fraction of the frame energy allocated to the pilot, in (0,1).
    pub power_allocation_ratio: f64,
    /// Modulation order Q (4 = QPSK, the only supported order).
    pub modulation_order: usize,
    #[serde(flatten)]
    pub fec: FecConfig,
    #[serde(flatten)]
    pub algo: AlgoConfig,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            total_channel_uses: 3200,
            chunk_count: 16,
            pilot_length: 50,
            message_bits: 100,
            chunk_bits: 4,
            pilot_bits: 14,
            pattern_bits: 14,
            payload_bits: 68,
            antenna_count: 50,
            active_users: 150,
            energy_per_bit_db: -6.0,
            power_allocation_ratio: 0.2,
            modulation_order: 4,
            fec: FecConfig::default(),
            algo: AlgoConfig::default(),
        }
    }
}

impl SystemConfig {
    /// Chunk length T = L/J.
    pub fn chunk_length(&self) -> usize {
        self.total_channel_uses / self.chunk_count
    }

    /// Data sub-frame length Tc = T − Tp.
    pub fn data_length(&self) -> usize {
        self.chunk_length() - self.pilot_length
    }

    /// Coded bits per modulated symbol (2 for QPSK).
    pub fn bits_per_symbol(&self) -> usize {
        (self.modulation_order as f64).log2() as usize
    }

    /// Modulated payload symbols per frame: Ns = N_fec / log2(Q).
    pub fn symbols_per_frame(&self) -> usize {
        self.fec.codeword_bits / self.bits_per_symbol()
    }

    /// Validate every structural invariant; call once after loading.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.chunk_count == 0 || self.total_channel_uses == 0 {
            return fail("chunk_count and total_channel_uses must be positive".into());
        }
        if self.total_channel_uses % self.chunk_count != 0 {
            return fail(format!(
                "total_channel_uses {} not divisible by chunk_count {}",
                self.total_channel_uses, self.chunk_count
            ));
        }
        if self.chunk_count != 1usize << self.chunk_bits {
            return fail(format!(
                "chunk_count {} must equal 2^chunk_bits = {}",
                self.chunk_count,
                1usize << self.chunk_bits
            ));
        }
        if self.pilot_length == 0 || self.pilot_length >= self.chunk_length() {
            return fail(format!(
                "pilot_length {} must lie in (0, chunk_length {})",
                self.pilot_length,
                self.chunk_length()
            ));
        }
        let bit_sum = self.chunk_bits + self.pilot_bits + self.pattern_bits + self.payload_bits;
        if bit_sum != self.message_bits {
            return fail(format!(
                "bit split {}+{}+{}+{} = {} must equal message_bits {}",
                self.chunk_bits,
                self.pilot_bits,
                self.pattern_bits,
                self.payload_bits,
                bit_sum,
                self.message_bits
            ));
        }
        if self.modulation_order != 4 {
            return fail(format!(
                "modulation_order {} unsupported (QPSK only)",
                self.modulation_order
            ));
        }
        if self.antenna_count == 0 || self.active_users == 0 {
            return fail("antenna_count and active_users must be positive".into());
        }
        if !(self.power_allocation_ratio > 0.0 && self.power_allocation_ratio < 1.0) {
            return fail(format!(
                "power_allocation_ratio {} must lie in (0,1)",
                self.power_allocation_ratio
            ));
        }
        if !self.fec.codeword_bits.is_power_of_two() {
            return fail(format!(
                "codeword_bits {} must be a power of two",
                self.fec.codeword_bits
            ));
        }
        if self.payload_bits + self.fec.crc_bits > self.fec.codeword_bits {
            return fail(format!(
                "payload_bits {} + crc_bits {} exceed codeword_bits {}",
                self.payload_bits, self.fec.crc_bits, self.fec.codeword_bits
            ));
        }
        if self.fec.crc_polynomial.len() != self.fec.crc_bits + 1 {
            return fail(format!(
                "crc_polynomial must have crc_bits+1 = {} coefficients, got {}",
                self.fec.crc_bits + 1,
                self.fec.crc_polynomial.len()
            ));
        }
        if self.fec.crc_polynomial.first() != Some(&1) || self.fec.crc_polynomial.last() != Some(&1)
        {
            return fail("crc_polynomial must have leading and trailing coefficient 1".into());
        }
        if self.fec.list_size == 0 {
            return fail("list_size must be positive".into());
        }
        if self.symbols_per_frame() > self.data_length() {
            return fail(format!(
                "symbols_per_frame {} exceeds data_length {}",
                self.symbols_per_frame(),
                self.data_length()
            ));
        }
        if self.symbols_per_frame() == self.data_length() && self.pattern_bits > 0 {
            return fail("all-on pattern admits only one column; requires pattern_bits = 0".into());
        }
        if !(self.algo.reg_u > 0.0 && self.algo.reg_u < 1.0)
            || !(self.algo.reg_v > 0.0 && self.algo.reg_v < 1.0)
        {
            return fail("regularizers must lie in (0,1)".into());
        }
        if !(0.0..=1.0).contains(&self.algo.amp_damping) {
            return fail(format!(
                "amp_damping {} must lie in [0,1]",
                self.algo.amp_damping
            ));
        }
        if self.algo.pattern_prob_floor <= 0.0 {
            return fail("pattern_prob_floor must be positive".into());
        }
        Ok(())
    }

    /// Load from a flat JSON file and validate.
    ///
    /// Unknown keys are rejected with a list of valid ones (serde's
    /// `deny_unknown_fields` cannot be combined with the flattened layout,
    /// so the check is explicit).
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Parse from a flat JSON string and validate.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::config("config file must contain a JSON object"))?;
        let known: std::collections::BTreeSet<String> =
            match serde_json::to_value(SystemConfig::default())? {
                serde_json::Value::Object(m) => m.keys().cloned().collect(),
                _ => unreachable!("config serializes to an object"),
            };
        for key in obj.keys() {
            if !known.contains(key) {
                return Err(Error::Config(format!(
                    "unknown config key '{key}' (valid keys: {})",
                    known.iter().cloned().collect::<Vec<_>>().join(", ")
                )));
            }
        }
        let cfg: SystemConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Energies derived from the configuration with σ² normalized to 1.
///
/// `pilot_energy + data_energy = frame_energy` holds exactly by
/// construction (`data_energy` is defined as the difference), so the frame
/// energy budget is preserved to the last bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBudget {
    /// Total transmitted energy per user frame, P = B·σ²·10^(EbN0/10).
    pub frame_energy: f64,
    /// Noise variance per complex sample (normalization choice: 1).
    pub sigma2: f64,
    /// Squared norm of each pilot codeword, α·P.
    pub pilot_energy: f64,
    /// Total data sub-frame energy, (1−α)·P.
    pub data_energy: f64,
    /// Energy of each modulated symbol, (1−α)·P / Ns.
    pub per_symbol_energy: f64,
}

/// Compute the energy budget for a config (σ² fixed to 1).
pub fn derive_energy_budget(config: &SystemConfig) -> EnergyBudget {
    let sigma2 = 1.0;
    let p = config.message_bits as f64 * sigma2 * 10f64.powf(config.energy_per_bit_db / 10.0);
    let pilot = config.power_allocation_ratio * p;
    let data = p - pilot;
    EnergyBudget {
        frame_energy: p,
        sigma2,
        pilot_energy: pilot,
        data_energy: data,
        per_symbol_energy: data / config.symbols_per_frame() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_validate() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn derived_lengths_match_reference_setup() {
        let cfg = SystemConfig::default();
        assert_eq!(cfg.chunk_length(), 200);
        assert_eq!(cfg.data_length(), 150);
        assert_eq!(cfg.symbols_per_frame(), 64);
        assert_eq!(cfg.bits_per_symbol(), 2);
    }

    #[test]
    fn budget_at_zero_db_is_message_bits() {
        let cfg = SystemConfig {
            energy_per_bit_db: 0.0,
            ..SystemConfig::default()
        };
        let b = derive_energy_budget(&cfg);
        assert_relative_eq!(b.frame_energy, 100.0);
        assert_relative_eq!(b.pilot_energy, 20.0);
        assert_relative_eq!(b.per_symbol_energy, 1.25);
    }

    #[test]
    fn budget_at_minus_six_db() {
        let cfg = SystemConfig::default(); // -6 dB default
        let b = derive_energy_budget(&cfg);
        assert_relative_eq!(b.frame_energy, 25.118864315095795, max_relative = 1e-12);
    }

    #[test]
    fn energy_accounting_is_exact() {
        for db in [-12.0, -6.0, -3.3, 0.0, 2.5] {
            let cfg = SystemConfig {
                energy_per_bit_db: db,
                ..SystemConfig::default()
            };
            let b = derive_energy_budget(&cfg);
            // bitwise-exact by construction
            assert_eq!(b.pilot_energy + b.data_energy, b.frame_energy);
            // per-symbol rounding stays within float tolerance
            assert_relative_eq!(
                b.per_symbol_energy * 64.0,
                b.data_energy,
                max_relative = 1e-15
            );
        }
    }

    #[test]
    fn validation_rejects_bad_bit_split() {
        let cfg = SystemConfig {
            payload_bits: 67,
            ..SystemConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn validation_rejects_chunk_count_mismatch() {
        let cfg = SystemConfig {
            chunk_count: 8,
            total_channel_uses: 1600,
            ..SystemConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn flat_json_round_trip() {
        let cfg = SystemConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        // flattened keys live at the top level
        assert!(value.get("list_size").is_some());
        assert!(value.get("reg_u").is_some());
        let back: SystemConfig = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.active_users, cfg.active_users);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg =
            SystemConfig::from_json_str(r#"{"active_users": 300, "energy_per_bit_db": -10.0}"#)
                .unwrap();
        assert_eq!(cfg.active_users, 300);
        assert_eq!(cfg.pilot_length, 50);
        assert_eq!(cfg.fec.list_size, 8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = SystemConfig::from_json_str(r#"{"active_userz": 300}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("active_userz"));
    }
}
