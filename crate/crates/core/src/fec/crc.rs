//! Cyclic redundancy check used to select the polar list-decoder path.
//!
//! Bits are processed MSB-first through a shift register; the checksum is
//! the remainder of `data(x)·x^r mod g(x)` for an `r`-bit generator `g`.

use crate::bits::BitVec;
use crate::error::Error;
use crate::Result;

/// A CRC defined by its generator polynomial (unpacked bits, highest power
/// first, leading and trailing coefficient 1).
#[derive(Debug, Clone)]
pub struct Crc {
    taps: Vec<u8>,
    width: usize,
}

impl Crc {
    /// Build from the full polynomial coefficient vector (length r+1).
    pub fn new(polynomial: &[u8]) -> Result<Self> {
        if polynomial.len() < 2 {
            return Err(Error::config("CRC polynomial needs degree at least 1"));
        }
        if polynomial.first() != Some(&1) || polynomial.last() != Some(&1) {
            return Err(Error::config(
                "CRC polynomial must have leading and trailing coefficient 1",
            ));
        }
        if polynomial.iter().any(|&b| b > 1) {
            return Err(Error::config("CRC polynomial must be a bit vector"));
        }
        Ok(Crc {
            taps: polynomial[1..].to_vec(),
            width: polynomial.len() - 1,
        })
    }

    /// Checksum length in bits.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Remainder of `data(x)·x^width mod g(x)`, MSB first.
    pub fn checksum(&self, data: &[u8]) -> BitVec {
        let mut reg = vec![0u8; self.width];
        for &bit in data {
            debug_assert!(bit <= 1, "checksum takes single bits");
            let feedback = reg[0] ^ bit;
            reg.rotate_left(1);
            reg[self.width - 1] = 0;
            if feedback == 1 {
                for (r, &t) in reg.iter_mut().zip(self.taps.iter()) {
                    *r ^= t;
                }
            }
        }
        reg
    }

    /// `data` followed by its checksum.
    pub fn append(&self, data: &[u8]) -> BitVec {
        let mut out = data.to_vec();
        out.extend_from_slice(&self.checksum(data));
        out
    }

    /// Check a message whose last `width` bits are the checksum.
    pub fn verify(&self, data_with_crc: &[u8]) -> bool {
        if data_with_crc.len() < self.width {
            return false;
        }
        let split = data_with_crc.len() - self.width;
        self.checksum(&data_with_crc[..split]) == data_with_crc[split..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn reference_crc() -> Crc {
        // x^14 + x^10 + x^9 + x^7 + x^6 + x^5 + x + 1
        Crc::new(&[1, 0, 0, 0, 1, 1, 0, 1, 1, 1, 0, 0, 0, 1, 1]).unwrap()
    }

    /// Independent oracle: schoolbook polynomial long division over GF(2).
    fn long_division_remainder(data: &[u8], poly: &[u8]) -> BitVec {
        let r = poly.len() - 1;
        let mut work = data.to_vec();
        work.extend(std::iter::repeat(0).take(r));
        for i in 0..data.len() {
            if work[i] == 1 {
                for (j, &p) in poly.iter().enumerate() {
                    work[i + j] ^= p;
                }
            }
        }
        work[data.len()..].to_vec()
    }

    #[test]
    fn matches_long_division_oracle_on_random_messages() {
        let crc = reference_crc();
        let poly = [1, 0, 0, 0, 1, 1, 0, 1, 1, 1, 0, 0, 0, 1, 1];
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for len in [1usize, 5, 14, 15, 68, 200] {
            for _ in 0..50 {
                let data: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2u8)).collect();
                assert_eq!(crc.checksum(&data), long_division_remainder(&data, &poly));
            }
        }
    }

    #[test]
    fn frozen_fixture_unit_payload() {
        // 68-bit payload 0…01: remainder of x^14 mod g equals the generator
        // without its leading term, 0x06E3.
        let crc = reference_crc();
        let mut data = vec![0u8; 68];
        data[67] = 1;
        let cs = crc.checksum(&data);
        let as_num = cs.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        assert_eq!(as_num, 0x06E3);
    }

    #[test]
    fn zero_payload_has_zero_checksum() {
        let crc = reference_crc();
        assert_eq!(crc.checksum(&vec![0u8; 68]), vec![0u8; 14]);
    }

    #[test]
    fn append_then_verify_round_trips() {
        let crc = reference_crc();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let data: Vec<u8> = (0..68).map(|_| rng.gen_range(0..2u8)).collect();
            assert!(crc.verify(&crc.append(&data)));
        }
    }

    #[test]
    fn every_single_bit_error_is_detected() {
        let crc = reference_crc();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let data: Vec<u8> = (0..68).map(|_| rng.gen_range(0..2u8)).collect();
        let coded = crc.append(&data);
        for i in 0..coded.len() {
            let mut bad = coded.clone();
            bad[i] ^= 1;
            assert!(!crc.verify(&bad), "flip at {i} undetected");
        }
    }

    #[test]
    fn rejects_malformed_polynomials() {
        assert!(Crc::new(&[1]).is_err());
        assert!(Crc::new(&[0, 1, 1]).is_err());
        assert!(Crc::new(&[1, 1, 0]).is_err());
        assert!(Crc::new(&[1, 2, 1]).is_err());
    }
}
