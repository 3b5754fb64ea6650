//! Bit-vector helpers.
//!
//! Messages and code bits are plain `Vec<u8>` with one bit per element
//! (values 0 or 1), most significant bit first wherever a bit string maps
//! to an integer. Keeping bits unpacked makes the FEC and segmentation code
//! straightforward at the message sizes involved (~100 bits).

use crate::error::Error;
use crate::Result;

/// One message or code word as unpacked bits (each element 0 or 1).
pub type BitVec = Vec<u8>;

/// Interpret `bits` (MSB first) as an unsigned integer.
///
/// Errors if the value would not fit in `usize` (more than 63 bits set
/// region) — callers only convert short segments (chunk/pilot/pattern
/// indices), so this is an internal misuse guard.
pub fn bits_to_index(bits: &[u8]) -> Result<usize> {
    if bits.len() >= usize::BITS as usize {
        return Err(Error::internal(format!(
            "bit segment of length {} too long for an index",
            bits.len()
        )));
    }
    let mut v = 0usize;
    for &b in bits {
        debug_assert!(b <= 1, "bit vectors must contain only 0/1");
        v = (v << 1) | b as usize;
    }
    Ok(v)
}

/// Write `value` as `width` bits, MSB first.
///
/// Errors if `value` does not fit in `width` bits.
pub fn index_to_bits(value: usize, width: usize) -> Result<BitVec> {
    if width < usize::BITS as usize && value >> width != 0 {
        return Err(Error::internal(format!(
            "value {value} does not fit in {width} bits"
        )));
    }
    Ok((0..width)
        .rev()
        .map(|i| ((value >> i) & 1) as u8)
        .collect())
}

/// Check that every element is a valid bit (0 or 1).
pub fn is_bit_string(bits: &[u8]) -> bool {
    bits.iter().all(|&b| b <= 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn msb_first_round_trip() {
        let bits = vec![1, 0, 1, 1];
        assert_eq!(bits_to_index(&bits).unwrap(), 0b1011);
        assert_eq!(index_to_bits(0b1011, 4).unwrap(), bits);
    }

    #[test]
    fn zero_width_is_empty() {
        assert_eq!(index_to_bits(0, 0).unwrap(), Vec::<u8>::new());
        assert_eq!(bits_to_index(&[]).unwrap(), 0);
    }

    #[test]
    fn overflow_is_an_error() {
        assert!(index_to_bits(4, 2).is_err());
        assert!(bits_to_index(&vec![1u8; 64]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_any_value(value in 0usize..(1 << 20), extra in 0usize..8) {
            let width = 20 + extra;
            let bits = index_to_bits(value, width).unwrap();
            prop_assert_eq!(bits.len(), width);
            prop_assert_eq!(bits_to_index(&bits).unwrap(), value);
        }
    }
}
