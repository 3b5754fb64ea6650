//! Forward error correction: CRC-aided polar coding.

pub mod crc;
pub mod polar;
