//! On-disk artifact formats.
//!
//! Every binary format is little-endian, starts with a four-byte magic and a
//! `u16` version, and ends with a CRC32 over all preceding bytes. Writers go
//! through a temporary file and an atomic rename.

mod codec;

pub mod bank;
pub mod checkpoint;
pub mod delta;
pub mod features;

pub use codec::write_atomic;
