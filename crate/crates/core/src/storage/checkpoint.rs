//! `SAEM` checkpoint format.
//!
//! ```text
//! "SAEM" | version u16 | d u32 | m u32 | k u32 | normalize_decoder u8
//! | W_enc [m×d] f32 | b_enc [m] f32 | W_dec [d×m] f32 | b_pre [d] f32
//! | CRC32 of all preceding bytes
//! ```

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{FormatErrorKind, Result};
use crate::sae::SaeParams;

use super::codec::{write_atomic, CrcReader, CrcWriter};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SAEM";
pub const CHECKPOINT_VERSION: u16 = 1;

/// SHA-256 of a checkpoint's serialized bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({self})")
    }
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl SaeParams {
    /// Content hash binding derived artifacts to this exact checkpoint.
    pub fn fingerprint(&self) -> Fingerprint {
        let mut hw = HashWriter(Sha256::new());
        write_checkpoint(&mut hw, self).expect("hashing never fails");
        Fingerprint(hw.0.finalize().into())
    }
}

pub fn write_checkpoint<W: Write>(w: W, params: &SaeParams) -> Result<()> {
    let mut w = CrcWriter::new(w);
    w.put(&CHECKPOINT_MAGIC)?;
    w.put_u16(CHECKPOINT_VERSION)?;
    for v in [params.d, params.m, params.k] {
        w.put_u32(v as u32)?;
    }
    w.put_u8(params.normalize_decoder as u8)?;
    w.put_f32s(&params.w_enc)?;
    w.put_f32s(&params.b_enc)?;
    w.put_f32s(&params.w_dec)?;
    w.put_f32s(&params.b_pre)?;
    w.finish()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<SaeParams> {
    let mut r = CrcReader::new(r, "checkpoint");
    r.magic(CHECKPOINT_MAGIC)?;
    r.version(CHECKPOINT_VERSION)?;
    let dims_at = r.offset();
    let d = r.u32()? as usize;
    let m = r.u32()? as usize;
    let k = r.u32()? as usize;
    let flag_at = r.offset();
    let normalize_decoder = match r.u8()? {
        0 => false,
        1 => true,
        other => {
            return Err(r.error(
                flag_at,
                FormatErrorKind::InvalidValue(format!("normalize_decoder flag {other}")),
            ))
        }
    };
    if d == 0 || m == 0 || k == 0 || m % d != 0 || k > m {
        return Err(r.error(
            dims_at,
            FormatErrorKind::InvalidValue(format!("inconsistent dimensions d={d} m={m} k={k}")),
        ));
    }
    let w_enc = r.f32s(m * d)?;
    let b_enc = r.f32s(m)?;
    let w_dec = r.f32s(d * m)?;
    let b_pre = r.f32s(d)?;
    r.finish()?;
    let params = SaeParams {
        d,
        m,
        k,
        normalize_decoder,
        w_enc,
        b_enc,
        w_dec,
        b_pre,
    };
    params
        .validate()
        .map_err(|e| r.error(dims_at, FormatErrorKind::InvalidValue(e.to_string())))?;
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &SaeParams) -> Result<()> {
    write_atomic(path, |w| write_checkpoint(w, params))
}

pub fn load_checkpoint(path: &Path) -> Result<SaeParams> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
