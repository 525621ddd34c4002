//! `SAEB` direction-bank format.
//!
//! ```text
//! "SAEB" | version u16 | strategy u8 | m u32 | profession count u32 | sae fingerprint [32]
//! | count × (name_len u16 | name UTF-8 | N_m u32 | N_f u32 | m × f32)
//! | CRC32 of all preceding bytes
//! ```

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::direction::{BankEntry, BuildReport, DirectionBank, DirectionStrategy};
use crate::error::{check_dim, FormatErrorKind, Result};

use super::checkpoint::Fingerprint;
use super::codec::{write_atomic, CrcReader, CrcWriter};

pub const BANK_MAGIC: [u8; 4] = *b"SAEB";
pub const BANK_VERSION: u16 = 1;

pub fn write_bank<W: Write>(w: W, bank: &DirectionBank) -> Result<()> {
    let mut w = CrcWriter::new(w);
    w.put(&BANK_MAGIC)?;
    w.put_u16(BANK_VERSION)?;
    w.put_u8(bank.strategy.to_byte())?;
    w.put_u32(bank.m as u32)?;
    w.put_u32(bank.entries.len() as u32)?;
    w.put(&bank.sae_fingerprint.0)?;
    for e in &bank.entries {
        check_dim("bank direction (m)", bank.m, e.direction.len())?;
        w.put_str(&e.name)?;
        w.put_u32(e.n_male)?;
        w.put_u32(e.n_female)?;
        w.put_f32s(&e.direction)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_bank<R: Read>(r: R) -> Result<DirectionBank> {
    let mut r = CrcReader::new(r, "bank file");
    r.magic(BANK_MAGIC)?;
    r.version(BANK_VERSION)?;
    let strategy_at = r.offset();
    let s = r.u8()?;
    let strategy = DirectionStrategy::from_byte(s).ok_or_else(|| {
        r.error(strategy_at, FormatErrorKind::InvalidValue(format!("strategy byte {s}")))
    })?;
    let m = r.u32()? as usize;
    let count = r.u32()? as usize;
    let sae_fingerprint = Fingerprint(r.array::<32>()?);
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name = r.string()?;
        let n_male = r.u32()?;
        let n_female = r.u32()?;
        let direction = r.f32s(m)?;
        entries.push(BankEntry {
            name,
            n_male,
            n_female,
            direction,
        });
    }
    r.finish()?;
    Ok(DirectionBank {
        strategy,
        m,
        sae_fingerprint,
        entries,
    })
}

pub fn save_bank(path: &Path, bank: &DirectionBank) -> Result<()> {
    write_atomic(path, |w| write_bank(w, bank))
}

pub fn load_bank(path: &Path) -> Result<DirectionBank> {
    read_bank(BufReader::new(File::open(path)?))
}

pub fn save_report(path: &Path, report: &BuildReport) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, report)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}
