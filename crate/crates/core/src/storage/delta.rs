//! Steering-delta files consumed by the generation-side adapter.
//!
//! The JSON variant holds one object per line. The binary `SAED` variant:
//!
//! ```text
//! "SAED" | version u16 | d u32 | record count u32 | sae fingerprint [32]
//! | count × (prompt_id u64 | token_position u32 | route u8 | gamma f64 | temperature f64
//!            | profession name (u16 len + UTF-8)
//!            | weight count u32 | weight count × (name (u16 len + UTF-8) | weight f64)
//!            | d × f32 delta)
//! | CRC32 of all preceding bytes
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, FormatErrorKind, Result};
use crate::steering::Route;

use super::checkpoint::Fingerprint;
use super::codec::{write_atomic, CrcReader, CrcWriter};

pub const DELTA_MAGIC: [u8; 4] = *b"SAED";
pub const DELTA_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub prompt_id: u64,
    pub profession: String,
    pub token_position: u32,
    pub gamma: f64,
    pub temperature: f64,
    pub route: Route,
    /// Profession name → softmax weight; empty on the known route.
    pub weights: BTreeMap<String, f64>,
    pub delta: Vec<f32>,
}

pub fn write_delta_jsonl<W: Write>(mut w: W, records: &[DeltaRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_delta_jsonl<R: BufRead>(r: R) -> Result<Vec<DeltaRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DeltaRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            file: "delta file",
            offset: i as u64 + 1,
            kind: FormatErrorKind::InvalidValue(format!("line {}: {e}", i + 1)),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_delta_binary<W: Write>(
    w: W,
    d: usize,
    fingerprint: &Fingerprint,
    records: &[DeltaRecord],
) -> Result<()> {
    let mut w = CrcWriter::new(w);
    w.put(&DELTA_MAGIC)?;
    w.put_u16(DELTA_VERSION)?;
    w.put_u32(d as u32)?;
    w.put_u32(records.len() as u32)?;
    w.put(&fingerprint.0)?;
    for r in records {
        check_dim("delta (d)", d, r.delta.len())?;
        w.put_u64(r.prompt_id)?;
        w.put_u32(r.token_position)?;
        w.put_u8(r.route.to_byte())?;
        w.put_f64(r.gamma)?;
        w.put_f64(r.temperature)?;
        w.put_str(&r.profession)?;
        w.put_u32(r.weights.len() as u32)?;
        for (name, weight) in &r.weights {
            w.put_str(name)?;
            w.put_f64(*weight)?;
        }
        w.put_f32s(&r.delta)?;
    }
    w.finish()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaBatch {
    pub d: usize,
    pub sae_fingerprint: Fingerprint,
    pub records: Vec<DeltaRecord>,
}

pub fn read_delta_binary<R: Read>(r: R) -> Result<DeltaBatch> {
    let mut r = CrcReader::new(r, "delta file");
    r.magic(DELTA_MAGIC)?;
    r.version(DELTA_VERSION)?;
    let d = r.u32()? as usize;
    let count = r.u32()? as usize;
    let sae_fingerprint = Fingerprint(r.array::<32>()?);
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let prompt_id = r.u64()?;
        let token_position = r.u32()?;
        let route_at = r.offset();
        let rb = r.u8()?;
        let route = Route::from_byte(rb).ok_or_else(|| {
            r.error(route_at, FormatErrorKind::InvalidValue(format!("route byte {rb}")))
        })?;
        let gamma = r.f64()?;
        let temperature = r.f64()?;
        let profession = r.string()?;
        let n_weights = r.u32()?;
        let mut weights = BTreeMap::new();
        for _ in 0..n_weights {
            let name = r.string()?;
            weights.insert(name, r.f64()?);
        }
        let delta = r.f32s(d)?;
        records.push(DeltaRecord {
            prompt_id,
            profession,
            token_position,
            gamma,
            temperature,
            route,
            weights,
            delta,
        });
    }
    r.finish()?;
    Ok(DeltaBatch {
        d,
        sae_fingerprint,
        records,
    })
}

pub fn save_delta_jsonl(path: &Path, records: &[DeltaRecord]) -> Result<()> {
    write_atomic(path, |w| write_delta_jsonl(w, records))
}

pub fn load_delta_jsonl(path: &Path) -> Result<Vec<DeltaRecord>> {
    read_delta_jsonl(BufReader::new(File::open(path)?))
}

pub fn save_delta_binary(
    path: &Path,
    d: usize,
    fingerprint: &Fingerprint,
    records: &[DeltaRecord],
) -> Result<()> {
    write_atomic(path, |w| write_delta_binary(w, d, fingerprint, records))
}

pub fn load_delta_binary(path: &Path) -> Result<DeltaBatch> {
    read_delta_binary(BufReader::new(File::open(path)?))
}
