//! `SAEF` feature files: labeled residual vectors, read as a stream.
//!
//! ```text
//! "SAEF" | version u16 | d u32 | record_count u64 | position_kind u8
//! | record_count × (gender u8 | profession_id u32 | token_position u32 | d × f32)
//! | CRC32 of all preceding bytes
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatErrorKind, Result};

use super::codec::{write_atomic, CrcReader, CrcWriter};

pub const FEATURE_MAGIC: [u8; 4] = *b"SAEF";
pub const FEATURE_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Male => "male",
            Self::Female => "female",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Self::Male => Self::Female,
            Self::Female => Self::Male,
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            Self::Male => 0,
            Self::Female => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Male),
            1 => Some(Self::Female),
            _ => None,
        }
    }
}

/// Which token each record's features were captured at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionKind {
    Eos,
    JobToken,
}

impl PositionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Eos => "eos",
            Self::JobToken => "job-token",
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            Self::Eos => 0,
            Self::JobToken => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Eos),
            1 => Some(Self::JobToken),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHeader {
    pub d: u32,
    pub record_count: u64,
    pub position_kind: PositionKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub gender: Gender,
    pub profession_id: u32,
    /// Index of the labeled token in the prompt's token sequence.
    pub token_position: u32,
    pub features: Vec<f32>,
}

/// Streaming writer; the declared record count must match what is pushed.
pub struct FeatureWriter<W: Write> {
    inner: CrcWriter<W>,
    header: FeatureHeader,
    written: u64,
}

impl<W: Write> FeatureWriter<W> {
    pub fn new(w: W, header: FeatureHeader) -> Result<Self> {
        if header.d == 0 {
            return Err(Error::InvalidConfig("feature dimension must be positive".into()));
        }
        let mut inner = CrcWriter::new(w);
        inner.put(&FEATURE_MAGIC)?;
        inner.put_u16(FEATURE_VERSION)?;
        inner.put_u32(header.d)?;
        inner.put_u64(header.record_count)?;
        inner.put_u8(header.position_kind.to_byte())?;
        Ok(Self {
            inner,
            header,
            written: 0,
        })
    }

    pub fn push(&mut self, rec: &FeatureRecord) -> Result<()> {
        if self.written == self.header.record_count {
            return Err(Error::InvalidConfig(format!(
                "more records than the declared {}",
                self.header.record_count
            )));
        }
        crate::error::check_dim("feature vector (d)", self.header.d as usize, rec.features.len())?;
        if rec.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature record"));
        }
        self.inner.put_u8(rec.gender.to_byte())?;
        self.inner.put_u32(rec.profession_id)?;
        self.inner.put_u32(rec.token_position)?;
        self.inner.put_f32s(&rec.features)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<W> {
        if self.written != self.header.record_count {
            return Err(Error::InvalidConfig(format!(
                "declared {} records but wrote {}",
                self.header.record_count, self.written
            )));
        }
        Ok(self.inner.finish()?)
    }
}

pub fn write_features<W: Write>(
    w: W,
    d: u32,
    position_kind: PositionKind,
    records: &[FeatureRecord],
) -> Result<W> {
    let header = FeatureHeader {
        d,
        record_count: records.len() as u64,
        position_kind,
    };
    let mut fw = FeatureWriter::new(w, header)?;
    for r in records {
        fw.push(r)?;
    }
    fw.finish()
}

pub fn write_feature_file(
    path: &Path,
    d: u32,
    position_kind: PositionKind,
    records: &[FeatureRecord],
) -> Result<()> {
    write_atomic(path, |w| write_features(w, d, position_kind, records).map(|_| ()))
}

/// Streams records after validating the header. The CRC is checked once the
/// last record has been read; a mismatch surfaces as the iterator's final item.
pub struct FeatureReader<R: Read> {
    inner: CrcReader<R>,
    header: FeatureHeader,
    remaining: u64,
    finished: bool,
}

impl FeatureReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> FeatureReader<R> {
    pub fn new(r: R) -> Result<Self> {
        let mut inner = CrcReader::new(r, "feature file");
        inner.magic(FEATURE_MAGIC)?;
        inner.version(FEATURE_VERSION)?;
        let d_at = inner.offset();
        let d = inner.u32()?;
        if d == 0 {
            return Err(inner.error(d_at, FormatErrorKind::InvalidValue("d is zero".into())));
        }
        let record_count = inner.u64()?;
        let kind_at = inner.offset();
        let kind = inner.u8()?;
        let position_kind = PositionKind::from_byte(kind).ok_or_else(|| {
            inner.error(kind_at, FormatErrorKind::InvalidValue(format!("position kind {kind}")))
        })?;
        Ok(Self {
            inner,
            header: FeatureHeader {
                d,
                record_count,
                position_kind,
            },
            remaining: record_count,
            finished: false,
        })
    }

    pub fn header(&self) -> FeatureHeader {
        self.header
    }

    fn read_record(&mut self) -> Result<FeatureRecord> {
        let at = self.inner.offset();
        let g = self.inner.u8()?;
        let gender = Gender::from_byte(g).ok_or_else(|| {
            self.inner
                .error(at, FormatErrorKind::InvalidValue(format!("gender byte {g}")))
        })?;
        let profession_id = self.inner.u32()?;
        let token_position = self.inner.u32()?;
        let feat_at = self.inner.offset();
        let features = self.inner.f32s(self.header.d as usize)?;
        if features.iter().any(|v| !v.is_finite()) {
            return Err(self.inner.error(
                feat_at,
                FormatErrorKind::InvalidValue("non-finite feature value".into()),
            ));
        }
        Ok(FeatureRecord {
            gender,
            profession_id,
            token_position,
            features,
        })
    }

    /// Reads everything, including the checksum.
    pub fn read_all(self) -> Result<(FeatureHeader, Vec<FeatureRecord>)> {
        let header = self.header;
        let records = self.collect::<Result<Vec<_>>>()?;
        Ok((header, records))
    }
}

impl<R: Read> Iterator for FeatureReader<R> {
    type Item = Result<FeatureRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        if self.remaining > 0 {
            self.remaining -= 1;
            let rec = self.read_record();
            if rec.is_err() {
                self.finished = true;
            }
            return Some(rec);
        }
        self.finished = true;
        self.inner.finish().err().map(Err)
    }
}

/// Sidecar manifest stored next to a feature file as `<file>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureManifest {
    /// Profession id → canonical name.
    pub professions: BTreeMap<u32, String>,
    #[serde(default)]
    pub source_model: String,
    #[serde(default)]
    pub layer: String,
    #[serde(default)]
    pub extraction_date: String,
}

pub fn manifest_path(feature_path: &Path) -> PathBuf {
    let mut s = feature_path.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Loads the sidecar manifest if one exists.
pub fn load_manifest(feature_path: &Path) -> Result<Option<FeatureManifest>> {
    let path = manifest_path(feature_path);
    if !path.exists() {
        return Ok(None);
    }
    let file = BufReader::new(File::open(path)?);
    Ok(Some(serde_json::from_reader(file)?))
}

pub fn save_manifest(feature_path: &Path, manifest: &FeatureManifest) -> Result<()> {
    write_atomic(&manifest_path(feature_path), |w| {
        serde_json::to_writer_pretty(&mut *w, manifest)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}
