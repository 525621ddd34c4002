//! Per-profession gender directions in the sparse latent space.
//!
//! For each profession the bank stores the difference between the mean male
//! and mean female latent codes (or, for the profession-average strategy, the
//! pooled mean of both). Means are accumulated in `f64` and stored as `f32`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::sae::SaeParams;
use crate::storage::checkpoint::Fingerprint;
use crate::storage::features::{FeatureHeader, FeatureRecord, PositionKind};

pub use crate::storage::features::Gender;

/// Records encoded per parallel batch during bank construction.
const ENCODE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledLatent {
    pub latent: Vec<f32>,
    pub gender: Gender,
    pub profession_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DirectionStrategy {
    /// Male-minus-female mean over job-token latents.
    JobTokenDiff,
    /// Male-minus-female mean over end-of-sequence latents.
    EosDiff,
    /// Pooled mean of all latents for the profession.
    ProfessionAverage,
}

impl DirectionStrategy {
    pub const ALL: [Self; 3] = [Self::JobTokenDiff, Self::EosDiff, Self::ProfessionAverage];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::JobTokenDiff => "job-token-diff",
            Self::EosDiff => "eos-diff",
            Self::ProfessionAverage => "profession-average",
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Self::JobTokenDiff => 0,
            Self::EosDiff => 1,
            Self::ProfessionAverage => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.to_byte() == b)
    }

    /// Token position the feature file must have been captured at.
    pub fn position_kind(self) -> PositionKind {
        match self {
            Self::EosDiff => PositionKind::Eos,
            Self::JobTokenDiff | Self::ProfessionAverage => PositionKind::JobToken,
        }
    }

    pub fn is_difference(self) -> bool {
        !matches!(self, Self::ProfessionAverage)
    }
}

impl fmt::Display for DirectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DirectionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy {s:?}")))
    }
}

/// Which encoder variant produces the latents averaged into the bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BankEncoder {
    #[default]
    Inference,
    Train,
}

impl BankEncoder {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Inference => "inference",
            Self::Train => "train",
        }
    }
}

impl FromStr for BankEncoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inference" => Ok(Self::Inference),
            "train" => Ok(Self::Train),
            _ => Err(Error::InvalidConfig(format!("unknown encoder variant {s:?}"))),
        }
    }
}

/// Lowercase, trimmed, internal whitespace collapsed to single spaces.
pub fn canonical_name(name: &str) -> String {
    name.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Per-gender latent sums for one profession.
#[derive(Debug, Clone, PartialEq)]
struct GenderSums {
    male: Vec<f64>,
    female: Vec<f64>,
    n_male: u32,
    n_female: u32,
}

impl GenderSums {
    fn new(m: usize) -> Self {
        Self {
            male: vec![0.0; m],
            female: vec![0.0; m],
            n_male: 0,
            n_female: 0,
        }
    }

    fn add(&mut self, gender: Gender, latent: &[f32]) {
        let (sum, n) = match gender {
            Gender::Male => (&mut self.male, &mut self.n_male),
            Gender::Female => (&mut self.female, &mut self.n_female),
        };
        for (s, &v) in sum.iter_mut().zip(latent) {
            *s += v as f64;
        }
        *n += 1;
    }

    fn means(self, profession: &str) -> Result<GenderMeans> {
        for (n, gender) in [(self.n_male, Gender::Male), (self.n_female, Gender::Female)] {
            if n == 0 {
                return Err(Error::MissingGender {
                    profession: profession.to_string(),
                    gender: gender.as_str(),
                });
            }
        }
        let (nm, nf) = (self.n_male as f64, self.n_female as f64);
        Ok(GenderMeans {
            male: self.male.into_iter().map(|s| s / nm).collect(),
            female: self.female.into_iter().map(|s| s / nf).collect(),
            n_male: self.n_male,
            n_female: self.n_female,
        })
    }
}

/// Male and female mean latents for one profession, with their sample counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GenderMeans {
    pub male: Vec<f64>,
    pub female: Vec<f64>,
    pub n_male: u32,
    pub n_female: u32,
}

/// Elementwise male and female means over the latents labeled `profession_id`.
pub fn compute_means(latents: &[LabeledLatent], profession_id: u32) -> Result<GenderMeans> {
    let mut selected = latents.iter().filter(|l| l.profession_id == profession_id);
    let Some(first) = selected.clone().next() else {
        return Err(Error::MissingGender {
            profession: profession_id.to_string(),
            gender: "male or female",
        });
    };
    let m = first.latent.len();
    let mut sums = GenderSums::new(m);
    for l in &mut selected {
        check_dim("latent (m)", m, l.latent.len())?;
        sums.add(l.gender, &l.latent);
    }
    sums.means(&profession_id.to_string())
}

pub fn compute_direction(means: &GenderMeans, strategy: DirectionStrategy) -> Vec<f32> {
    match strategy {
        DirectionStrategy::JobTokenDiff | DirectionStrategy::EosDiff => means
            .male
            .iter()
            .zip(&means.female)
            .map(|(a, b)| (a - b) as f32)
            .collect(),
        DirectionStrategy::ProfessionAverage => {
            let (nm, nf) = (means.n_male as f64, means.n_female as f64);
            means
                .male
                .iter()
                .zip(&means.female)
                .map(|(a, b)| ((nm * a + nf * b) / (nm + nf)) as f32)
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub name: String,
    pub n_male: u32,
    pub n_female: u32,
    pub direction: Vec<f32>,
}

/// Immutable profession → direction table bound to one checkpoint.
///
/// A profession's id within the bank is its entry index.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionBank {
    pub strategy: DirectionStrategy,
    pub m: usize,
    pub sae_fingerprint: Fingerprint,
    pub entries: Vec<BankEntry>,
}

impl DirectionBank {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the entry whose name matches `name` after canonicalization.
    pub fn find(&self, name: &str) -> Option<usize> {
        let key = canonical_name(name);
        self.entries.iter().position(|e| e.name == key)
    }

    /// Index of the entry whose stored name equals `name` byte for byte.
    pub fn find_exact(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn check_fingerprint(&self, params: &SaeParams) -> Result<()> {
        let fp = params.fingerprint();
        if fp != self.sae_fingerprint {
            return Err(Error::FingerprintMismatch {
                bank: self.sae_fingerprint.to_string(),
                checkpoint: fp.to_string(),
            });
        }
        check_dim("bank latent size (m)", params.m(), self.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub strategy: DirectionStrategy,
    pub encoder: BankEncoder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub bank_index: usize,
    pub profession_id: u32,
    pub name: String,
    pub n_male: u32,
    pub n_female: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedProfession {
    pub profession_id: u32,
    pub name: String,
    pub missing_gender: &'static str,
    pub n_male: u32,
    pub n_female: u32,
}

/// Human-readable summary written next to a bank file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub strategy: &'static str,
    pub encoder: BankEncoder,
    pub d: usize,
    pub m: usize,
    pub records: u64,
    pub sae_fingerprint: String,
    pub entries: Vec<ReportEntry>,
    pub skipped: Vec<SkippedProfession>,
}

/// Encodes every record and builds the per-profession direction table.
///
/// `names` maps feature-file profession ids to names; ids without a name get
/// `profession_<id>`. Professions lacking either gender are skipped and
/// listed in the report.
pub fn build_bank<I>(
    header: &FeatureHeader,
    records: I,
    names: &BTreeMap<u32, String>,
    params: &SaeParams,
    options: BuildOptions,
) -> Result<(DirectionBank, BuildReport)>
where
    I: IntoIterator<Item = Result<FeatureRecord>>,
{
    check_dim("feature file d vs checkpoint d", params.d(), header.d as usize)?;
    let expected = options.strategy.position_kind();
    if header.position_kind != expected {
        return Err(Error::PositionKindMismatch {
            strategy: options.strategy.as_str(),
            expected: expected.as_str(),
            found: header.position_kind.as_str(),
        });
    }

    let mut groups: BTreeMap<u32, GenderSums> = BTreeMap::new();
    let mut total = 0u64;
    let mut chunk: Vec<FeatureRecord> = Vec::with_capacity(ENCODE_CHUNK);
    let mut records = records.into_iter();
    loop {
        chunk.clear();
        for rec in records.by_ref().take(ENCODE_CHUNK) {
            chunk.push(rec?);
        }
        if chunk.is_empty() {
            break;
        }
        let codes: Vec<Result<Vec<f32>>> = chunk
            .par_iter()
            .map(|r| {
                let code = match options.encoder {
                    BankEncoder::Inference => params.encode_inference(&r.features)?,
                    BankEncoder::Train => params.encode_train(&r.features)?,
                };
                Ok(code.values)
            })
            .collect();
        for (rec, code) in chunk.iter().zip(codes) {
            groups
                .entry(rec.profession_id)
                .or_insert_with(|| GenderSums::new(params.m()))
                .add(rec.gender, &code?);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("feature file"));
    }

    let mut seen: HashMap<String, u32> = HashMap::new();
    let mut entries = Vec::new();
    let mut report_entries = Vec::new();
    let mut skipped = Vec::new();
    for (id, sums) in groups {
        let name = names
            .get(&id)
            .map(|n| canonical_name(n))
            .unwrap_or_else(|| format!("profession_{id}"));
        if let Some(other) = seen.insert(name.clone(), id) {
            return Err(Error::InvalidConfig(format!(
                "profession ids {other} and {id} share the name {name:?}"
            )));
        }
        let (n_male, n_female) = (sums.n_male, sums.n_female);
        match sums.means(&name) {
            Ok(means) => {
                report_entries.push(ReportEntry {
                    bank_index: entries.len(),
                    profession_id: id,
                    name: name.clone(),
                    n_male,
                    n_female,
                });
                entries.push(BankEntry {
                    direction: compute_direction(&means, options.strategy),
                    name,
                    n_male,
                    n_female,
                });
            }
            Err(Error::MissingGender { gender, .. }) => {
                log::warn!("skipping profession {name:?} (id {id}): no {gender} samples");
                skipped.push(SkippedProfession {
                    profession_id: id,
                    name,
                    missing_gender: gender,
                    n_male,
                    n_female,
                });
            }
            Err(e) => return Err(e),
        }
    }

    let fingerprint = params.fingerprint();
    let bank = DirectionBank {
        strategy: options.strategy,
        m: params.m(),
        sae_fingerprint: fingerprint,
        entries,
    };
    let report = BuildReport {
        strategy: options.strategy.as_str(),
        encoder: options.encoder,
        d: params.d(),
        m: params.m(),
        records: total,
        sae_fingerprint: fingerprint.to_string(),
        entries: report_entries,
        skipped,
    };
    Ok((bank, report))
}
