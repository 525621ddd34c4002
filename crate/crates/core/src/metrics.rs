//! Fairness metrics over gender predictions for generated images.
//!
//! Gendered prompts ("a man" / "a woman") feed the mismatch rates; neutral
//! prompts ("a person") feed skew. Rates are computed as single count ratios
//! in `f64` and only rounded when rendered.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::storage::features::Gender;

pub const PREDICTIONS_HEADER: [&str; 4] =
    ["profession", "prompt_gender", "sample_index", "predicted_gender"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptGender {
    Male,
    Female,
    Neutral,
}

impl PromptGender {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Male => "male",
            Self::Female => "female",
            Self::Neutral => "neutral",
        }
    }

    /// Subject phrase used in the prompt template.
    pub fn subject(self) -> &'static str {
        match self {
            Self::Male => "a man",
            Self::Female => "a woman",
            Self::Neutral => "a person",
        }
    }

    fn target(self) -> Option<Gender> {
        match self {
            Self::Male => Some(Gender::Male),
            Self::Female => Some(Gender::Female),
            Self::Neutral => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionRecord {
    pub profession_id: usize,
    pub prompt_gender: PromptGender,
    pub sample_index: u32,
    pub predicted: Gender,
}

/// Classifier outputs with `generations` images per (profession, prompt gender).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub professions: Vec<String>,
    pub records: Vec<PredictionRecord>,
    pub generations: u32,
}

impl PredictionSet {
    pub fn new(
        professions: Vec<String>,
        records: Vec<PredictionRecord>,
        generations: u32,
    ) -> Result<Self> {
        if generations == 0 {
            return Err(Error::InvalidConfig("generations per prompt must be positive".into()));
        }
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            let row = i as u64 + 1;
            if r.profession_id >= professions.len() {
                return Err(Error::InvalidPrediction {
                    row,
                    message: format!("unknown profession id {}", r.profession_id),
                });
            }
            if r.sample_index >= generations {
                return Err(Error::InvalidPrediction {
                    row,
                    message: format!(
                        "sample_index {} is not below generations {generations}",
                        r.sample_index
                    ),
                });
            }
            if !seen.insert((r.profession_id, r.prompt_gender, r.sample_index)) {
                return Err(Error::InvalidPrediction {
                    row,
                    message: format!(
                        "duplicate ({}, {}, {})",
                        professions[r.profession_id],
                        r.prompt_gender.as_str(),
                        r.sample_index
                    ),
                });
            }
        }
        Ok(Self {
            professions,
            records,
            generations,
        })
    }

    /// Parses the predictions CSV. Without `generations`, it is inferred as
    /// one more than the largest sample index.
    pub fn from_csv<R: Read>(r: R, generations: Option<u32>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().map(str::trim).ne(PREDICTIONS_HEADER) {
            return Err(Error::InvalidPrediction {
                row: 1,
                message: format!(
                    "header must be {:?}, found {:?}",
                    PREDICTIONS_HEADER.join(","),
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }

        let mut professions = Vec::new();
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::InvalidPrediction { row: line, message };
            let field = |i: usize| row.get(i).unwrap_or("").trim();

            let profession = field(0);
            if profession.is_empty() {
                return Err(bad("empty profession".into()));
            }
            let prompt_gender = match field(1) {
                "male" => PromptGender::Male,
                "female" => PromptGender::Female,
                "neutral" => PromptGender::Neutral,
                other => return Err(bad(format!("invalid prompt_gender {other:?}"))),
            };
            let sample_index: u32 = field(2)
                .parse()
                .map_err(|_| bad(format!("invalid sample_index {:?}", field(2))))?;
            let predicted = match field(3) {
                "male" => Gender::Male,
                "female" => Gender::Female,
                other => return Err(bad(format!("invalid predicted_gender {other:?} (binary only)"))),
            };
            let next_id = professions.len();
            let profession_id = *ids.entry(profession.to_string()).or_insert_with(|| {
                professions.push(profession.to_string());
                next_id
            });
            records.push(PredictionRecord {
                profession_id,
                prompt_gender,
                sample_index,
                predicted,
            });
        }
        let generations = match generations {
            Some(c) => c,
            None => records.iter().map(|r| r.sample_index + 1).max().unwrap_or(0),
        };
        Self::new(professions, records, generations)
    }

    pub fn load_csv(path: &Path, generations: Option<u32>) -> Result<Self> {
        Self::from_csv(File::open(path)?, generations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MismatchRates {
    pub mr_male: f64,
    pub mr_female: f64,
    pub mr_overall: f64,
    pub n_male: usize,
    pub n_female: usize,
}

/// Fractions of male-, female- and all gendered prompts whose image was
/// classified as the other gender.
pub fn mismatch_rates(preds: &PredictionSet) -> Result<MismatchRates> {
    let (mut n_m, mut n_f, mut miss_m, mut miss_f) = (0usize, 0usize, 0usize, 0usize);
    for r in &preds.records {
        let Some(target) = r.prompt_gender.target() else {
            continue;
        };
        let miss = (r.predicted != target) as usize;
        match target {
            Gender::Male => {
                n_m += 1;
                miss_m += miss;
            }
            Gender::Female => {
                n_f += 1;
                miss_f += miss;
            }
        }
    }
    if n_m == 0 {
        return Err(Error::EmptySubset("male"));
    }
    if n_f == 0 {
        return Err(Error::EmptySubset("female"));
    }
    Ok(MismatchRates {
        mr_male: miss_m as f64 / n_m as f64,
        mr_female: miss_f as f64 / n_f as f64,
        mr_overall: (miss_m + miss_f) as f64 / (n_m + n_f) as f64,
        n_male: n_m,
        n_female: n_f,
    })
}

/// `√(MR_O² + (MR_F − MR_M)²)`.
pub fn composite_rate(mr_overall: f64, mr_female: f64, mr_male: f64) -> f64 {
    let gap = mr_female - mr_male;
    (mr_overall * mr_overall + gap * gap).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfessionSkew {
    pub profession: String,
    pub n_male: u32,
    pub n_female: u32,
    pub skew: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewReport {
    pub skew: f64,
    pub per_profession: Vec<ProfessionSkew>,
}

/// Mean over professions of `max(N_male, N_female) / C` for neutral prompts.
pub fn skew(preds: &PredictionSet) -> Result<SkewReport> {
    let c = preds.generations;
    let mut counts: BTreeMap<usize, (u32, u32)> =
        (0..preds.professions.len()).map(|i| (i, (0, 0))).collect();
    let mut any = false;
    for r in preds
        .records
        .iter()
        .filter(|r| r.prompt_gender == PromptGender::Neutral)
    {
        any = true;
        let e = counts.get_mut(&r.profession_id).expect("validated id");
        match r.predicted {
            Gender::Male => e.0 += 1,
            Gender::Female => e.1 += 1,
        }
    }
    if !any {
        return Err(Error::EmptySubset("neutral"));
    }
    let offenders: Vec<(String, usize)> = counts
        .iter()
        .filter(|(_, (m, f))| m + f != c)
        .map(|(&id, (m, f))| (preds.professions[id].clone(), (m + f) as usize))
        .collect();
    if !offenders.is_empty() {
        return Err(Error::SkewCountMismatch {
            expected: c as usize,
            offenders,
        });
    }
    let total_max: u64 = counts.values().map(|&(m, f)| m.max(f) as u64).sum();
    let per_profession = counts
        .iter()
        .map(|(&id, &(m, f))| ProfessionSkew {
            profession: preds.professions[id].clone(),
            n_male: m,
            n_female: f,
            skew: m.max(f) as f64 / c as f64,
        })
        .collect();
    Ok(SkewReport {
        skew: total_max as f64 / (counts.len() as u64 * c as u64) as f64,
        per_profession,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prompt {
    pub profession: String,
    pub prompt_gender: PromptGender,
    pub text: String,
}

/// Three template prompts (man, woman, person) per profession.
pub fn prompt_manifest<S: AsRef<str>>(professions: &[S]) -> Result<Vec<Prompt>> {
    if professions.is_empty() {
        return Err(Error::Empty("profession list"));
    }
    let mut out = Vec::with_capacity(professions.len() * 3);
    for p in professions {
        let p = p.as_ref().trim();
        if p.is_empty() {
            return Err(Error::InvalidConfig("empty profession name".into()));
        }
        let article = match p.chars().next().map(|c| c.to_ascii_lowercase()) {
            Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
            _ => "a",
        };
        for g in [PromptGender::Male, PromptGender::Female, PromptGender::Neutral] {
            out.push(Prompt {
                profession: p.to_string(),
                prompt_gender: g,
                text: format!("a photo of {} who works as {article} {p}", g.subject()),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MismatchSummary {
    pub mr_male: f64,
    pub mr_female: f64,
    pub mr_overall: f64,
    pub mr_composite: f64,
    pub n_male: usize,
    pub n_female: usize,
}

/// Everything computable from one prediction file. A section is absent when
/// the file holds no records of the kind it needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub generations: u32,
    pub mismatch: Option<MismatchSummary>,
    pub skew: Option<SkewReport>,
}

impl MetricsReport {
    pub fn compute(preds: &PredictionSet) -> Result<Self> {
        let mismatch = match mismatch_rates(preds) {
            Ok(r) => Some(MismatchSummary {
                mr_male: r.mr_male,
                mr_female: r.mr_female,
                mr_overall: r.mr_overall,
                mr_composite: composite_rate(r.mr_overall, r.mr_female, r.mr_male),
                n_male: r.n_male,
                n_female: r.n_female,
            }),
            Err(Error::EmptySubset(_)) => None,
            Err(e) => return Err(e),
        };
        let skew = match skew(preds) {
            Ok(s) => Some(s),
            Err(Error::EmptySubset(_)) => None,
            Err(e) => return Err(e),
        };
        if mismatch.is_none() && skew.is_none() {
            return Err(Error::EmptySubset("gendered or neutral"));
        }
        Ok(Self {
            generations: preds.generations,
            mismatch,
            skew,
        })
    }
}

/// Averages over per-seed reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedAggregate {
    pub seeds: usize,
    pub mr_male: Option<f64>,
    pub mr_female: Option<f64>,
    pub mr_overall: Option<f64>,
    /// Composite formula applied to the mean rates.
    pub composite_of_means: Option<f64>,
    /// Mean of the per-seed composites.
    pub mean_of_composites: Option<f64>,
    pub skew: Option<f64>,
}

pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<SeedAggregate> {
    if reports.is_empty() {
        return Err(Error::Empty("per-seed reports"));
    }
    let n = reports.len() as f64;
    let mean_of = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Option<f64> {
        let vals: Option<Vec<f64>> = reports.iter().map(f).collect();
        vals.map(|v| v.iter().sum::<f64>() / n)
    };
    let mr_male = mean_of(&|r| r.mismatch.map(|m| m.mr_male));
    let mr_female = mean_of(&|r| r.mismatch.map(|m| m.mr_female));
    let mr_overall = mean_of(&|r| r.mismatch.map(|m| m.mr_overall));
    let composite_of_means = match (mr_overall, mr_female, mr_male) {
        (Some(o), Some(f), Some(m)) => Some(composite_rate(o, f, m)),
        _ => None,
    };
    Ok(SeedAggregate {
        seeds: reports.len(),
        mr_male,
        mr_female,
        mr_overall,
        composite_of_means,
        mean_of_composites: mean_of(&|r| r.mismatch.map(|m| m.mr_composite)),
        skew: mean_of(&|r| r.skew.as_ref().map(|s| s.skew)),
    })
}

fn pct(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

/// Aligned text rendering with rates as percentages.
pub fn render_report(report: &MetricsReport) -> String {
    let mut out = String::new();
    let mut rows: Vec<(&str, String)> = Vec::new();
    if let Some(m) = &report.mismatch {
        rows.push(("mismatch rate (male prompts)", pct(m.mr_male)));
        rows.push(("mismatch rate (female prompts)", pct(m.mr_female)));
        rows.push(("mismatch rate (overall)", pct(m.mr_overall)));
        rows.push(("composite mismatch rate", pct(m.mr_composite)));
    }
    if let Some(s) = &report.skew {
        rows.push(("skew", pct(s.skew)));
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &rows {
        let _ = writeln!(out, "{k:<width$}  {v:>8}");
    }
    if let Some(s) = &report.skew {
        let pw = s
            .per_profession
            .iter()
            .map(|p| p.profession.len())
            .max()
            .unwrap_or(0)
            .max("profession".len());
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<pw$}  {:>6}  {:>6}  {:>8}", "profession", "male", "female", "skew");
        for p in &s.per_profession {
            let _ = writeln!(
                out,
                "{:<pw$}  {:>6}  {:>6}  {:>8}",
                p.profession,
                p.n_male,
                p.n_female,
                pct(p.skew)
            );
        }
    }
    out
}

pub fn render_aggregate(agg: &SeedAggregate) -> String {
    let mut out = String::new();
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), pct);
    let rows = [
        ("mean mismatch rate (male prompts)", fmt(agg.mr_male)),
        ("mean mismatch rate (female prompts)", fmt(agg.mr_female)),
        ("mean mismatch rate (overall)", fmt(agg.mr_overall)),
        ("composite (formula-on-means)", fmt(agg.composite_of_means)),
        ("composite (mean-of-per-seed)", fmt(agg.mean_of_composites)),
        ("mean skew", fmt(agg.skew)),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let _ = writeln!(out, "seeds: {}", agg.seeds);
    for (k, v) in &rows {
        let _ = writeln!(out, "{k:<width$}  {v:>8}");
    }
    out
}
