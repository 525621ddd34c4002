//! Command-line front end.
//!
//! Settings come from flags or from a `key=value` file passed with
//! `--config`; flags win. The resolved settings are echoed to stderr before
//! any work starts. Exit codes: 0 success, 1 invalid input, 2 I/O failure.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::direction::{build_bank, BankEncoder, BuildOptions, DirectionStrategy};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate_seeds, prompt_manifest, render_aggregate, render_report, MetricsReport,
    PredictionSet,
};
use crate::steering::{emit_delta, SteeringConfig};
use crate::storage::bank::{self, BANK_MAGIC};
use crate::storage::checkpoint::{self, CHECKPOINT_MAGIC};
use crate::storage::delta::{self, DeltaRecord, DELTA_MAGIC};
use crate::storage::features::{self, FeatureReader, PositionKind, FEATURE_MAGIC};
use crate::storage::write_atomic;
use crate::trainer::{train, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "sae-debias", version, about = "Sparse-autoencoder gender debiasing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a k-sparse autoencoder on a feature file.
    Train(TrainArgs),
    /// Build a per-profession direction bank from a feature file and checkpoint.
    BuildBank(BuildBankArgs),
    /// Emit steering deltas for the prompts in a job-token feature file.
    EmitDelta(EmitDeltaArgs),
    /// Compute mismatch rates and skew from classifier predictions.
    Metrics(MetricsArgs),
    /// Write the evaluation prompt manifest for a profession list.
    Prompts(PromptsArgs),
    /// Print the header of any artifact file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// key=value settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Output checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss history CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    expansion_factor: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k_aux: Option<usize>,
    #[arg(long)]
    dead_threshold_steps: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    normalize_decoder: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BuildBankArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Profession-name manifest; defaults to the feature file's sidecar.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// job-token-diff, eos-diff or profession-average.
    #[arg(long)]
    strategy: Option<String>,
    /// Encoder variant for bank latents: inference or train.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Build report JSON; defaults to `<out>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmitDeltaArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Job-token feature file with one record per prompt.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Require byte-exact profession names for the known-profession route.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    exact_match: Option<bool>,
    /// jsonl or binary.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Predictions CSV; repeat once per seed to aggregate.
    #[arg(long, required = true)]
    predictions: Vec<PathBuf>,
    /// Generations per (profession, prompt gender); inferred when omitted.
    #[arg(long)]
    generations: Option<u32>,
    /// Also write the raw rates as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PromptsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Text file with one profession per line.
    #[arg(long)]
    professions: Option<PathBuf>,
    /// Output CSV (profession,prompt_gender,text); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    path: PathBuf,
}

/// Merges flag values with an optional settings file.
struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: Vec<(String, String)>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::InvalidConfig(format!("{}:{}: expected key=value", path.display(), i + 1))
                })?;
                file.insert(k.trim().replace('-', "_"), v.trim().to_string());
            }
        }
        Ok(Self {
            file,
            used: BTreeSet::new(),
            resolved: Vec::new(),
        })
    }

    fn get<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(raw.parse::<T>().map_err(|e| {
                    Error::InvalidConfig(format!("config key {key}={raw:?}: {e}"))
                })?),
                None => None,
            },
        };
        Ok(value)
    }

    fn or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.get(key, flag)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self
            .get(key, flag)?
            .ok_or_else(|| Error::InvalidConfig(format!("missing required setting --{}", key.replace('_', "-"))))?;
        self.record(key, &v);
        Ok(v)
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        let v = self.required(key, flag.map(|p| p.to_string_lossy().into_owned()))?;
        Ok(PathBuf::from(v))
    }

    fn optional_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let v = self.get(key, flag.map(|p| p.to_string_lossy().into_owned()))?;
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v.map(PathBuf::from))
    }

    fn record(&mut self, key: &str, value: &dyn Display) {
        self.resolved.push((key.to_string(), value.to_string()));
    }

    /// Fails on settings-file keys no option consumed.
    fn finish(&self) -> Result<()> {
        let unknown: Vec<&str> = self
            .file
            .keys()
            .filter(|k| !self.used.contains(*k))
            .map(String::as_str)
            .collect();
        if !unknown.is_empty() {
            return Err(Error::InvalidConfig(format!("unknown config keys: {}", unknown.join(", "))));
        }
        Ok(())
    }

    fn print(&self, command: &str, err: &mut dyn Write) -> Result<()> {
        writeln!(err, "{command}: resolved config")?;
        for (k, v) in &self.resolved {
            writeln!(err, "  {k} = {v}")?;
        }
        Ok(())
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run_with(args, &mut out, &mut err)
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a, out, err),
        Command::BuildBank(a) => cmd_build_bank(a, out, err),
        Command::EmitDelta(a) => cmd_emit_delta(a, out, err),
        Command::Metrics(a) => cmd_metrics(a, out, err),
        Command::Prompts(a) => cmd_prompts(a, out, err),
        Command::Inspect(a) => cmd_inspect(a, out),
    }
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut s = Settings::load(a.config.as_deref())?;
    let features_path = s.path("features", a.features)?;
    let out_path = s.path("out", a.out)?;
    let loss_path = s
        .optional_path("loss_csv", a.loss_csv)?
        .unwrap_or_else(|| with_suffix(&out_path, ".loss.csv"));
    let def = TrainConfig::default();
    let mut config = TrainConfig {
        k: s.or("k", a.k, def.k)?,
        expansion_factor: s.or("expansion_factor", a.expansion_factor, def.expansion_factor)?,
        alpha: s.or("alpha", a.alpha, def.alpha)?,
        k_aux: s.get("k_aux", a.k_aux)?,
        dead_threshold_steps: s.or("dead_threshold_steps", a.dead_threshold_steps, def.dead_threshold_steps)?,
        batch_size: s.or("batch_size", a.batch_size, def.batch_size)?,
        total_steps: s.or("total_steps", a.total_steps, def.total_steps)?,
        learning_rate: s.or("learning_rate", a.learning_rate, def.learning_rate)?,
        beta1: s.or("beta1", a.beta1, def.beta1)?,
        beta2: s.or("beta2", a.beta2, def.beta2)?,
        epsilon: s.or("epsilon", a.epsilon, def.epsilon)?,
        normalize_decoder: s.or("normalize_decoder", a.normalize_decoder, def.normalize_decoder)?,
        seed: s.or("seed", a.seed, def.seed)?,
    };
    s.finish()?;

    let reader = FeatureReader::open(&features_path)?;
    let d = reader.header().d as usize;
    let m = config.expansion_factor * d;
    let k_aux = config.resolved_k_aux(m);
    config.k_aux = Some(k_aux);
    s.record("k_aux", &k_aux);
    s.record("d", &d);
    s.record("m", &m);
    s.print("train", err)?;

    let (_, records) = reader.read_all()?;
    let bank: Vec<Vec<f32>> = records.into_iter().map(|r| r.features).collect();
    let state = train(&bank, &config)?;

    checkpoint::save_checkpoint(&out_path, &state.params)?;
    write_atomic(&loss_path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["step", "mse", "aux"])?;
        for r in &state.loss_history {
            csv.write_record([r.step.to_string(), r.mse.to_string(), r.aux.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    writeln!(
        out,
        "wrote {} (fingerprint {}) after {} steps",
        out_path.display(),
        state.params.fingerprint(),
        state.step
    )?;
    if let Some(last) = state.loss_history.last() {
        writeln!(out, "last recorded loss: step {} mse {} aux {}", last.step, last.mse, last.aux)?;
    }
    Ok(())
}

fn load_names(manifest: Option<PathBuf>, features: &Path) -> Result<BTreeMap<u32, String>> {
    let m = match manifest {
        Some(p) => Some(serde_json::from_reader(BufReader::new(File::open(p)?))?),
        None => features::load_manifest(features)?,
    };
    Ok(m.map(|m: features::FeatureManifest| m.professions).unwrap_or_default())
}

fn cmd_build_bank(a: BuildBankArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut s = Settings::load(a.config.as_deref())?;
    let features_path = s.path("features", a.features)?;
    let manifest = s.optional_path("manifest", a.manifest)?;
    let ckpt_path = s.path("checkpoint", a.checkpoint)?;
    let strategy: DirectionStrategy = s
        .or("strategy", a.strategy, DirectionStrategy::JobTokenDiff.as_str().to_string())?
        .parse()?;
    let encoder: BankEncoder = s
        .or("encoder", a.encoder, BankEncoder::default().as_str().to_string())?
        .parse()?;
    let out_path = s.path("out", a.out)?;
    let report_path = s
        .optional_path("report", a.report)?
        .unwrap_or_else(|| with_suffix(&out_path, ".report.json"));
    s.finish()?;

    let params = checkpoint::load_checkpoint(&ckpt_path)?;
    s.record("k", &params.k());
    s.record("expansion_factor", &params.expansion_factor());
    s.print("build-bank", err)?;

    let names = load_names(manifest, &features_path)?;
    let reader = FeatureReader::open(&features_path)?;
    let header = reader.header();
    let (bank, report) = build_bank(&header, reader, &names, &params, BuildOptions { strategy, encoder })?;
    bank::save_bank(&out_path, &bank)?;
    bank::save_report(&report_path, &report)?;
    writeln!(
        out,
        "wrote {} ({} professions, {} skipped, strategy {})",
        out_path.display(),
        bank.len(),
        report.skipped.len(),
        strategy
    )?;
    Ok(())
}

fn cmd_emit_delta(a: EmitDeltaArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut s = Settings::load(a.config.as_deref())?;
    let features_path = s.path("features", a.features)?;
    let manifest = s.optional_path("manifest", a.manifest)?;
    let bank_path = s.path("bank", a.bank)?;
    let ckpt_path = s.path("checkpoint", a.checkpoint)?;
    let def = SteeringConfig::default();
    let config = SteeringConfig {
        gamma: s.or("gamma", a.gamma, def.gamma)?,
        temperature: s.or("temperature", a.temperature, def.temperature)?,
        exact_match_required: s.or("exact_match", a.exact_match, def.exact_match_required)?,
    };
    let format = s.or("format", a.format, "jsonl".to_string())?;
    let out_path = s.path("out", a.out)?;
    s.finish()?;
    config.validate()?;
    if format != "jsonl" && format != "binary" {
        return Err(Error::InvalidConfig(format!("unknown delta format {format:?} (jsonl or binary)")));
    }

    let params = checkpoint::load_checkpoint(&ckpt_path)?;
    s.record("k", &params.k());
    s.record("expansion_factor", &params.expansion_factor());
    s.print("emit-delta", err)?;

    let bank = bank::load_bank(&bank_path)?;
    bank.check_fingerprint(&params)?;
    let names = load_names(manifest, &features_path)?;
    let reader = FeatureReader::open(&features_path)?;
    let header = reader.header();
    if header.position_kind != PositionKind::JobToken {
        return Err(Error::InvalidConfig(format!(
            "emit-delta needs job-token features, file holds {} positions",
            header.position_kind.as_str()
        )));
    }

    let mut records = Vec::new();
    for (prompt_id, rec) in reader.enumerate() {
        let rec = rec?;
        let name = names.get(&rec.profession_id).ok_or_else(|| {
            Error::InvalidConfig(format!("no name for profession id {} in manifest", rec.profession_id))
        })?;
        let sd = emit_delta(&rec.features, rec.token_position, name, &bank, &params, &config)?;
        records.push(DeltaRecord {
            prompt_id: prompt_id as u64,
            profession: name.clone(),
            token_position: sd.token_position,
            gamma: config.gamma,
            temperature: config.temperature,
            route: sd.route,
            weights: sd
                .weights
                .iter()
                .map(|(&i, &w)| (bank.entries[i].name.clone(), w))
                .collect(),
            delta: sd.delta,
        });
    }
    if format == "jsonl" {
        delta::save_delta_jsonl(&out_path, &records)?;
    } else {
        delta::save_delta_binary(&out_path, params.d(), &params.fingerprint(), &records)?;
    }
    writeln!(out, "wrote {} ({} deltas)", out_path.display(), records.len())?;
    Ok(())
}

fn cmd_metrics(a: MetricsArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut s = Settings::load(a.config.as_deref())?;
    let generations = s.get("generations", a.generations)?;
    let json = s.optional_path("json", a.json)?;
    s.finish()?;
    s.record(
        "generations",
        &generations.map_or_else(|| "inferred".to_string(), |c| c.to_string()),
    );
    for p in &a.predictions {
        s.record("predictions", &p.display());
    }
    s.print("metrics", err)?;

    let mut reports = Vec::with_capacity(a.predictions.len());
    for p in &a.predictions {
        let set = PredictionSet::load_csv(p, generations)?;
        reports.push(MetricsReport::compute(&set)?);
    }
    let json_doc = if let [only] = reports.as_slice() {
        write!(out, "{}", render_report(only))?;
        serde_json::to_value(only)?
    } else {
        for (p, r) in a.predictions.iter().zip(&reports) {
            writeln!(out, "== {}", p.display())?;
            write!(out, "{}", render_report(r))?;
            writeln!(out)?;
        }
        let agg = aggregate_seeds(&reports)?;
        writeln!(out, "== aggregate")?;
        write!(out, "{}", render_aggregate(&agg))?;
        serde_json::json!({ "per_seed": reports, "aggregate": agg })
    };
    if let Some(path) = json {
        write_atomic(&path, |w| {
            serde_json::to_writer_pretty(&mut *w, &json_doc)?;
            w.write_all(b"\n")?;
            Ok(())
        })?;
    }
    Ok(())
}

fn cmd_prompts(a: PromptsArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut s = Settings::load(a.config.as_deref())?;
    let list = s.path("professions", a.professions)?;
    let out_path = s.optional_path("out", a.out)?;
    s.finish()?;
    s.print("prompts", err)?;

    let text = fs::read_to_string(&list)?;
    let names: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let prompts = prompt_manifest(&names)?;
    let write_csv = |w: &mut dyn Write| -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["profession", "prompt_gender", "text"])?;
        for p in &prompts {
            csv.write_record([p.profession.as_str(), p.prompt_gender.as_str(), p.text.as_str()])?;
        }
        csv.flush()?;
        Ok(())
    };
    match out_path {
        Some(path) => {
            write_atomic(&path, |w| write_csv(w))?;
            writeln!(out, "wrote {} ({} prompts)", path.display(), prompts.len())?;
        }
        None => write_csv(out)?,
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs, out: &mut dyn Write) -> Result<()> {
    let mut head = [0u8; 4];
    let n = File::open(&a.path)?.read(&mut head)?;
    let head = &head[..n];
    if head == CHECKPOINT_MAGIC {
        let p = checkpoint::load_checkpoint(&a.path)?;
        writeln!(out, "type: checkpoint")?;
        writeln!(out, "d: {}", p.d())?;
        writeln!(out, "m: {}", p.m())?;
        writeln!(out, "k: {}", p.k())?;
        writeln!(out, "expansion_factor: {}", p.expansion_factor())?;
        writeln!(out, "normalize_decoder: {}", p.normalize_decoder())?;
        writeln!(out, "fingerprint: {}", p.fingerprint())?;
    } else if head == BANK_MAGIC {
        let b = bank::load_bank(&a.path)?;
        writeln!(out, "type: bank")?;
        writeln!(out, "strategy: {}", b.strategy)?;
        writeln!(out, "m: {}", b.m)?;
        writeln!(out, "professions: {}", b.len())?;
        writeln!(out, "sae_fingerprint: {}", b.sae_fingerprint)?;
        for (i, e) in b.entries.iter().enumerate() {
            writeln!(out, "  {i}: {} (male {}, female {})", e.name, e.n_male, e.n_female)?;
        }
    } else if head == FEATURE_MAGIC {
        let reader = FeatureReader::open(&a.path)?;
        let h = reader.header();
        let mut genders = [0u64; 2];
        let mut professions = BTreeSet::new();
        for rec in reader {
            let rec = rec?;
            genders[rec.gender as usize] += 1;
            professions.insert(rec.profession_id);
        }
        writeln!(out, "type: features")?;
        writeln!(out, "d: {}", h.d)?;
        writeln!(out, "records: {}", h.record_count)?;
        writeln!(out, "position_kind: {}", h.position_kind.as_str())?;
        writeln!(out, "male: {}", genders[0])?;
        writeln!(out, "female: {}", genders[1])?;
        writeln!(out, "professions: {}", professions.len())?;
        if let Some(m) = features::load_manifest(&a.path)? {
            writeln!(out, "source_model: {}", m.source_model)?;
            writeln!(out, "layer: {}", m.layer)?;
            writeln!(out, "extraction_date: {}", m.extraction_date)?;
        }
    } else if head == DELTA_MAGIC {
        let b = delta::load_delta_binary(&a.path)?;
        writeln!(out, "type: delta (binary)")?;
        writeln!(out, "d: {}", b.d)?;
        writeln!(out, "records: {}", b.records.len())?;
        writeln!(out, "sae_fingerprint: {}", b.sae_fingerprint)?;
        print_delta_summary(&b.records, out)?;
    } else if head.first() == Some(&b'{') {
        let records = delta::load_delta_jsonl(&a.path)?;
        writeln!(out, "type: delta (jsonl)")?;
        writeln!(out, "d: {}", records.first().map_or(0, |r| r.delta.len()))?;
        writeln!(out, "records: {}", records.len())?;
        print_delta_summary(&records, out)?;
    } else {
        return Err(Error::InvalidConfig(format!(
            "{}: unrecognized artifact (magic {:?})",
            a.path.display(),
            String::from_utf8_lossy(head)
        )));
    }
    Ok(())
}

fn print_delta_summary(records: &[DeltaRecord], out: &mut dyn Write) -> Result<()> {
    if let Some(r) = records.first() {
        writeln!(out, "gamma: {}", r.gamma)?;
        writeln!(out, "temperature: {}", r.temperature)?;
    }
    let mut routes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *routes.entry(r.route.as_str()).or_default() += 1;
    }
    for (route, n) in routes {
        writeln!(out, "route {route}: {n}")?;
    }
    Ok(())
}
