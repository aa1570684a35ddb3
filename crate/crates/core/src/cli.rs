//! Command-line surface: run configuration, the five commands, output
//! layout and exit codes.
//!
//! Each command writes into one output directory and finishes with a
//! `manifest.json` recording the command, the effective configuration hash,
//! the master seed and a digest of every file written. Outputs are a pure
//! function of input bytes, configuration and seed.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{apply_cohort_exclusions, parse_encounters, split_train_test, CohortSplit, Encounter, Region};
use crate::error::{Error, Result};
use crate::features::{schema, write_feature_table};
use crate::labeler::ComplicationKind;
use crate::learners::Family;
use crate::metrics::{
    auprc, auroc, bootstrap_ci, calibration_intercept, calibration_slope, pr_points, reliability_curve, roc_points,
    MetricResult, N_BOOTSTRAP, RELIABILITY_BINS,
};
use crate::pipeline::{
    derive_seed, ensemble_predict, predict_risk_vector, prepare_all, task_rows, train_all_complications, ModelBundle,
    PreparedEncounter, TrainConfig, K_FOLDS, N_SEARCH,
};
use crate::reportnlp::Lexicon;
use crate::shap::{rank_features, DEFAULT_TOP_K};
use crate::synth::{generate_synthetic, write_jsonl, SyntheticSpec};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const MODELS_FILE: &str = "models.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

fn default_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 4, 25).expect("valid date")
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Encounter file (one JSON object per line).
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    /// Report vocabulary; the built-in one when absent.
    pub lexicon: Option<PathBuf>,
    /// Model bundle for `evaluate` and `predict`.
    pub models: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            input: None,
            output: default_output(),
            lexicon: None,
            models: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapDataset {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub master_seed: u64,
    pub k: usize,
    pub n_search: usize,
    pub n_bootstrap: usize,
    pub families: Vec<Family>,
    pub complications: Vec<ComplicationKind>,
    /// Admissions on or before this date train; later ones test.
    pub split_cutoff: NaiveDate,
    /// Restrict to one region; both regions are pooled when absent.
    pub region: Option<Region>,
    pub shap_dataset: ShapDataset,
    pub shap_top_k: usize,
    /// Upper bound on rows used for attributions (first rows in input order).
    pub shap_max_rows: usize,
    pub synth: SyntheticSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            master_seed: 0,
            k: K_FOLDS,
            n_search: N_SEARCH,
            n_bootstrap: N_BOOTSTRAP,
            families: Family::ALL.to_vec(),
            complications: ComplicationKind::ALL.to_vec(),
            split_cutoff: default_cutoff(),
            region: None,
            shap_dataset: ShapDataset::Test,
            shap_top_k: DEFAULT_TOP_K,
            shap_max_rows: 500,
            synth: SyntheticSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.paths.input.as_mut().map(fix);
        cfg.paths.lexicon.as_mut().map(fix);
        cfg.paths.models.as_mut().map(fix);
        fix(&mut cfg.paths.output);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.n_search < 2 {
            return Err(Error::Config(format!(
                "n_search must be at least 2, got {}",
                self.n_search
            )));
        }
        if self.families.is_empty() || self.complications.is_empty() {
            return Err(Error::Config("families and complications must be non-empty".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            master_seed: self.master_seed,
            k: self.k,
            n_search: self.n_search,
            families: self.families.clone(),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }

    fn input(&self) -> Result<&Path> {
        self.paths
            .input
            .as_deref()
            .ok_or_else(|| Error::Config("paths.input is required for this command".into()))
    }

    fn lexicon(&self) -> Result<Lexicon> {
        match &self.paths.lexicon {
            Some(p) => Lexicon::load(p),
            None => Ok(Lexicon::default()),
        }
    }

    fn models_path(&self) -> PathBuf {
        self.paths
            .models
            .clone()
            .unwrap_or_else(|| self.paths.output.join(MODELS_FILE))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub files: Vec<ManifestEntry>,
}

/// Tracks files written into one run directory.
struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    fn create(root: &Path) -> Result<RunDir> {
        fs::create_dir_all(root)?;
        Ok(RunDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create_file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.root.join(name))?))
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut f = self.create_file(name)?;
        f.write_all(bytes)?;
        f.flush()?;
        Ok(())
    }

    fn finish(self, command: &str, cfg: &RunConfig) -> Result<Manifest> {
        let mut files = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let bytes = fs::read(self.root.join(name))?;
            files.push(ManifestEntry {
                path: name.clone(),
                sha256: hex(&Sha256::digest(&bytes)),
            });
        }
        let manifest = Manifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: cfg.digest(),
            master_seed: cfg.master_seed,
            files,
        };
        let mut f = BufWriter::new(File::create(self.root.join(MANIFEST_FILE))?);
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(manifest)
    }
}

/// Parsed and cohort-filtered input.
struct Loaded {
    kept: Vec<Encounter>,
    log: Vec<(String, String)>,
}

fn load_cohort(path: &Path) -> Result<Loaded> {
    let file =
        File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let parsed = parse_encounters(BufReader::new(file))?;
    let mut log: Vec<(String, String)> = parsed
        .errors
        .iter()
        .map(|e| {
            warn!("line {}: {}", e.line, e.message);
            (
                e.encounter_id.clone().unwrap_or_else(|| format!("line {}", e.line)),
                format!("parse error: {}", e.message),
            )
        })
        .collect();
    if parsed.encounters.is_empty() {
        return Err(Error::EmptyInput("no valid encounters in input"));
    }
    let filtered = apply_cohort_exclusions(parsed.encounters);
    log.extend(filtered.excluded.iter().map(|(id, r)| (id.clone(), r.to_string())));
    Ok(Loaded {
        kept: filtered.kept,
        log,
    })
}

fn select_split(cfg: &RunConfig, kept: Vec<Encounter>) -> CohortSplit {
    let mut by_region = split_train_test(kept, cfg.split_cutoff);
    match cfg.region {
        Some(r) => by_region.remove(&r).unwrap_or_default(),
        None => CohortSplit::merge(by_region.into_values()),
    }
}

fn write_exclusions(run: &mut RunDir, name: &str, rows: &[(String, String)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(run.create_file(name)?);
    w.write_record(["encounter_id", "reason"])?;
    for (id, reason) in rows {
        w.write_record([id, reason])?;
    }
    w.flush()?;
    Ok(())
}

/// `synth`: writes `cohort.jsonl` from the config's synthetic spec.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = RunDir::create(&cfg.paths.output)?;
    let records = generate_synthetic(&cfg.synth)?;
    let mut w = run.create_file("cohort.jsonl")?;
    write_jsonl(&mut w, &records)?;
    w.flush()?;
    info!("wrote {} synthetic encounters", records.len());
    run.finish("synth", cfg)
}

/// `label`: label table, feature table and exclusion log.
pub fn cmd_label(cfg: &RunConfig) -> Result<Manifest> {
    let lexicon = cfg.lexicon()?;
    let loaded = load_cohort(cfg.input()?)?;
    let prepared = prepare_all(&loaded.kept, &lexicon);
    let mut run = RunDir::create(&cfg.paths.output)?;

    let mut w = csv::Writer::from_writer(run.create_file("labels.csv")?);
    let mut header = vec!["encounter_id".to_string()];
    header.extend(ComplicationKind::ALL.iter().map(|k| format!("{}_onset_min", k.code())));
    w.write_record(&header)?;
    for p in &prepared {
        let mut row = vec![p.encounter_id.clone()];
        row.extend(
            p.labels
                .0
                .iter()
                .map(|l| l.first_time.map_or_else(|| "NA".to_string(), |t| t.to_string())),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    drop(w);

    let rows: Vec<(&str, &_)> = prepared
        .iter()
        .map(|p| (p.encounter_id.as_str(), &p.features))
        .collect();
    let mut fw = run.create_file("features.csv")?;
    write_feature_table(&mut fw, &rows)?;
    fw.flush()?;
    drop(fw);

    write_exclusions(&mut run, "exclusions.csv", &loaded.log)?;
    run.finish("label", cfg)
}

#[derive(Debug, Clone)]
struct Splits {
    train: Vec<PreparedEncounter>,
    test: Vec<PreparedEncounter>,
    log: Vec<(String, String)>,
}

fn load_splits(cfg: &RunConfig) -> Result<Splits> {
    let lexicon = cfg.lexicon()?;
    let loaded = load_cohort(cfg.input()?)?;
    let split = select_split(cfg, loaded.kept);
    let mut log = loaded.log;
    log.extend(split.excluded.iter().map(|(id, r)| (id.clone(), r.to_string())));
    Ok(Splits {
        train: prepare_all(&split.train, &lexicon),
        test: prepare_all(&split.test, &lexicon),
        log,
    })
}

/// `train`: model bundle plus a per-family validation table.
pub fn cmd_train(cfg: &RunConfig) -> Result<Manifest> {
    let splits = load_splits(cfg)?;
    info!("training on {} encounters", splits.train.len());
    let bundle = train_all_complications(&splits.train, &cfg.complications, &cfg.train_config());
    let mut run = RunDir::create(&cfg.paths.output)?;
    run.write(MODELS_FILE, bundle.to_json()?.as_bytes())?;

    let mut w = csv::Writer::from_writer(run.create_file("validation.csv")?);
    w.write_record([
        "complication",
        "family",
        "mean_val_auroc",
        "mean_val_auprc",
        "failed_candidates",
        "selected",
        "note",
    ])?;
    for v in &bundle.validation {
        for f in &v.families {
            let fmt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
            w.write_record([
                v.complication.code().to_string(),
                f.family.code().to_string(),
                fmt(f.mean_val_auroc),
                fmt(f.mean_val_auprc),
                f.n_failed.to_string(),
                (f.family == v.selected).to_string(),
                f.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    for fail in &bundle.failures {
        w.write_record([
            fail.complication.code(),
            "",
            "NA",
            "NA",
            "",
            "false",
            fail.error.as_str(),
        ])?;
    }
    w.flush()?;
    drop(w);
    write_exclusions(&mut run, "exclusions.csv", &splits.log)?;
    run.finish("train", cfg)
}

fn load_bundle(cfg: &RunConfig) -> Result<ModelBundle> {
    let path = cfg.models_path();
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    ModelBundle::from_json(&text)
}

/// A metric with its interval, or why it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricEntry {
    Value(MetricResult),
    Unavailable { unavailable: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub auroc: MetricEntry,
    pub auprc: MetricEntry,
    pub calibration_slope: MetricEntry,
    pub calibration_intercept: MetricEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplicationReport {
    pub complication: ComplicationKind,
    pub family: Family,
    pub n_rows: usize,
    pub n_positive: usize,
    pub n_excluded: usize,
    pub metrics: MetricSet,
    pub top_features: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub complications: Vec<ComplicationReport>,
}

fn metric_entry<F>(metric: F, scores: &[f64], labels: &[bool], n: usize, seed: u64) -> MetricEntry
where
    F: Fn(&[f64], &[bool]) -> Result<f64> + Sync,
{
    match bootstrap_ci(metric, scores, labels, n, seed) {
        Ok(r) => MetricEntry::Value(r),
        Err(e) => MetricEntry::Unavailable {
            unavailable: e.to_string(),
        },
    }
}

fn write_points(run: &mut RunDir, name: &str, header: [&str; 2], pts: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(run.create_file(name)?);
    w.write_record(header)?;
    for (a, b) in pts {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `evaluate`: test-set metrics with bootstrap intervals, curve point
/// series and feature rankings.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Manifest> {
    let bundle = load_bundle(cfg)?;
    let splits = load_splits(cfg)?;
    let mut run = RunDir::create(&cfg.paths.output)?;
    let mut reports = Vec::new();
    let mut shap_rows: Vec<(String, usize, String, f64)> = Vec::new();

    for ens in &bundle.ensembles {
        let kind = ens.complication;
        if !cfg.complications.contains(&kind) {
            continue;
        }
        let task = task_rows(&splits.test, kind);
        let scores: Vec<f64> = task
            .rows
            .iter()
            .map(|x| Ok(ensemble_predict(ens, x)?.value()))
            .collect::<Result<_>>()?;
        let y = &task.outcomes;
        let seed = |m: &str| derive_seed(cfg.master_seed, &format!("bootstrap/{kind}/{m}"));
        let n = cfg.n_bootstrap;
        let metrics = MetricSet {
            auroc: metric_entry(auroc, &scores, y, n, seed("auroc")),
            auprc: metric_entry(auprc, &scores, y, n, seed("auprc")),
            calibration_slope: metric_entry(calibration_slope, &scores, y, n, seed("slope")),
            calibration_intercept: metric_entry(calibration_intercept, &scores, y, n, seed("intercept")),
        };

        if let Ok(pts) = roc_points(&scores, y) {
            write_points(&mut run, &format!("roc_{}.csv", kind.code()), ["fpr", "tpr"], &pts)?;
        }
        if let Ok(pts) = pr_points(&scores, y) {
            write_points(
                &mut run,
                &format!("pr_{}.csv", kind.code()),
                ["recall", "precision"],
                &pts,
            )?;
        }
        if !scores.is_empty() {
            let curve = reliability_curve(&scores, y, RELIABILITY_BINS)?;
            let mut w = csv::Writer::from_writer(run.create_file(&format!("reliability_{}.csv", kind.code()))?);
            w.write_record(["mean_predicted", "observed_rate", "count"])?;
            for b in &curve.bins {
                w.write_record([
                    b.mean_predicted.to_string(),
                    b.observed_rate.to_string(),
                    b.count.to_string(),
                ])?;
            }
            w.flush()?;
        }

        let shap_source = match cfg.shap_dataset {
            ShapDataset::Test => task.rows.clone(),
            ShapDataset::Train => task_rows(&splits.train, kind).rows,
        };
        let shap_source = &shap_source[..shap_source.len().min(cfg.shap_max_rows)];
        let top_features = match rank_features(ens, shap_source) {
            Ok(r) => r.top(cfg.shap_top_k).to_vec(),
            Err(e) => {
                info!("{kind}: {e}");
                Vec::new()
            }
        };
        for (i, (slot, v)) in top_features.iter().enumerate() {
            shap_rows.push((kind.code().to_string(), i + 1, slot.clone(), *v));
        }
        reports.push(ComplicationReport {
            complication: kind,
            family: ens.family,
            n_rows: task.len(),
            n_positive: task.n_positive(),
            n_excluded: task.excluded.len(),
            metrics,
            top_features,
        });
    }

    let report = EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        complications: reports,
    };
    let mut f = run.create_file("evaluation.json")?;
    serde_json::to_writer_pretty(&mut f, &report)?;
    f.write_all(b"\n")?;
    f.flush()?;
    drop(f);

    let mut w = csv::Writer::from_writer(run.create_file("shap_rankings.csv")?);
    w.write_record(["complication", "rank", "slot", "mean_abs_shap"])?;
    for (c, r, s, v) in &shap_rows {
        w.write_record([c.clone(), r.to_string(), s.clone(), v.to_string()])?;
    }
    w.flush()?;
    drop(w);
    run.finish("evaluate", cfg)
}

/// Renders a risk as a whole percentage, e.g. 0.54 as "54%".
pub fn format_percent(p: f64) -> String {
    format!("{}%", (p * 100.0).round() as i64)
}

/// `predict`: one risk vector per encounter in the input.
pub fn cmd_predict(cfg: &RunConfig, percent: bool) -> Result<Manifest> {
    let bundle = load_bundle(cfg)?;
    let lexicon = cfg.lexicon()?;
    let loaded = load_cohort(cfg.input()?)?;
    let prepared = prepare_all(&loaded.kept, &lexicon);
    let mut run = RunDir::create(&cfg.paths.output)?;
    let mut w = csv::Writer::from_writer(run.create_file("predictions.csv")?);
    let mut header = vec!["encounter_id".to_string()];
    header.extend(ComplicationKind::ALL.iter().map(|k| k.code().to_string()));
    w.write_record(&header)?;
    for p in &prepared {
        let risks = predict_risk_vector(&bundle, p)?;
        let mut row = vec![p.encounter_id.clone()];
        row.extend(risks.iter().map(|r| match r {
            None => "NA".to_string(),
            Some(v) if percent => format_percent(*v),
            Some(v) => format!("{v:.6}"),
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    drop(w);
    write_exclusions(&mut run, "exclusions.csv", &loaded.log)?;
    run.finish("predict", cfg)
}

#[derive(Debug, Parser)]
#[command(
    name = "complication-risk",
    version,
    about = "In-hospital complication risk: label, train, evaluate, predict"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory for this run.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Label complications and extract features.
    Label,
    /// Train and select one ensemble per complication.
    Train,
    /// Score the test split with bootstrap intervals.
    Evaluate {
        /// Model bundle; defaults to paths.models.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Emit risk vectors for every encounter in the input.
    Predict {
        #[arg(long)]
        models: Option<PathBuf>,
        /// Render risks as percentages.
        #[arg(long)]
        percent: bool,
    },
    /// Generate a synthetic cohort.
    Synth,
}

/// Exit code for an error raised while running a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidLexicon(_) | Error::InvalidSynthSpec(_) | Error::InvalidHyperParams(_) => {
            EXIT_USAGE
        }
        Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::SchemaVersion { .. }
        | Error::EmptyInput(_)
        | Error::DimensionMismatch { .. }
        | Error::DegenerateLabels
        | Error::UntrainableTask(_)
        | Error::InsufficientStrata { .. } => EXIT_DATA,
        _ => EXIT_INTERNAL,
    }
}

/// Applies flag overrides to the loaded (or default) configuration.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.paths.output = out.clone();
    }
    match &cli.command {
        Command::Evaluate { models: Some(m) } | Command::Predict { models: Some(m), .. } => {
            cfg.paths.models = Some(m.clone());
        }
        _ => {}
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Manifest> {
    schema().check_integrity()?;
    let cfg = resolve_config(cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Label => cmd_label(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Evaluate { .. } => cmd_evaluate(&cfg),
        Command::Predict { percent, .. } => cmd_predict(&cfg, *percent),
        Command::Synth => cmd_synth(&cfg),
    })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(m) => {
            info!("{}: wrote {} files", m.command, m.files.len());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_protocol() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!((c.k, c.n_search, c.n_bootstrap), (3, 20, 1000));
        assert_eq!(c.families, Family::ALL.to_vec());
        assert_eq!(c.complications.len(), 7);
        assert_eq!(c.split_cutoff, NaiveDate::from_ymd_opt(2020, 4, 25).unwrap());
        assert_eq!(c.shap_dataset, ShapDataset::Test);
    }

    #[test]
    fn config_overrides_parse() {
        let c = RunConfig::from_toml(
            "master_seed = 9\nfamilies = [\"lr\"]\nregion = \"A_middle\"\n[paths]\ninput = \"x.jsonl\"\n[synth]\nn_encounters = 10\n",
        )
        .unwrap();
        assert_eq!(c.master_seed, 9);
        assert_eq!(c.families, vec![Family::Lr]);
        assert_eq!(c.region, Some(Region::AMiddle));
        assert_eq!(c.synth.n_encounters, 10);
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("k = 1"), Err(Error::Config(_))));
    }

    #[test]
    fn percent_rendering() {
        assert_eq!(format_percent(0.54), "54%");
        assert_eq!(format_percent(0.005), "1%");
        assert_eq!(format_percent(0.0), "0%");
    }

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::EmptyInput("x")), EXIT_DATA);
        assert_eq!(exit_code(&Error::AllFamiliesFailed), EXIT_INTERNAL);
        assert_eq!(main_with_args(["complication-risk", "--bogus"]), EXIT_USAGE);
    }
}
