//! Config-driven runs of the rn-anomaly detectors.
//!
//! A run config is a JSON object:
//!
//! ```json
//! {
//!   "mode": "supervised",
//!   "seed": 7,
//!   "dataset": { "path": "data.csv", "label_column": "label", "label_convention": "one_is_anomaly" },
//!   "train": { "epochs": 50 },
//!   "output_dir": "out"
//! }
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use rn_anomaly::cblof::{write_scores_csv, UnsupervisedConfig, Variant};
use rn_anomaly::clustering::ClusterDocument;
use rn_anomaly::data::{load_csv, LabelConvention};
use rn_anomaly::neural::TrainConfig;
use rn_anomaly::pac::{excess_risk_curve, MixtureSpec, StudyConfig, Trainer, MIN_EVAL_SIZE};
use rn_anomaly::pipeline::{run_supervised, run_unsupervised};
use rn_anomaly::{Dataset, Standardizer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "supervised")]
    Supervised,
    #[serde(rename = "unsupervised-cblof")]
    UnsupervisedCblof,
    #[serde(rename = "unsupervised-ecblof")]
    UnsupervisedEcblof,
    #[serde(rename = "unsupervised-cblof-mod")]
    UnsupervisedCblofMod,
    #[serde(rename = "pac-study")]
    PacStudy,
}

pub const MODES: [&str; 5] = [
    "supervised",
    "unsupervised-cblof",
    "unsupervised-ecblof",
    "unsupervised-cblof-mod",
    "pac-study",
];

impl Mode {
    fn variant(self) -> Option<Variant> {
        match self {
            Mode::UnsupervisedCblof => Some(Variant::Cblof),
            Mode::UnsupervisedEcblof => Some(Variant::Ecblof),
            Mode::UnsupervisedCblofMod => Some(Variant::CblofMod),
            _ => None,
        }
    }

    fn needs_dataset(self) -> bool {
        self != Mode::PacStudy
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    pub label_convention: LabelConvention,
}

fn default_label_column() -> String {
    "label".into()
}

/// Study parameters; the mixture is either spelled out in `spec` or named by
/// `preset` together with `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub spec: Option<MixtureSpec>,
    pub train_sizes: Vec<usize>,
    pub seeds_per_point: usize,
    pub trainer: Trainer,
    #[serde(default = "default_eval")]
    pub n_eval: usize,
}

fn default_eval() -> usize {
    MIN_EVAL_SIZE
}

impl StudySection {
    fn to_config(&self, train: TrainConfig, seed: u64) -> rn_anomaly::Result<StudyConfig> {
        let spec = match (&self.spec, &self.preset) {
            (Some(spec), None) => spec.clone(),
            (None, Some(name)) => {
                let alpha = self
                    .alpha
                    .ok_or_else(|| rn_anomaly::Error::param("alpha", "a preset needs an alpha"))?;
                MixtureSpec::preset(name, alpha)?
            }
            _ => {
                return Err(rn_anomaly::Error::param(
                    "spec",
                    "give exactly one of `spec` or `preset`",
                ))
            }
        };
        let config = StudyConfig {
            spec,
            train_sizes: self.train_sizes.clone(),
            seeds_per_point: self.seeds_per_point,
            trainer: self.trainer,
            n_eval: self.n_eval,
            train,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: Option<DatasetSection>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Supervised only: unit class weights when false.
    #[serde(default = "default_true")]
    pub weighted: bool,
    #[serde(default)]
    pub clustering: UnsupervisedConfig,
    #[serde(default)]
    pub study: Option<StudySection>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_true() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// One problem found in a config, addressed by a dotted field path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Failure of a CLI command, split by exit status.
#[derive(Debug)]
pub enum CliError {
    /// exit 2
    Config(Vec<Diagnostic>),
    /// exit 1
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// Machine-readable form for stderr.
    pub fn to_json(&self) -> Value {
        match self {
            CliError::Config(diags) => {
                serde_json::json!({ "error": "invalid config", "kind": "config", "diagnostics": diags })
            }
            CliError::Runtime(e) => {
                let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
                serde_json::json!({ "error": e.to_string(), "kind": "runtime", "context": chain })
            }
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn typed<T: serde::de::DeserializeOwned>(v: &Value, field: &str, out: &mut Vec<Diagnostic>) -> Option<T> {
    match serde_json::from_value(v.clone()) {
        Ok(t) => Some(t),
        Err(e) => {
            out.push(Diagnostic::new(field, e.to_string()));
            None
        }
    }
}

/// Structural checks on a parsed config. Empty means runnable.
pub fn diagnose(value: &Value, base: &Path) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let Some(obj) = value.as_object() else {
        out.push(Diagnostic::new("$", "config must be a JSON object"));
        return out;
    };
    const KNOWN: [&str; 8] = [
        "mode",
        "seed",
        "dataset",
        "train",
        "weighted",
        "clustering",
        "study",
        "output_dir",
    ];
    for key in obj.keys().filter(|k| !KNOWN.contains(&k.as_str())) {
        out.push(Diagnostic::new(key.as_str(), "unknown field"));
    }

    let mode = match obj.get("mode") {
        None => {
            out.push(Diagnostic::new("mode", format!("missing; one of {}", MODES.join(", "))));
            None
        }
        Some(v) => match serde_json::from_value::<Mode>(v.clone()) {
            Ok(m) => Some(m),
            Err(_) => {
                out.push(Diagnostic::new(
                    "mode",
                    format!("{v} is not one of {}", MODES.join(", ")),
                ));
                None
            }
        },
    };
    if let Some(v) = obj.get("seed") {
        if v.as_u64().is_none() {
            out.push(Diagnostic::new("seed", "must be a non-negative integer"));
        }
    }
    if let Some(v) = obj.get("weighted") {
        if !v.is_boolean() {
            out.push(Diagnostic::new("weighted", "must be a boolean"));
        }
    }
    if let Some(v) = obj.get("output_dir") {
        if !v.is_string() {
            out.push(Diagnostic::new("output_dir", "must be a string"));
        }
    }

    let train: Option<TrainConfig> = match obj.get("train") {
        Some(v) => typed(v, "train", &mut out),
        None => Some(TrainConfig::default()),
    };
    if let Some(Err(e)) = train.as_ref().map(TrainConfig::validate) {
        out.push(Diagnostic::new("train", e.to_string()));
    }
    if let Some(v) = obj.get("clustering") {
        if let Some(c) = typed::<UnsupervisedConfig>(v, "clustering", &mut out) {
            if let Err(e) = c.validate() {
                out.push(Diagnostic::new("clustering", e.to_string()));
            }
        }
    }

    let needs_dataset = mode.is_none_or(Mode::needs_dataset);
    match obj.get("dataset") {
        Some(ds) => diagnose_dataset(ds, base, &mut out),
        None if needs_dataset && mode.is_some() => out.push(Diagnostic::new("dataset", "missing")),
        None => {}
    }

    match obj.get("study") {
        Some(v) => {
            if let Some(s) = typed::<StudySection>(v, "study", &mut out) {
                let seed = obj.get("seed").and_then(Value::as_u64).unwrap_or(0);
                if let Err(e) = s.to_config(train.unwrap_or_default(), seed) {
                    out.push(Diagnostic::new("study", e.to_string()));
                }
            }
        }
        None if mode == Some(Mode::PacStudy) => out.push(Diagnostic::new("study", "missing")),
        None => {}
    }
    out
}

fn diagnose_dataset(ds: &Value, base: &Path, out: &mut Vec<Diagnostic>) {
    let Some(obj) = ds.as_object() else {
        out.push(Diagnostic::new("dataset", "must be an object"));
        return;
    };
    for key in obj
        .keys()
        .filter(|k| !["path", "label_column", "label_convention"].contains(&k.as_str()))
    {
        out.push(Diagnostic::new(format!("dataset.{key}"), "unknown field"));
    }
    match obj.get("path").map(|p| p.as_str()) {
        None => out.push(Diagnostic::new("dataset.path", "missing")),
        Some(None) => out.push(Diagnostic::new("dataset.path", "must be a string")),
        Some(Some(p)) => {
            let full = resolve(base, Path::new(p));
            if !full.is_file() {
                out.push(Diagnostic::new(
                    "dataset.path",
                    format!("{} does not exist", full.display()),
                ));
            }
        }
    }
    if let Some(v) = obj.get("label_column") {
        if !v.is_string() {
            out.push(Diagnostic::new("dataset.label_column", "must be a string"));
        }
    }
    match obj.get("label_convention") {
        None => out.push(Diagnostic::new(
            "dataset.label_convention",
            "missing; one of one_is_anomaly, one_is_inline",
        )),
        Some(v) => {
            if serde_json::from_value::<LabelConvention>(v.clone()).is_err() {
                out.push(Diagnostic::new(
                    "dataset.label_convention",
                    format!("{v} is not one of one_is_anomaly, one_is_inline"),
                ));
            }
        }
    }
}

/// Reads and checks the config at `path`. Only an unreadable or unparsable
/// file is an error.
pub fn cmd_validate(path: &Path) -> anyhow::Result<Vec<Diagnostic>> {
    let value = read_json(path)?;
    Ok(diagnose(&value, &base_dir(path)))
}

/// Command-line overrides of config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Parses, validates and applies overrides. Paths in the result are resolved.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let value = read_json(path).map_err(|e| CliError::Config(vec![Diagnostic::new("$", format!("{e:#}"))]))?;
    let base = base_dir(path);
    let diags = diagnose(&value, &base);
    if !diags.is_empty() {
        return Err(CliError::Config(diags));
    }
    let mut config: RunConfig =
        serde_json::from_value(value).map_err(|e| CliError::Config(vec![Diagnostic::new("$", e.to_string())]))?;
    if let Some(ds) = config.dataset.as_mut() {
        ds.path = resolve(&base, &ds.path);
    }
    config.output_dir = match &overrides.out {
        Some(o) => o.clone(),
        None => resolve(&base, &config.output_dir),
    };
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    Ok(config)
}

/// What a run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub artifacts: Vec<String>,
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn create(&mut self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn with<F>(&mut self, name: &str, f: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
    {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn thresholds_csv(w: &mut impl Write, dataset: &str, threshold: f64) -> anyhow::Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["dataset", "optimal_threshold"])?;
    c.write_record([dataset, &threshold.to_string()])?;
    c.flush()?;
    Ok(())
}

/// Stored unsupervised model: the cluster summary plus what is needed to score
/// new rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnsupervisedModelDocument {
    pub variant: Variant,
    pub standardizer: Standardizer,
    pub clusters: ClusterDocument,
    /// Per-cluster weight applied to the distance term.
    pub cluster_weights: Vec<f64>,
    pub config: UnsupervisedConfig,
}

/// Supervised `audit.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditDocument {
    #[serde(flatten)]
    pub audit: rn_anomaly::pipeline::Audit,
    pub alpha_hat: f64,
    pub w_inline: f64,
    pub w_anomaly: f64,
    pub threshold_fallback: bool,
    pub config_digest: String,
}

fn load_dataset(ds: &DatasetSection) -> anyhow::Result<Dataset> {
    let (data, report) = load_csv(&ds.path, &ds.label_column, ds.label_convention)
        .with_context(|| format!("loading {}", ds.path.display()))?;
    if report.rows_rejected > 0 {
        log::warn!("{} rows with missing values were dropped", report.rows_rejected);
    }
    log::info!(
        "loaded {} rows ({} inline, {} anomalous)",
        data.n_rows(),
        report.n_inline,
        report.n_anomaly
    );
    Ok(data)
}

/// Executes a validated config, writing artifacts into `config.output_dir`.
pub fn execute(config: &RunConfig) -> anyhow::Result<RunSummary> {
    fs::create_dir_all(&config.output_dir).with_context(|| format!("creating {}", config.output_dir.display()))?;
    let mut art = Artifacts {
        dir: config.output_dir.clone(),
        written: Vec::new(),
    };
    match config.mode {
        Mode::Supervised => {
            let data = load_dataset(config.dataset.as_ref().context("dataset section missing")?)?;
            let out = run_supervised(&data, &config.train, config.seed, config.weighted).context("supervised run")?;
            let digest = config.train.digest();
            art.json("report.json", &out.report)?;
            art.with("thresholds.csv", |w| {
                thresholds_csv(w, &data.name, out.report.threshold)
            })?;
            art.json("model.json", &out.model.to_document(digest.clone()))?;
            art.with("trace.csv", |w| Ok(out.trace.write_csv(w)?))?;
            art.json(
                "audit.json",
                &AuditDocument {
                    audit: out.audit.clone(),
                    alpha_hat: out.alpha_hat,
                    w_inline: out.weights.w_inline,
                    w_anomaly: out.weights.w_anomaly,
                    threshold_fallback: out.threshold_fallback,
                    config_digest: digest,
                },
            )?;
            art.with("scores.csv", |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["row_index", "score", "label"])?;
                for (&row, &s) in out.split.test.iter().zip(&out.test_scores) {
                    let label = if data.labels()[row].is_anomaly() {
                        "anomaly"
                    } else {
                        "inline"
                    };
                    c.write_record([row.to_string(), s.to_string(), label.to_string()])?;
                }
                c.flush()?;
                Ok(())
            })?;
        }
        Mode::UnsupervisedCblof | Mode::UnsupervisedEcblof | Mode::UnsupervisedCblofMod => {
            let variant = config.mode.variant().expect("unsupervised mode");
            let data = load_dataset(config.dataset.as_ref().context("dataset section missing")?)?;
            let out = run_unsupervised(&data, &config.clustering, variant, config.seed).context("unsupervised run")?;
            art.json("report.json", &out.report)?;
            art.with("thresholds.csv", |w| {
                thresholds_csv(w, &data.name, out.report.threshold)
            })?;
            let doc = UnsupervisedModelDocument {
                variant,
                standardizer: out.standardizer.clone(),
                clusters: ClusterDocument::from(&out.detector.model),
                cluster_weights: (0..out.detector.model.m())
                    .map(|k| out.detector.cluster_weight(k))
                    .collect(),
                config: config.clustering.clone(),
            };
            art.json("model.json", &doc)?;
            art.with("scores.csv", |w| Ok(write_scores_csv(&out.points, variant, w)?))?;
        }
        Mode::PacStudy => {
            let section = config.study.as_ref().context("study section missing")?;
            let study = section.to_config(config.train.clone(), config.seed)?;
            let (curve, cells) = excess_risk_curve(&study).context("learnability study")?;
            art.with("curve.csv", |w| Ok(curve.write_csv(w)?))?;
            art.with("cells.jsonl", |w| {
                for c in &cells {
                    serde_json::to_writer(&mut *w, c)?;
                    writeln!(w)?;
                }
                Ok(())
            })?;
            art.json(
                "report.json",
                &serde_json::json!({
                    "curve": curve,
                    "decay_violations": curve.decay_violations(),
                    "study": study,
                }),
            )?;
        }
    }
    Ok(RunSummary {
        mode: config.mode,
        output_dir: config.output_dir.clone(),
        artifacts: art.written,
    })
}

/// `run`: load, validate, execute.
pub fn cmd_run(path: &Path, overrides: &Overrides) -> Result<RunSummary, CliError> {
    let config = load_config(path, overrides)?;
    Ok(execute(&config)?)
}
