//! The `photoscore` command line.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O or file
//! format error, 4 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, DataError, Dataset, SizePolicy, SynthSpec};
use crate::linalg::LinalgError;
use crate::measures::{self, ConfusionMatrix, MeasureError, ModelFamilyLedger, ParseLedgerError, Selection};
use crate::nn::{self, NnError, TrainConfig};
use crate::rsrl::{self, RsrlConfig, RsrlError};
use crate::saliency::{self, FeatureMapStack, SaliencyError};
use crate::score::{ScoreClass, NUM_CLASSES};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn with_path(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Config(m) => CliError::Config(format!("{p}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{p}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{p}: {m}")),
        }
    }
}

fn load_model(path: &Path) -> Result<nn::NetworkModel, CliError> {
    nn::load_model(path).map_err(|e| CliError::from(e).with_path(path))
}

fn io_err(context: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{context} {}: {e}", path.display()))
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFiniteLoss(_) => CliError::Numeric(format!("nn: {e}")),
            NnError::BadConfig(_) | NnError::BatchTooSmall(_) => CliError::Config(format!("nn: {e}")),
            _ => CliError::Io(format!("nn: {e}")),
        }
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        CliError::Numeric(format!("measures: {e}"))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::BadRatio(_) | DataError::BadSpec(_) | DataError::ClassTooSmall { .. } => {
                CliError::Config(format!("data: {e}"))
            }
            _ => CliError::Io(format!("data: {e}")),
        }
    }
}

impl From<RsrlError> for CliError {
    fn from(e: RsrlError) -> Self {
        match e {
            RsrlError::Config(_) => CliError::Config(format!("rsrl: {e}")),
            RsrlError::Training { source: NnError::NonFiniteLoss(_), .. } => CliError::Numeric(format!("rsrl: {e}")),
            RsrlError::Training { .. } => CliError::Io(format!("rsrl: {e}")),
            RsrlError::Nn(inner) => inner.into(),
            RsrlError::Measure(inner) => inner.into(),
            RsrlError::Data(inner) => inner.into(),
        }
    }
}

impl From<SaliencyError> for CliError {
    fn from(e: SaliencyError) -> Self {
        CliError::Numeric(format!("saliency: {e}"))
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        CliError::Numeric(format!("linalg: {e}"))
    }
}

/// Paths section of the run configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// CSV index of a labeled dataset.
    pub index: Option<PathBuf>,
    /// Directory that index paths are relative to (defaults to the index's directory).
    pub root: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Structured run configuration, read from a TOML file with sections
/// `[train]`, `[rsrl]`, `[synth]` and `[paths]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub rsrl: RsrlConfig,
    pub synth: SynthSpec,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Sets every seed in the configuration.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.rng_seed = seed;
        self.rsrl.rng_seed = seed;
        self.synth.seed = seed;
    }

    pub fn rsrl_config(&self) -> RsrlConfig {
        RsrlConfig { train: self.train.clone(), ..self.rsrl.clone() }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "photoscore",
    version,
    about = "Photo score prediction with self-revised learning and FD model selection"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Omit timestamps from reports so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    /// Eight-class confusion over scores 2..=9.
    Perclass,
    /// Low (score < 5) versus high.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SizeArg {
    Reject,
    CenterCrop,
    Letterbox,
}

impl From<SizeArg> for SizePolicy {
    fn from(a: SizeArg) -> Self {
        match a {
            SizeArg::Reject => SizePolicy::Reject,
            SizeArg::CenterCrop => SizePolicy::CenterCrop,
            SizeArg::Letterbox => SizePolicy::Letterbox,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic imbalanced dataset (PPM images plus index.csv).
    Synth {
        /// Overrides `synth.count`.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Run self-revised learning; writes per-iteration models, ledger.txt and drops.txt.
    Rsrl {
        /// Dataset index; without one a synthetic dataset is generated from `[synth]`.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Overrides `rsrl.max_iterations`.
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Overrides `train.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
        /// How to handle images that are not 227x227.
        #[arg(long, value_enum, default_value = "reject")]
        resize: SizeArg,
    },
    /// Print the D-measure and per-node nearest distances of a model's final FC layer.
    Measure { model: PathBuf },
    /// Apply FD selection to a ledger report.
    Select {
        ledger: PathBuf,
        /// Overrides the FD threshold stored in the ledger.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Predict a score by blending the F_all-optimal and D-optimal models.
    Predict { model_f: PathBuf, model_d: PathBuf, image: PathBuf },
    /// Write FFP and AIR images for one image.
    Explain { model: PathBuf, image: PathBuf },
    /// Evaluate a model on an indexed dataset.
    Eval {
        model: PathBuf,
        index: PathBuf,
        #[arg(long, value_enum, default_value = "perclass")]
        mode: EvalMode,
        /// How to handle images that are not 227x227.
        #[arg(long, value_enum, default_value = "reject")]
        resize: SizeArg,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("photoscore: {e}");
            e.exit_code()
        }
    }
}

fn timestamp_line(cli: &Cli) -> String {
    if cli.no_timestamp {
        return String::new();
    }
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("# generated_unix {secs}\n")
}

fn timestamp(cli: &Cli) -> Option<u64> {
    (!cli.no_timestamp).then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

/// Runs a parsed command, writing its report to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    let out_dir = cli.out.clone().or_else(|| config.paths.out.clone());

    let report = match &cli.command {
        Command::Synth { count } => cmd_synth(cli, &mut config, *count, out_dir)?,
        Command::Rsrl { index, max_iterations, epochs, resize } => {
            if let Some(n) = max_iterations {
                config.rsrl.max_iterations = *n;
            }
            if let Some(e) = epochs {
                config.train.epochs = *e;
            }
            let index = index.clone().or_else(|| config.paths.index.clone());
            cmd_rsrl(cli, &config, index, (*resize).into(), out_dir)?
        }
        Command::Measure { model } => cmd_measure(cli, model)?,
        Command::Select { ledger, threshold } => cmd_select(cli, ledger, *threshold)?,
        Command::Predict { model_f, model_d, image } => cmd_predict(model_f, model_d, image)?,
        Command::Explain { model, image } => {
            let dir = out_dir.ok_or_else(|| CliError::Config("explain needs --out".into()))?;
            cmd_explain(model, image, &dir)?
        }
        Command::Eval { model, index, mode, resize } => cmd_eval(cli, &config, model, index, *mode, (*resize).into())?,
    };
    out.write_all(report.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn require_out(dir: Option<PathBuf>, cmd: &str) -> Result<PathBuf, CliError> {
    dir.ok_or_else(|| CliError::Config(format!("{cmd} needs --out or paths.out")))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err("creating", dir, e))
}

pub fn cmd_synth(
    cli: &Cli,
    config: &mut RunConfig,
    count: Option<usize>,
    out: Option<PathBuf>,
) -> Result<String, CliError> {
    if let Some(c) = count {
        config.synth.count = c;
    }
    config.synth.validate()?;
    let dir = require_out(out, "synth")?;
    let dataset = data::synth_dataset(&config.synth)?;
    create_dir(&dir)?;
    let index = data::write_dataset(&dataset, &dir)?;
    let mut report = timestamp_line(cli);
    let _ = writeln!(report, "index\t{}", index.display());
    let _ = writeln!(report, "samples\t{}", dataset.len());
    for (c, n) in dataset.histogram().iter().enumerate() {
        let _ = writeln!(report, "class\t{}\t{n}", ScoreClass::from_index(c).expect("class"));
    }
    Ok(report)
}

fn load_indexed(index: &Path, root: Option<&Path>, policy: SizePolicy) -> Result<Dataset, CliError> {
    let root = root.map(Path::to_path_buf).unwrap_or_else(|| index.parent().map(Path::to_path_buf).unwrap_or_default());
    Ok(data::load_dataset(index, &root, policy)?)
}

pub fn cmd_rsrl(
    cli: &Cli,
    config: &RunConfig,
    index: Option<PathBuf>,
    policy: SizePolicy,
    out: Option<PathBuf>,
) -> Result<String, CliError> {
    let rcfg = config.rsrl_config();
    rcfg.validate()?;
    let dir = require_out(out, "rsrl")?;
    let dataset = match &index {
        Some(p) => load_indexed(p, config.paths.root.as_deref(), policy)?,
        None => {
            config.synth.validate()?;
            data::synth_dataset(&config.synth)?
        }
    };
    let outcome = rsrl::rsrl_run(&dataset, &rcfg)?;

    create_dir(&dir)?;
    for (rec, model) in outcome.ledger.records.iter().zip(&outcome.models) {
        let name = rec.model.as_deref().expect("rsrl names every model");
        let path = dir.join(name);
        nn::save_model(model, &path).map_err(|e| io_err("writing", &path, e))?;
    }
    let ledger_text = outcome.ledger.to_report(timestamp(cli));
    let ledger_path = dir.join("ledger.txt");
    fs::write(&ledger_path, &ledger_text).map_err(|e| io_err("writing", &ledger_path, e))?;
    let drops_path = dir.join("drops.txt");
    fs::write(&drops_path, outcome.drop_log_report()).map_err(|e| io_err("writing", &drops_path, e))?;
    Ok(ledger_text)
}

pub fn cmd_measure(cli: &Cli, model_path: &Path) -> Result<String, CliError> {
    let model = load_model(model_path)?;
    let result = measures::d_measure(&model.final_fc_weights())?;
    let mut report = timestamp_line(cli);
    let _ = writeln!(report, "d_measure\t{:?}", result.d_measure);
    for (j, d) in result.per_node_min.iter().enumerate() {
        let _ = writeln!(report, "dis_min\t{}\t{d:?}", ScoreClass::from_index(j).expect("class"));
    }
    Ok(report)
}

pub fn format_selection_report(sel: &Selection) -> String {
    let mut r = String::new();
    match *sel {
        Selection::Optimal { index, fd, by_f, by_d, by_fd } => {
            let _ = writeln!(r, "status\toptimal");
            let _ = writeln!(r, "L_optimal\t{index}");
            let _ = writeln!(r, "fd\t{fd:?}");
            let _ = writeln!(r, "L_F_all\t{by_f}");
            let _ = writeln!(r, "L_D\t{by_d}");
            let _ = writeln!(r, "L_FD\t{by_fd}");
        }
        Selection::NotConverged { by_f, by_d, by_fd, fd_at_by_f } => {
            let _ = writeln!(r, "status\tNotConverged");
            let _ = writeln!(r, "L_optimal\t-");
            let _ = writeln!(r, "fd\t{fd_at_by_f:?}");
            let _ = writeln!(r, "L_F_all\t{by_f}");
            let _ = writeln!(r, "L_D\t{by_d}");
            let _ = writeln!(r, "L_FD\t{by_fd}");
        }
    }
    r
}

pub fn cmd_select(cli: &Cli, ledger_path: &Path, threshold: Option<f64>) -> Result<String, CliError> {
    let text = fs::read_to_string(ledger_path).map_err(|e| io_err("reading", ledger_path, e))?;
    let mut ledger = ModelFamilyLedger::parse_report(&text).map_err(|e| match e {
        ParseLedgerError::Measure(m) => m.into(),
        other => io_err("parsing", ledger_path, other),
    })?;
    if let Some(t) = threshold {
        if !t.is_finite() {
            return Err(CliError::Config(format!("threshold {t} must be finite")));
        }
        ledger.threshold = t;
    }
    ledger.renormalize()?;
    let sel = ledger.apply_selection()?;
    let mut report = timestamp_line(cli);
    let _ = writeln!(report, "threshold\t{:?}", ledger.threshold);
    report.push_str(&format_selection_report(&sel));
    Ok(report)
}

fn read_input_image(path: &Path) -> Result<data::RgbImage, CliError> {
    data::read_image(path).map_err(|e| io_err("reading", path, e))
}

pub fn cmd_predict(model_f: &Path, model_d: &Path, image_path: &Path) -> Result<String, CliError> {
    let mf = load_model(model_f)?;
    let md = load_model(model_d)?;
    let image = read_input_image(image_path)?;
    let pf = mf.predict(&image)?;
    let pd = md.predict(&image)?;
    let score = measures::ensemble_predict(&pf, &pd)?;
    let mut r = String::new();
    let _ = writeln!(r, "score\t{score}");
    for j in 0..NUM_CLASSES {
        let _ = writeln!(r, "p\t{}\t{:?}\t{:?}", ScoreClass::from_index(j).expect("class"), pf[j], pd[j]);
    }
    Ok(r)
}

pub fn cmd_explain(model_path: &Path, image_path: &Path, dir: &Path) -> Result<String, CliError> {
    let model = load_model(model_path)?;
    let image = read_input_image(image_path)?;
    let trace = model.forward(&[&image], nn::Mode::Infer)?;
    let size = nn::FINAL_MAP_SIZE;
    let stack = FeatureMapStack::from_interleaved(size, size, nn::CONV_CHANNELS[3], trace.final_conv_maps(0))?;
    let result = saliency::extract(&image, &stack)?;

    let stem = image_path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    create_dir(dir)?;
    let ffp = dir.join(format!("{stem}.ffp.ppm"));
    let air = dir.join(format!("{stem}.air.ppm"));
    data::write_image(&result.ffp, &ffp).map_err(|e| io_err("writing", &ffp, e))?;
    data::write_image(&result.air, &air).map_err(|e| io_err("writing", &air, e))?;
    let mut r = String::new();
    let _ = writeln!(r, "p_max\t{}", result.p_max);
    let _ = writeln!(r, "ffp\t{}", ffp.display());
    let _ = writeln!(r, "air\t{}", air.display());
    Ok(r)
}

/// Maps a score to the binary quality classes: 0 = low (< 5), 1 = high.
pub fn binary_class(score: ScoreClass) -> usize {
    usize::from(score.score() >= 5)
}

pub fn cmd_eval(
    cli: &Cli,
    config: &RunConfig,
    model_path: &Path,
    index: &Path,
    mode: EvalMode,
    policy: SizePolicy,
) -> Result<String, CliError> {
    let model = load_model(model_path)?;
    let dataset = load_indexed(index, config.paths.root.as_deref(), policy)?;
    if dataset.is_empty() {
        return Err(CliError::Config(format!("{} lists no samples", index.display())));
    }
    let images: Vec<&data::RgbImage> = dataset.samples.iter().map(|s| s.image.as_ref()).collect();
    let probs = model.predict_many(&images)?;
    let predicted: Vec<ScoreClass> =
        probs.iter().map(|p| ScoreClass::from_index(measures::argmax(p).expect("non-empty")).expect("class")).collect();
    let truth: Vec<ScoreClass> = dataset.samples.iter().map(|s| s.label).collect();
    Ok(timestamp_line(cli) + &eval_report(&truth, &predicted, mode)?)
}

/// Confusion matrix and F-measures for a set of predictions.
pub fn eval_report(truth: &[ScoreClass], predicted: &[ScoreClass], mode: EvalMode) -> Result<String, CliError> {
    let (labels, map): (Vec<String>, fn(ScoreClass) -> usize) = match mode {
        EvalMode::Perclass => (ScoreClass::all().map(|c| c.to_string()).collect(), ScoreClass::index),
        EvalMode::Binary => (vec!["low".into(), "high".into()], binary_class),
    };
    let mut confusion = ConfusionMatrix::new(labels.len());
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion.add(map(t), map(p));
    }
    let metrics = measures::f_measures(&confusion)?;
    let mut r = String::new();
    let _ = writeln!(r, "mode\t{}", if mode == EvalMode::Binary { "binary" } else { "perclass" });
    let _ = writeln!(r, "samples\t{}", confusion.total());
    let _ = writeln!(r, "confusion\t{}", labels.join("\t"));
    for (t, name) in labels.iter().enumerate() {
        let row: Vec<String> = (0..labels.len()).map(|p| confusion.get(t, p).to_string()).collect();
        let _ = writeln!(r, "{name}\t{}", row.join("\t"));
    }
    for (j, name) in labels.iter().enumerate() {
        let _ = writeln!(
            r,
            "class\t{name}\tprecision\t{:?}\trecall\t{:?}\tf\t{:?}",
            metrics.precision[j], metrics.recall[j], metrics.per_class_f[j]
        );
    }
    let _ = writeln!(r, "f_all\t{:?}", metrics.f_all_raw);
    let _ = writeln!(r, "f_mean\t{:?}", metrics.f_all_raw / labels.len() as f64);
    Ok(r)
}
