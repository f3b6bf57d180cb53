//! Repetitively self-revised learning: train, score every training sample
//! under the current model, drop low-likelihood samples of the majority
//! score classes, warm-start retrain, and record F_all / D-measure / FD for
//! every model in the family.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, DataError, Dataset, RgbImage, Sample};
use crate::measures::{self, ClassMetrics, ConfusionMatrix, LedgerRecord, MeasureError, ModelFamilyLedger};
use crate::nn::{self, NetworkModel, NnError, TrainConfig};
use crate::score::{ScoreClass, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropRule {
    /// Drop majority-class samples whose true-class probability is below τ.
    Threshold(f64),
    /// Drop the lowest-likelihood `floor(q * n)` samples of each majority class.
    Quantile(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RsrlConfig {
    pub max_iterations: usize,
    /// Scores eligible for dropping.
    pub majority_classes: Vec<u8>,
    pub drop_rule: DropRule,
    pub fd_threshold: f64,
    /// Fraction of each class used for training; the rest validates.
    pub split_ratio: f64,
    pub rng_seed: u64,
    /// Inner training settings; configured from the top-level `[train]`
    /// section of a run configuration.
    #[serde(skip)]
    pub train: TrainConfig,
    /// Epochs for warm-started iterations; `None` reuses `train.epochs`.
    pub retrain_epochs: Option<usize>,
}

impl Default for RsrlConfig {
    fn default() -> Self {
        Self {
            max_iterations: 29,
            majority_classes: vec![3, 4, 5],
            drop_rule: DropRule::Threshold(0.5),
            fd_threshold: measures::DEFAULT_FD_THRESHOLD,
            split_ratio: 0.8,
            rng_seed: 0,
            train: TrainConfig::default(),
            retrain_epochs: None,
        }
    }
}

impl RsrlConfig {
    pub fn validate(&self) -> Result<(), RsrlError> {
        let bad = |m: String| Err(RsrlError::Config(m));
        if !(1..=1000).contains(&self.max_iterations) {
            return bad(format!("max_iterations {} must lie in 1..=1000", self.max_iterations));
        }
        if let Some(s) = self.majority_classes.iter().find(|&&s| ScoreClass::new(s).is_none()) {
            return bad(format!("majority class {s} is not a score in 2..=9"));
        }
        match self.drop_rule {
            DropRule::Threshold(t) if !(0.0..1.0).contains(&t) => {
                return bad(format!("drop threshold {t} must lie in [0, 1)"));
            }
            DropRule::Quantile(q) if !(0.0..1.0).contains(&q) => {
                return bad(format!("drop quantile {q} must lie in [0, 1)"));
            }
            _ => {}
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} must lie strictly between 0 and 1", self.split_ratio));
        }
        if !self.fd_threshold.is_finite() {
            return bad("fd_threshold must be finite".into());
        }
        self.train.validate().map_err(|e| RsrlError::Config(e.to_string()))
    }

    fn is_majority(&self, class: ScoreClass) -> bool {
        self.majority_classes.contains(&class.score())
    }

    /// Class indices outside the majority set.
    pub fn minority_indices(&self) -> Vec<usize> {
        ScoreClass::all().filter(|c| !self.is_majority(*c)).map(ScoreClass::index).collect()
    }
}

#[derive(Debug, Error)]
pub enum RsrlError {
    #[error("invalid RSRL configuration: {0}")]
    Config(String),
    #[error("iteration {iteration}: {source}")]
    Training { iteration: usize, source: NnError },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A training sample's standing under the current model.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub label: ScoreClass,
    /// Predicted probability of the true class.
    pub likelihood: f64,
    pub dropped: bool,
    pub drop_iteration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropEvent {
    pub iteration: usize,
    pub id: String,
    pub label: ScoreClass,
    pub likelihood: f64,
}

pub fn per_sample_likelihood(model: &NetworkModel, samples: &[Sample]) -> Result<Vec<SampleRecord>, NnError> {
    let images: Vec<&RgbImage> = samples.iter().map(|s| s.image.as_ref()).collect();
    let probs = model.predict_many(&images)?;
    Ok(samples
        .iter()
        .zip(probs)
        .map(|(s, p)| SampleRecord {
            id: s.id.clone(),
            label: s.label,
            likelihood: p[s.label.index()],
            dropped: false,
            drop_iteration: None,
        })
        .collect())
}

/// Marks records for dropping per `config.drop_rule`. Only majority classes
/// are eligible, and every class keeps at least its most likely sample.
pub fn drop_samples(records: &mut [SampleRecord], config: &RsrlConfig, iteration: usize) {
    let mut drop = vec![false; records.len()];
    for class in ScoreClass::all().filter(|c| config.is_majority(*c)) {
        let members: Vec<usize> = (0..records.len()).filter(|&i| records[i].label == class).collect();
        if members.is_empty() {
            continue;
        }
        match config.drop_rule {
            DropRule::Threshold(tau) => {
                for &i in &members {
                    drop[i] = records[i].likelihood < tau;
                }
            }
            DropRule::Quantile(q) => {
                let mut sorted = members.clone();
                sorted.sort_by(|&a, &b| records[a].likelihood.total_cmp(&records[b].likelihood));
                let k = (q * members.len() as f64).floor() as usize;
                for &i in &sorted[..k] {
                    drop[i] = true;
                }
            }
        }
        if members.iter().all(|&i| drop[i]) {
            let keep = members
                .iter()
                .copied()
                .reduce(|best, i| if records[i].likelihood > records[best].likelihood { i } else { best })
                .expect("non-empty class");
            drop[keep] = false;
        }
    }
    for (r, d) in records.iter_mut().zip(drop) {
        if d {
            r.dropped = true;
            r.drop_iteration = Some(iteration);
        }
    }
}

/// Confusion matrix and F-measures of `model` on `samples`.
pub fn evaluate(model: &NetworkModel, samples: &[Sample]) -> Result<ClassMetrics, RsrlError> {
    let images: Vec<&RgbImage> = samples.iter().map(|s| s.image.as_ref()).collect();
    let probs = model.predict_many(&images)?;
    let mut confusion = ConfusionMatrix::new(NUM_CLASSES);
    for (s, p) in samples.iter().zip(&probs) {
        confusion.add(s.label.index(), measures::argmax(p).expect("non-empty"));
    }
    Ok(measures::f_measures(&confusion)?)
}

/// Everything an RSRL run produces.
#[derive(Debug, Clone)]
pub struct RsrlOutcome {
    pub ledger: ModelFamilyLedger,
    /// Model `l` is the one recorded in ledger record `l`.
    pub models: Vec<NetworkModel>,
    pub drop_log: Vec<DropEvent>,
    pub metrics: Vec<ClassMetrics>,
    pub train_ids: Vec<Vec<String>>,
    pub validation_ids: Vec<String>,
    pub early_stopped: bool,
}

impl RsrlOutcome {
    /// Index of the model chosen by FD: the optimal model when the F_all
    /// argmax clears the threshold, otherwise the FD argmax.
    pub fn fd_selected(&self) -> usize {
        let sel = self.ledger.selection.expect("selection applied");
        sel.optimal().unwrap_or(sel.by_fd())
    }

    pub fn drop_log_report(&self) -> String {
        let mut out = String::from("iteration\tid\tclass\tlikelihood\n");
        for e in &self.drop_log {
            let _ = writeln!(out, "{}\t{}\t{}\t{:?}", e.iteration, e.id, e.label, e.likelihood);
        }
        out
    }
}

fn labelled(samples: &[Sample]) -> Vec<(&RgbImage, usize)> {
    samples.iter().map(|s| (s.image.as_ref(), s.label.index())).collect()
}

/// Runs the full loop on `dataset`, splitting it by class with
/// `config.split_ratio`.
pub fn rsrl_run(dataset: &Dataset, config: &RsrlConfig) -> Result<RsrlOutcome, RsrlError> {
    config.validate()?;
    let represented = dataset.histogram().iter().filter(|&&n| n > 0).count();
    if represented < 2 {
        return Err(RsrlError::Config(format!("dataset must represent at least 2 classes, found {represented}")));
    }
    let (train_set, validation) = data::split(dataset, config.split_ratio, config.rng_seed)?;
    rsrl_run_split(&train_set, &validation, config)
}

/// Runs the loop on an explicit training/validation split.
pub fn rsrl_run_split(
    train_set: &Dataset,
    validation: &Dataset,
    config: &RsrlConfig,
) -> Result<RsrlOutcome, RsrlError> {
    config.validate()?;
    if validation.is_empty() {
        return Err(RsrlError::Config("validation set is empty".into()));
    }
    let mut model = NetworkModel::init_type_c(config.rng_seed);
    model.zerocenter = train_set.channel_means();

    let mut current: Vec<Sample> = train_set.samples.clone();
    let mut ledger = ModelFamilyLedger::new(config.fd_threshold);
    let mut outcome = RsrlOutcome {
        ledger: ModelFamilyLedger::new(config.fd_threshold),
        models: Vec::new(),
        drop_log: Vec::new(),
        metrics: Vec::new(),
        train_ids: Vec::new(),
        validation_ids: validation.samples.iter().map(|s| s.id.clone()).collect(),
        early_stopped: false,
    };

    for iteration in 0..config.max_iterations {
        let mut inner = config.train.clone();
        inner.rng_seed = config.train.rng_seed.wrapping_add(iteration as u64);
        if iteration > 0 {
            let mut records =
                per_sample_likelihood(&model, &current).map_err(|source| RsrlError::Training { iteration, source })?;
            drop_samples(&mut records, config, iteration);
            let dropped: HashSet<&str> = records.iter().filter(|r| r.dropped).map(|r| r.id.as_str()).collect();
            outcome.drop_log.extend(records.iter().filter(|r| r.dropped).map(|r| DropEvent {
                iteration,
                id: r.id.clone(),
                label: r.label,
                likelihood: r.likelihood,
            }));
            current.retain(|s| !dropped.contains(s.id.as_str()));
            inner.epochs = config.retrain_epochs.unwrap_or(config.train.epochs);
        }

        nn::train(&mut model, &labelled(&current), &inner)
            .map_err(|source| RsrlError::Training { iteration, source })?;

        let metrics = evaluate(&model, &validation.samples)?;
        let d = measures::d_measure(&model.final_fc_weights())?;
        let mut record = LedgerRecord::new(iteration, metrics.f_all_raw, d.d_measure);
        record.train_size = current.len();
        record.per_class_f = metrics.per_class_f.clone();
        record.model = Some(format!("model_{iteration:03}.rsrl"));
        let online_fd = ledger.push(record)?;

        outcome.models.push(model.clone());
        outcome.metrics.push(metrics);
        outcome.train_ids.push(current.iter().map(|s| s.id.clone()).collect());

        // A family of one always has FD = 1; stopping needs a second model.
        if iteration >= 1 && online_fd > config.fd_threshold {
            outcome.early_stopped = true;
            break;
        }
    }
    ledger.apply_selection()?;
    outcome.ledger = ledger;
    Ok(outcome)
}
