use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::CorpusEntry;
use crate::graph::GraphConfig;
use crate::model::{prepare, EncoderKind, Model, ModelConfig, Prepared};
use crate::neuro::{Adam, AdamConfig, Checkpoint, Gradients, ParamStore, Tape};
use crate::subtok::{train_segmenter, SpecialSet, Vocabulary, DEFAULT_VOCAB_SIZE};

use super::{read_corpus, subsample, vocabulary_corpus, PipelineError};

/// Training settings independent of where the data lives.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub model: ModelConfig,
    pub encoders: EncoderKind,
    pub seed: u64,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            model: ModelConfig::default(),
            encoders: EncoderKind::Both,
            seed: 0,
            batch_size: 16,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-entry loss over the epoch's batches.
    pub train_loss: f64,
    /// Mean per-entry loss on the dev set after the epoch, if there is one.
    pub dev_loss: Option<f64>,
    pub updates: u64,
}

pub struct TrainOutcome {
    pub final_model: Model,
    pub best_model: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

fn mean_loss(model: &Model, data: &[Prepared]) -> Result<f64, PipelineError> {
    let mut total = 0.0;
    for input in data {
        let mut tape = Tape::new(model.params());
        let loss = model.loss(&mut tape, input)?;
        total += tape.value(loss).item();
    }
    Ok(total / data.len() as f64)
}

/// Minibatch Adam over the decoding loss. Batch loss is the mean over its
/// entries; batches are reshuffled each epoch from the seed. The best model
/// is the one with the lowest dev loss (train loss without a dev set).
pub fn train(
    train: &[CorpusEntry],
    dev: &[CorpusEntry],
    vocab: &Vocabulary,
    options: &TrainOptions,
) -> Result<TrainOutcome, PipelineError> {
    if train.is_empty() {
        return Err(PipelineError::EmptyCorpus("training"));
    }
    if options.batch_size == 0 {
        return Err(PipelineError::Config("batch_size must be positive".into()));
    }
    let graph_config = GraphConfig::default();
    let train_data = train
        .iter()
        .map(|e| prepare(e, vocab, graph_config))
        .collect::<Result<Vec<_>, _>>()?;
    let dev_data = dev
        .iter()
        .map(|e| prepare(e, vocab, graph_config))
        .collect::<Result<Vec<_>, _>>()?;

    let mut model = Model::new(options.model.clone(), options.encoders, vocab, options.seed)?;
    let mut adam = Adam::new(options.adam, model.params());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;

    for epoch in 1..=options.model.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(options.batch_size).enumerate() {
            let mut grads = Gradients::new(model.params().len());
            let mut batch_loss = 0.0;
            for &i in chunk {
                let mut tape = Tape::new(model.params());
                let loss = model.loss(&mut tape, &train_data[i])?;
                batch_loss += tape.value(loss).item();
                tape.backward_into(loss, &mut grads)?;
            }
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(PipelineError::Divergence { epoch, batch });
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam.step(model.params_mut(), &grads);
            epoch_loss += batch_loss;
        }
        let train_loss = epoch_loss / train_data.len() as f64;
        let dev_loss = if dev_data.is_empty() {
            None
        } else {
            Some(mean_loss(&model, &dev_data)?)
        };
        if !dev_loss.unwrap_or(0.0).is_finite() {
            return Err(PipelineError::Divergence { epoch, batch: 0 });
        }
        let criterion = dev_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| criterion < *b) {
            best = Some((criterion, epoch, model.params().clone()));
        }
        log::info!(
            "epoch {epoch}: train loss {train_loss:.4}{}",
            dev_loss.map(|d| format!(", dev loss {d:.4}")).unwrap_or_default()
        );
        log.push(EpochLog {
            epoch,
            train_loss,
            dev_loss,
            updates: adam.steps_taken(),
        });
    }

    let (_, best_epoch, best_params) = best.expect("epochs is positive");
    let mut best_model = model.clone();
    *best_model.params_mut() = best_params;
    Ok(TrainOutcome {
        final_model: model,
        best_model,
        best_epoch,
        log,
    })
}

fn default_one() -> f64 {
    1.0
}

fn default_batch() -> usize {
    16
}

fn default_lr() -> f64 {
    AdamConfig::default().lr
}

fn default_vocab_size() -> usize {
    DEFAULT_VOCAB_SIZE
}

/// The `train` command's TOML file. `[model]` mirrors [`ModelConfig`];
/// relative paths resolve against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub train: PathBuf,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Reuse a saved vocabulary instead of learning one from `train`.
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub encoder: EncoderKind,
    /// Fraction of training entries kept.
    #[serde(default = "default_one")]
    pub sample_rate: f64,
    #[serde(default)]
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(PipelineError::io(path))?;
        let mut config: TrainConfig = toml::from_str(&text).map_err(|source| PipelineError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [Some(&mut config.train), config.dev.as_mut(), Some(&mut config.out_dir), config.vocab.as_mut()]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn options(&self) -> TrainOptions {
        TrainOptions {
            model: self.model.clone(),
            encoders: self.encoder,
            seed: self.seed,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub train_entries: usize,
    pub best_epoch: usize,
    pub final_train_loss: f64,
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    pub vocab: PathBuf,
}

fn checkpoint(model: &Model, vocab: &Vocabulary, epoch: usize) -> Checkpoint {
    let mut ck = model.to_checkpoint(vocab);
    ck.meta["epoch"] = epoch.into();
    ck
}

/// Reads the corpora named in `config`, learns or loads the vocabulary,
/// trains, and writes `vocab.json`, `best.json`, `final.json` and
/// `log.jsonl` into `out_dir`.
pub fn run_training(config: &TrainConfig) -> Result<TrainSummary, PipelineError> {
    if !(config.sample_rate > 0.0 && config.sample_rate <= 1.0) {
        return Err(PipelineError::Config(format!(
            "sample_rate must be in (0, 1], got {}",
            config.sample_rate
        )));
    }
    let full = read_corpus(&config.train)?;
    let train_set = subsample(&full, config.sample_rate, config.seed);
    let dev_set = match &config.dev {
        Some(p) => read_corpus(p)?,
        None => Vec::new(),
    };
    if train_set.is_empty() {
        return Err(PipelineError::EmptyCorpus("training"));
    }
    let vocab = match &config.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => train_segmenter(&vocabulary_corpus(&train_set), config.vocab_size, &SpecialSet::default())?,
    };
    let outcome = train(&train_set, &dev_set, &vocab, &config.options())?;

    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
    let vocab_path = dir.join("vocab.json");
    vocab.save(&vocab_path)?;
    let best = dir.join("best.json");
    checkpoint(&outcome.best_model, &vocab, outcome.best_epoch).save(&best)?;
    let last = dir.join("final.json");
    checkpoint(&outcome.final_model, &vocab, outcome.log.len()).save(&last)?;
    let log_path = dir.join("log.jsonl");
    let mut f = fs::File::create(&log_path).map_err(PipelineError::io(&log_path))?;
    for row in &outcome.log {
        let line = serde_json::to_string(row).expect("log rows serialize");
        writeln!(f, "{line}").map_err(PipelineError::io(&log_path))?;
    }
    Ok(TrainSummary {
        train_entries: train_set.len(),
        best_epoch: outcome.best_epoch,
        final_train_loss: outcome.log.last().map(|l| l.train_loss).unwrap_or(f64::NAN),
        best_checkpoint: best,
        final_checkpoint: last,
        vocab: vocab_path,
    })
}
