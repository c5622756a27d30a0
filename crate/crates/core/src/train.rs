//! Minibatch training with Adam and best-checkpoint selection on a
//! development set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::config::ModelConfig;
use crate::conllu::{subsample, Sentence, Vocab};
use crate::decoder::{evaluate, AttachmentScores};
use crate::error::{Error, Result};
use crate::model::{Model, PreparedSentence};
use crate::optim::{adam_step, AdamState};
use crate::param::HasParams;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sentence loss over the epoch.
    pub loss: f64,
    pub train_sentences: usize,
    pub dev: Option<AttachmentScores>,
}

impl std::fmt::Display for EpochLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "epoch {:>3}  loss {:.6}  train {}",
            self.epoch, self.loss, self.train_sentences
        )?;
        if let Some(d) = &self.dev {
            write!(f, "  dev UAS {:.2}  LAS {:.2}", d.uas, d.las)?;
        }
        Ok(())
    }
}

/// Owns the model, optimizer state and the random stream used for
/// shuffling and dropout.
pub struct Trainer {
    pub model: Model,
    data: Vec<PreparedSentence>,
    skipped: usize,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
    step: usize,
}

impl Trainer {
    /// Subsamples `train`, drops empty and over-long sentences, builds the
    /// vocabulary and initializes the model, all from `config.seed`.
    pub fn new(config: ModelConfig, train: &[Sentence]) -> Result<Trainer> {
        config.validate()?;
        let sampled = subsample(train, config.subsample, config.seed)?;
        let before = sampled.len();
        let kept: Vec<Sentence> = sampled
            .into_iter()
            .filter(|s| !s.is_empty() && s.len() <= config.max_length)
            .collect();
        let skipped = before - kept.len();
        if skipped > 0 {
            log::info!(
                "skipped {skipped} empty or over-long sentences (max length {})",
                config.max_length
            );
        }
        if kept.is_empty() {
            return Err(Error::Data("the training treebank is empty".into()));
        }
        let vocab = Vocab::build(&kept, config.min_count);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = Model::new(config, vocab, &mut rng)?;
        let data = kept.iter().map(|s| model.prepare(s)).collect();
        Ok(Trainer {
            model,
            data,
            skipped,
            adam: AdamState::new(),
            rng,
            epoch: 0,
            step: 0,
        })
    }

    pub fn train_sentences(&self) -> usize {
        self.data.len()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One optimizer step on the given training sentences; returns the
    /// mean loss before the update.
    pub fn step(&mut self, batch: &[usize]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        self.step += 1;
        let numeric = |epoch: usize, step: usize, detail: String| Error::Numeric { epoch, step, detail };
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape);
        let mut losses = Vec::with_capacity(batch.len());
        for &i in batch {
            let sentence = self.data.get(i).ok_or_else(|| {
                Error::Data(format!("training sentence {i} does not exist"))
            })?;
            let loss = self
                .model
                .loss_on_tape(&mut tape, &bound, sentence, Some(&mut self.rng))?;
            losses.push(loss);
        }
        let stacked = tape.concat_cols(&losses)?;
        let sum = tape.sum(stacked)?;
        let total = tape.scale(sum, 1.0 / batch.len() as f64)?;
        let value = tape.value(total).data()[0];
        if !value.is_finite() {
            return Err(numeric(self.epoch, self.step, format!("loss is {value}")));
        }
        let grads = tape.backward(total)?;
        let grads = tape.param_gradients(&grads);
        let slices: Vec<&[f64]> = grads.iter().map(|(_, g)| g.data()).collect();
        let hyper = self.model.config.adam();
        let mut params = self.model.params_mut();
        adam_step(&mut params, &slices, &mut self.adam, &hyper).map_err(|e| match e {
            Error::NonFiniteGradient { param } => {
                numeric(self.epoch, self.step, format!("non-finite gradient for `{param}`"))
            }
            other => other,
        })?;
        Ok(value)
    }

    /// A shuffled pass over the training data; returns the mean loss.
    pub fn epoch(&mut self) -> Result<f64> {
        self.epoch += 1;
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for batch in order.chunks(self.model.config.batch_size) {
            total += self.step(batch)? * batch.len() as f64;
        }
        Ok(total / self.data.len() as f64)
    }
}

pub struct TrainOutcome {
    /// Best development LAS, or the final model without a development set.
    pub model: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Runs `config.epochs` epochs, reporting each through `on_epoch`.
pub fn train(
    config: ModelConfig,
    train: &[Sentence],
    dev: Option<&[Sentence]>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config, train)?;
    log::info!(
        "training on {} sentences, {} parameters",
        trainer.train_sentences(),
        trainer.model.num_scalars()
    );
    let epochs = trainer.model.config.epochs;
    let mut best: Option<(f64, usize, Model)> = None;
    let mut log = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let loss = trainer.epoch()?;
        let dev_scores = match dev {
            Some(dev) => Some(score_treebank(&trainer.model, dev)?),
            None => None,
        };
        let entry = EpochLog {
            epoch,
            loss,
            train_sentences: trainer.train_sentences(),
            dev: dev_scores,
        };
        log::info!("{entry}");
        on_epoch(&entry);
        if let Some(scores) = dev_scores {
            if best.as_ref().is_none_or(|(las, _, _)| scores.las > *las) {
                best = Some((scores.las, epoch, trainer.model.clone()));
            }
        }
        log.push(entry);
    }
    let (model, best_epoch) = match best {
        Some((_, epoch, model)) => (model, epoch),
        None => (trainer.model, epochs),
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        log,
    })
}

/// Parses `treebank` with `model` and scores it against its own annotation.
pub fn score_treebank(model: &Model, treebank: &[Sentence]) -> Result<AttachmentScores> {
    let mut pred = Vec::with_capacity(treebank.len());
    let mut gold = Vec::with_capacity(treebank.len());
    for s in treebank {
        pred.push(model.predict(s)?);
        gold.push(model.gold_tree(s));
    }
    evaluate(&pred, &gold)
}
