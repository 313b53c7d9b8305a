use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Embeddings, LabelSet, Model, ModelConfig};
use crate::corpus::{build_vocab, score, EvalReport, ScoreOptions, Sentence};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Summed training loss over the epoch, measured before each batch update.
    pub loss: f64,
    /// Mean L2 norm of the batch gradients.
    pub grad_norm: f64,
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were returned.
    pub selected_epoch: usize,
}

impl TrainLog {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\tloss\tgrad_norm\tdev_f1\n");
        for e in &self.epochs {
            let dev = e.dev_f1.map_or_else(|| "-".to_string(), |f| format!("{f:.4}"));
            let _ = writeln!(out, "{}\t{:.10}\t{:.10}\t{dev}", e.epoch, e.loss, e.grad_norm);
        }
        let _ = writeln!(out, "# selected_epoch\t{}", self.selected_epoch);
        out
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: TrainLog,
}

pub fn evaluate(model: &Model, sentences: &[Sentence]) -> Result<EvalReport, Error> {
    let predicted = sentences.iter().map(|s| model.predict(s)).collect::<Result<Vec<_>, _>>()?;
    Ok(score(sentences, &predicted, ScoreOptions::default())?)
}

pub fn train(
    train_set: &[Sentence],
    dev: Option<&[Sentence]>,
    config: &ModelConfig,
    embeddings: Option<&Embeddings>,
) -> Result<TrainOutcome, Error> {
    train_with_observer(train_set, dev, config, embeddings, &mut |_, _| {})
}

/// Shuffled mini-batch training with AdaDelta. `observer` sees the model
/// after every epoch.
///
/// With a dev set the parameters of the best dev-F1 epoch are returned
/// (earliest on ties); otherwise the final ones.
pub fn train_with_observer(
    train_set: &[Sentence],
    dev: Option<&[Sentence]>,
    config: &ModelConfig,
    embeddings: Option<&Embeddings>,
    observer: &mut dyn FnMut(&EpochLog, &Model),
) -> Result<TrainOutcome, Error> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training corpus".into()));
    }
    if let Some(i) = train_set.iter().position(|s| s.gold.is_none()) {
        return Err(Error::Unlabeled(i));
    }
    let labels = if config.label_set.is_empty() {
        LabelSet::from_corpus(train_set)
    } else {
        LabelSet::try_from(config.label_set.clone()).map_err(Error::Config)?
    };
    for s in train_set.iter().chain(dev.into_iter().flatten()) {
        if let Some(gold) = &s.gold {
            labels.encode(gold)?;
        }
    }

    let vocab = build_vocab(train_set, config.min_freq);
    let mut model = Model::new(config.clone(), vocab, labels)?;
    if let Some(emb) = embeddings {
        let hits = model.apply_embeddings(emb)?;
        log::info!("pretrained vectors for {hits}/{} characters", model.vocab.chars().len());
    }
    let optimizer = config.optimizer();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, Model)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut norm_sum = 0.0;
        let mut batches = 0;
        for batch in order.chunks(config.batch_size) {
            model.zero_grad();
            for &i in batch {
                epoch_loss += model.loss_and_grad(&train_set[i])?;
            }
            let mut sq = 0.0;
            model.visit_params(&mut |p| sq += p.grad.sq_norm());
            norm_sum += sq.sqrt();
            batches += 1;

            let mut failure = None;
            let freeze = config.freeze_embeddings;
            model.visit_params(&mut |p| {
                if failure.is_some() {
                    return;
                }
                if freeze && p.name() == "encoder.char_table" {
                    p.zero_grad();
                    return;
                }
                if let Err(e) = optimizer.step(p) {
                    failure = Some(e);
                }
            });
            if let Some(e) = failure {
                return Err(Error::Numeric(format!("epoch {epoch}: {e}")));
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Numeric(format!("epoch {epoch}: training loss is {epoch_loss}")));
        }
        let dev_f1 = match dev {
            Some(d) => Some(evaluate(&model, d)?.f1()),
            None => None,
        };
        let entry = EpochLog { epoch, loss: epoch_loss, grad_norm: norm_sum / batches as f64, dev_f1 };
        log::debug!("epoch {epoch}: loss {epoch_loss:.6} dev_f1 {dev_f1:?}");
        observer(&entry, &model);
        if let Some(f1) = dev_f1 {
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, model.clone()));
                log.selected_epoch = epoch;
            }
        } else {
            log.selected_epoch = epoch;
        }
        log.epochs.push(entry);
    }
    let model = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok(TrainOutcome { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::gen_synthetic;

    fn tiny_config() -> ModelConfig {
        ModelConfig { d_ch: 8, d_h: 8, k: 3, epochs: 2, batch_size: 4, ..Default::default() }
    }

    #[test]
    fn rejects_zero_lr_and_empty_corpus() {
        let corpus = gen_synthetic(1, 4);
        let cfg = ModelConfig { lr: 0.0, epochs: 1, ..tiny_config() };
        assert!(train(&corpus, None, &cfg, None).is_err());
        assert!(matches!(train(&[], None, &tiny_config(), None), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_label_outside_set() {
        let corpus = gen_synthetic(1, 4);
        let cfg = ModelConfig { label_set: vec!["O".into()], ..tiny_config() };
        assert!(matches!(train(&corpus, None, &cfg, None), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let corpus = gen_synthetic(2, 8);
        let a = train(&corpus, Some(&corpus[..2]), &tiny_config(), None).unwrap();
        let b = train(&corpus, Some(&corpus[..2]), &tiny_config(), None).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model, b.model);
        assert_eq!(a.log.to_tsv().lines().count(), 4);
    }

    #[test]
    fn frozen_embeddings_do_not_move() {
        let corpus = gen_synthetic(3, 4);
        let cfg = ModelConfig { freeze_embeddings: true, ..tiny_config() };
        let out = train(&corpus, None, &cfg, None).unwrap();
        let fresh = Model::new(cfg.clone(), out.model.vocab.clone(), out.model.labels.clone()).unwrap();
        assert_eq!(out.model.char_table.value, fresh.char_table.value);
        assert_ne!(out.model.crf.emission.value, fresh.crf.emission.value);
    }
}
