use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grad::{batch_loss_sum, compute_gradients, PairExample};
use super::loss::{ExactSum, LossKind};
use super::model::SiameseModel;
use super::rmsprop::{rmsprop_step, RmsPropConfig, RmsPropState};
use crate::catalog::EncodedProduct;
use crate::compare_graph::TrainingTriple;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub loss_kind: LossKind,
    pub optimizer: RmsPropConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 50,
            patience: 3,
            seed: 0,
            loss_kind: LossKind::Contrastive,
            optimizer: RmsPropConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean instance loss over the epoch's batches, measured before each update.
    pub train_loss: f64,
    /// Mean instance loss on the validation set after the epoch.
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Validation loss of the untrained model.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .map_or(self.initial_val_loss, |r| r.val_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        s.push_str(&format!("0,,{:.17e}\n", self.initial_val_loss));
        for r in &self.epochs {
            s.push_str(&format!("{},{:.17e},{:.17e}\n", r.epoch, r.train_loss, r.val_loss));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epoch: 0,
            waited: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> StopDecision {
        self.epoch += 1;
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = self.epoch;
            self.waited = 0;
            StopDecision::Improved
        } else {
            self.waited += 1;
            if self.waited >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

fn resolve<'a>(
    triples: &[TrainingTriple],
    catalog: &'a BTreeMap<String, EncodedProduct>,
) -> Result<Vec<PairExample<'a>>> {
    triples
        .iter()
        .map(|t| {
            let get = |id: &str| catalog.get(id).ok_or_else(|| Error::UnknownProduct(id.to_string()));
            Ok(PairExample {
                anchor: get(&t.anchor_id)?,
                other: get(&t.other_id)?,
                label: t.label,
            })
        })
        .collect()
}

fn mean_loss(examples: &[PairExample<'_>], model: &SiameseModel, kind: LossKind) -> Result<f64> {
    let mut total = ExactSum::new();
    for chunk in examples.chunks(256) {
        total.merge(&batch_loss_sum(chunk, model, kind)?);
    }
    let mean = total.value() / examples.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Numerical("validation loss".into()));
    }
    Ok(mean)
}

/// Seeded mini-batch RMSprop with early stopping; returns the weights from
/// the epoch with the lowest validation loss.
pub fn train(
    mut model: SiameseModel,
    train_triples: &[TrainingTriple],
    val_triples: &[TrainingTriple],
    catalog: &BTreeMap<String, EncodedProduct>,
    cfg: &TrainConfig,
) -> Result<(SiameseModel, TrainHistory)> {
    if train_triples.is_empty() || val_triples.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    if cfg.batch_size < 1 || cfg.patience < 1 {
        return Err(Error::InvalidArgument("batch_size and patience must be >= 1".into()));
    }
    let mut examples = resolve(train_triples, catalog)?;
    let val = resolve(val_triples, catalog)?;

    let kind = cfg.loss_kind;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = RmsPropState::new(&model, cfg.optimizer);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut history = TrainHistory {
        initial_val_loss: mean_loss(&val, &model, kind)?,
        epochs: Vec::new(),
        best_epoch: 0,
    };
    log::info!("initial validation loss {:.6}", history.initial_val_loss);

    for epoch in 1..=cfg.max_epochs {
        examples.shuffle(&mut rng);
        let mut epoch_loss = ExactSum::new();
        for batch in examples.chunks(cfg.batch_size) {
            let (loss, mut grads) = compute_gradients(batch, &model, kind)?;
            if !loss.is_finite() {
                return Err(Error::Numerical("training loss".into()));
            }
            epoch_loss.add(loss);
            grads.scale(1.0 / batch.len() as f64);
            rmsprop_step(&mut model, &grads, &mut state);
            if let Some(name) = model.first_non_finite() {
                return Err(Error::Numerical(name.to_string()));
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss.value() / examples.len() as f64,
            val_loss: mean_loss(&val, &model, kind)?,
        };
        log::info!(
            "epoch {epoch}: train loss {:.6}, validation loss {:.6}",
            record.train_loss,
            record.val_loss
        );
        history.epochs.push(record);
        match stopper.observe(record.val_loss) {
            StopDecision::Improved => best.clone_from(&model),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    history.best_epoch = stopper.best_epoch();
    Ok((best, history))
}
