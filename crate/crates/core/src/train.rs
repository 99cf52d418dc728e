//! Mini-batch training with Adam and early stopping.
//!
//! A batch is cut into fixed-size chunks. Each chunk accumulates its
//! gradient sequentially; chunks may run on different workers, and their
//! gradients are summed in chunk order. Dropout masks are seeded per
//! `(step, position in batch)`. Parameters therefore depend only on the
//! seed and data, never on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{batch_iter, Instance, Splits};
use crate::diff::{AdamConfig, AdamState, Gradients, Mode, ParamStore};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::{evaluate, EvalOptions, MetricReport};
use crate::model::Model;
use crate::real::Real;
use crate::seed::{self, Stream};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation NDCG@20 improvement before stopping.
    pub patience: usize,
    /// Master seed; dropout and shuffling use derived sub-seeds.
    pub seed: u64,
    pub shuffle: bool,
    pub mask_history: bool,
    pub exec: Execution,
    /// Instances per gradient chunk.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 300,
            patience: 10,
            seed: 42,
            shuffle: true,
            mask_history: false,
            exec: Execution::default(),
            chunk_size: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid: MetricReport,
}

pub struct Trainer<'m, T: Real> {
    pub model: &'m mut Model<T>,
    pub config: TrainConfig,
    adam: AdamState<T>,
    dropout_seed: u64,
    shuffle_seed: u64,
}

impl<'m, T: Real> Trainer<'m, T> {
    pub fn new(model: &'m mut Model<T>, config: TrainConfig) -> Result<Self> {
        if !(config.lr > 0.0 && config.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", config.lr)));
        }
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let adam = AdamState::new(&model.params, AdamConfig::with_lr(config.lr));
        Ok(Trainer {
            dropout_seed: seed::sub_seed(config.seed, Stream::Dropout),
            shuffle_seed: seed::sub_seed(config.seed, Stream::Shuffle),
            model,
            config,
            adam,
        })
    }

    pub fn steps(&self) -> u64 {
        self.adam.step_count()
    }

    /// Mean loss and summed gradient of `batch`, each instance weighted by
    /// `1/|batch|`.
    pub fn batch_gradient(&self, batch: &[&Instance], step: u64) -> Result<(f64, Gradients<T>)> {
        let model = &*self.model;
        let weight = T::one() / T::lit(batch.len() as f64);
        let chunk = self.config.chunk_size.max(1);
        let dropout_seed = self.dropout_seed;
        let parts = self.config.exec.map_chunks(batch, chunk, |ci, insts| -> Result<(f64, Gradients<T>)> {
            let mut acc = Gradients::for_store(&model.params);
            let mut loss = 0.0;
            for (j, inst) in insts.iter().enumerate() {
                let pos = (ci * chunk + j) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed::indexed(dropout_seed, step, pos));
                let l = model.loss_and_grad(&inst.input, inst.target, Mode::Train, weight, &mut rng, &mut acc)?;
                loss += l.as_f64();
            }
            Ok((loss, acc))
        });
        let mut total = Gradients::for_store(&model.params);
        let mut loss = 0.0;
        for part in parts {
            let (l, g) = part?;
            loss += l;
            total.merge(&g);
        }
        Ok((loss / batch.len() as f64, total))
    }

    /// One optimizer step on `batch`; returns the batch mean loss.
    pub fn step(&mut self, batch: &[&Instance]) -> Result<f64> {
        let step = self.adam.step_count();
        let (loss, grads) = self.batch_gradient(batch, step)?;
        if !loss.is_finite() || !grads.is_finite() {
            let bad: Vec<&str> = self
                .model
                .params
                .ids()
                .filter(|&id| grads.get(id).is_some_and(|g| !g.is_finite()))
                .map(|id| self.model.params.slot(id).name.as_str())
                .collect();
            return Err(Error::Numerical(format!(
                "non-finite training state at step {step}: loss {loss}, non-finite gradients in [{}]",
                bad.join(", ")
            )));
        }
        self.model.params.set_grads(&grads);
        self.adam.step(&mut self.model.params)?;
        Ok(loss)
    }

    /// One pass over `train`; returns the instance-weighted mean loss.
    pub fn train_epoch(&mut self, train: &[Instance], epoch: usize) -> Result<f64> {
        let (bs, seed, shuffle) = (self.config.batch_size, self.shuffle_seed, self.config.shuffle);
        let mut sum = 0.0;
        let mut count = 0usize;
        for batch in batch_iter(train, bs, seed, epoch, shuffle) {
            let l = self.step(&batch)?;
            sum += l * batch.len() as f64;
            count += batch.len();
        }
        Ok(if count == 0 { 0.0 } else { sum / count as f64 })
    }

    pub fn eval_options(&self) -> EvalOptions<T> {
        EvalOptions {
            mask_history: self.config.mask_history,
            exec: self.config.exec,
            ..EvalOptions::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Real> {
    pub history: Vec<EpochRecord>,
    /// 0-based epoch of the best validation NDCG@20.
    pub best_epoch: usize,
    pub best_valid: MetricReport,
    pub test: MetricReport,
    pub best_params: ParamStore<T>,
}

/// Trains until `max_epochs` or until validation NDCG@20 has not improved
/// for `patience` epochs, then restores the best parameters and evaluates
/// them on the test split. `on_epoch` sees every record as it is produced.
pub fn train_loop<T: Real>(
    model: &mut Model<T>,
    splits: &Splits,
    config: TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    if splits.train.is_empty() {
        return Err(Error::Data("no training instances".into()));
    }
    let mut trainer = Trainer::new(model, config)?;
    let opts = trainer.eval_options();
    let mut history = Vec::new();
    let mut best: Option<(usize, MetricReport, ParamStore<T>)> = None;
    let mut stale = 0usize;
    for epoch in 0..trainer.config.max_epochs {
        let train_loss = trainer.train_epoch(&splits.train, epoch)?;
        let valid = evaluate(trainer.model, &splits.valid, &opts)?;
        let rec = EpochRecord {
            epoch,
            train_loss,
            valid,
        };
        on_epoch(&rec);
        history.push(rec);
        let improved = best.as_ref().is_none_or(|(_, b, _)| valid.ndcg20 > b.ndcg20);
        if improved {
            best = Some((epoch, valid, trainer.model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale > trainer.config.patience {
                break;
            }
        }
    }
    let (best_epoch, best_valid, best_params) =
        best.ok_or_else(|| Error::Config("max_epochs must be at least 1".into()))?;
    trainer.model.params.copy_values_from(&best_params)?;
    let test = evaluate(trainer.model, &splits.test, &opts)?;
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_valid,
        test,
        best_params,
    })
}

/// History as CSV rows: `epoch,train_loss,HR@10,HR@20,NDCG@10,NDCG@20`.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,HR@10,HR@20,NDCG@10,NDCG@20\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.8},{:.8},{:.8},{:.8},{:.8}\n",
            r.epoch, r.train_loss, r.valid.hr10, r.valid.hr20, r.valid.ndcg10, r.valid.ndcg20
        ));
    }
    out
}
