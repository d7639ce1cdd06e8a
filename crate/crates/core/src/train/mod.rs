//! Masked multi-task loss, Adam, and the epoch loop with resumable
//! checkpoints.

mod adam;
mod history;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use history::{EpochRecord, History, HISTORY_HEADER};

use crate::autograd::{Precision, Tape, Var};
use crate::data::{stack_batch, Batch, Sample};
use crate::error::{Error, Result};
use crate::models::checkpoint;
use crate::models::{ModelState, ParamSet};
use crate::tensor::GridTensor;

/// Optimization settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Weight of the concentration term relative to each drift component.
    pub beta: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Write `last.hsun` every this many epochs; 0 writes it only at the end.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 1e-3,
            beta: 0.5,
            batch_size: 4,
            seed: 0,
            precision: Precision::F64,
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {}", self.beta)));
        }
        // lr = 0 is allowed: it freezes the model, which is useful as a baseline run.
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidParameter(format!("lr must be non-negative, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Mean over valid pixels of `du^2 + dv^2 + beta dA^2`.
pub fn masked_loss(tape: &mut Tape, pred: Var, target: &GridTensor, mask: &GridTensor, beta: f64) -> Result<Var> {
    tape.masked_loss(pred, target, mask, &[1.0, 1.0, beta])
}

/// Records the forward pass and loss of one batch. Returns the loss and the
/// parameter handles in entry order.
fn batch_graph(state: &ModelState, tape: &mut Tape, batch: &Batch, beta: f64) -> Result<(Var, Vec<Var>)> {
    let x = tape.constant(batch.input.clone());
    let (out, bound) = state.forward(tape, x)?;
    let vars = bound.iter().map(|(_, v)| v).collect();
    let pred = out.stacked(tape)?;
    let loss = masked_loss(tape, pred, &batch.target, &batch.mask, beta)?;
    Ok((loss, vars))
}

fn valid_count(mask: &GridTensor) -> usize {
    mask.data().iter().filter(|&&m| m > 0.0).count()
}

/// Loss over `samples` without updating anything, weighted by valid pixels.
pub fn evaluate_loss(state: &ModelState, samples: &[&Sample], cfg: &TrainConfig) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for chunk in samples.chunks(cfg.batch_size) {
        let batch = stack_batch(chunk)?;
        let count = valid_count(&batch.mask);
        if count == 0 {
            continue;
        }
        let mut tape = Tape::with_precision(cfg.precision);
        let (loss, _) = batch_graph(state, &mut tape, &batch, cfg.beta)?;
        acc += tape.value(loss).data()[0] * count as f64;
        n += count;
    }
    if n == 0 {
        return Err(Error::EmptyMask("evaluate_loss"));
    }
    Ok(acc / n as f64)
}

/// Training state that survives a restart.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub state: ModelState,
    pub adam: AdamState,
    pub cfg: TrainConfig,
    pub epochs_done: usize,
    pub best_val: f64,
    pub best_state: Option<ModelState>,
    pub history: History,
}

/// Files a run writes into its output directory.
pub struct RunFiles {
    pub last: PathBuf,
    pub best: PathBuf,
    pub history: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        RunFiles {
            last: d.join("last.hsun"),
            best: d.join("best.hsun"),
            history: d.join("history.tsv"),
        }
    }
}

const M_PREFIX: &str = "adam.m/";
const V_PREFIX: &str = "adam.v/";

impl Trainer {
    pub fn new(state: ModelState, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = AdamState::new(&state.params);
        Ok(Trainer {
            state,
            adam,
            cfg,
            epochs_done: 0,
            best_val: f64::INFINITY,
            best_state: None,
            history: History::default(),
        })
    }

    /// Optimizer moments and counters, stored beside the weights.
    fn extras(&self) -> ParamSet {
        let mut x = ParamSet::new();
        for (n, t) in self.adam.m.iter() {
            x.insert(format!("{M_PREFIX}{n}"), t.clone());
        }
        for (n, t) in self.adam.v.iter() {
            x.insert(format!("{V_PREFIX}{n}"), t.clone());
        }
        x.insert("step", GridTensor::scalar(self.adam.step as f64));
        x.insert("epoch", GridTensor::scalar(self.epochs_done as f64));
        x.insert("best_val", GridTensor::scalar(self.best_val));
        x
    }

    /// Continues a run from the files written by [`Trainer::save`].
    /// `cfg.epochs` is the new total.
    pub fn resume(files: &RunFiles, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let ck = checkpoint::load(&files.last)?;
        let origin = files.last.display().to_string();
        let scalar = |name: &str| -> Result<f64> {
            ck.extras
                .get(name)
                .map(|t| t.data()[0])
                .ok_or_else(|| Error::format(&origin, format!("no training state '{name}'")))
        };
        let mut adam = AdamState::new(&ck.state.params);
        for (name, _) in ck.state.params.iter() {
            for (prefix, set) in [(M_PREFIX, &mut adam.m), (V_PREFIX, &mut adam.v)] {
                let t = ck
                    .extras
                    .get(&format!("{prefix}{name}"))
                    .ok_or_else(|| Error::format(&origin, format!("no optimizer moment for '{name}'")))?;
                set.insert(name, t.clone());
            }
        }
        adam.step = scalar("step")? as u64;
        let best_state = if files.best.exists() {
            Some(checkpoint::load(&files.best)?.state)
        } else {
            None
        };
        let epochs_done = scalar("epoch")? as usize;
        let mut history = History::load(&files.history)?;
        history.records.retain(|r| r.epoch <= epochs_done);
        Ok(Trainer {
            state: ck.state,
            adam,
            cfg,
            epochs_done,
            best_val: scalar("best_val")?,
            best_state,
            history,
        })
    }

    pub fn save(&self, files: &RunFiles) -> Result<()> {
        if let Some(dir) = files.last.parent() {
            fs::create_dir_all(dir)?;
        }
        checkpoint::save(&files.last, &self.state, &self.extras())?;
        if let Some(b) = &self.best_state {
            checkpoint::save(&files.best, b, &ParamSet::new())?;
        }
        self.history.save(&files.history)
    }

    /// One pass over `train` in a seeded order, then the validation loss.
    pub fn run_epoch(&mut self, train: &[&Sample], val: &[&Sample]) -> Result<EpochRecord> {
        let epoch = self.epochs_done + 1;
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let mut acc = 0.0;
        let mut n = 0usize;
        for (bi, idx) in order.chunks(self.cfg.batch_size).enumerate() {
            let chunk: Vec<&Sample> = idx.iter().map(|&i| train[i]).collect();
            let batch = stack_batch(&chunk)?;
            let count = valid_count(&batch.mask);
            if count == 0 {
                continue;
            }
            let mut tape = Tape::with_precision(self.cfg.precision);
            let (loss, vars) = batch_graph(&self.state, &mut tape, &batch, self.cfg.beta)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: bi + 1,
                    loss: value,
                });
            }
            tape.backward(loss)?;
            let grads: Vec<Option<GridTensor>> = vars.iter().map(|&v| tape.take_grad(v)).collect();
            drop(tape);
            adam_step(&mut self.state.params, &grads, &mut self.adam, self.cfg.lr);
            acc += value * count as f64;
            n += count;
        }
        if n == 0 {
            return Err(Error::EmptyMask("training set"));
        }
        let val_loss = evaluate_loss(&self.state, val, &self.cfg)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                loss: val_loss,
            });
        }
        if val_loss < self.best_val {
            self.best_val = val_loss;
            self.best_state = Some(self.state.clone());
        }
        self.epochs_done = epoch;
        let rec = EpochRecord {
            epoch,
            train_loss: acc / n as f64,
            val_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        self.history.records.push(rec);
        Ok(rec)
    }

    /// Runs epochs until `cfg.epochs` are done. With `files`, the history,
    /// best checkpoint and (per `checkpoint_every`) the last checkpoint are
    /// written as training proceeds.
    pub fn fit(
        &mut self,
        train: &[&Sample],
        val: &[&Sample],
        files: Option<&RunFiles>,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<()> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "training needs non-empty train and validation sets (got {} and {})",
                train.len(),
                val.len()
            )));
        }
        while self.epochs_done < self.cfg.epochs {
            let rec = self.run_epoch(train, val)?;
            on_epoch(&rec);
            if let Some(f) = files {
                let every = self.cfg.checkpoint_every;
                let last = self.epochs_done == self.cfg.epochs;
                if last || (every > 0 && self.epochs_done % every == 0) {
                    self.save(f)?;
                } else {
                    self.history.save(&f.history)?;
                }
            }
        }
        Ok(())
    }
}

/// Trains `model` from scratch without writing files.
pub fn train(model: ModelState, train: &[&Sample], val: &[&Sample], cfg: TrainConfig) -> Result<Trainer> {
    let mut t = Trainer::new(model, cfg)?;
    t.fit(train, val, None, |_| {})?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;
    use rand::Rng;

    use super::*;
    use crate::data::INPUT_CHANNELS;
    use crate::models::{ModelKind, ModelSpec};

    fn samples(n: usize, h: usize, w: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let input = GridTensor::from_fn([1, INPUT_CHANNELS, h, w], |_| rng.gen_range(-1.0..1.0));
                let target = GridTensor::from_fn([1, 3, h, w], |[_, c, y, x]| 0.5 * input.at([0, 12 + c, y, x]));
                Sample {
                    input,
                    target,
                    mask: GridTensor::ones([1, 1, h, w]),
                    date: NaiveDate::MIN,
                }
            })
            .collect()
    }

    fn tiny_spec() -> ModelSpec {
        let mut s = ModelSpec::new(ModelKind::Fcn7, 4, 4).with_seed(1);
        s.stem_channels = 4;
        s
    }

    #[test]
    fn loss_weights_and_mask() {
        let mut tape = Tape::new();
        let t = GridTensor::zeros([1, 3, 2, 2]);
        let mut p = t.clone();
        p.plane_mut(0, 2).fill(0.1);
        p.plane_mut(0, 0)[3] = 100.0;
        let mut mask = GridTensor::ones([1, 1, 2, 2]);
        mask.data_mut()[3] = 0.0;
        let pv = tape.param(p);
        let l = masked_loss(&mut tape, pv, &t, &mask, 0.5).unwrap();
        assert!((tape.value(l).data()[0] - 0.5 * 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_keeps_history_flat() {
        let data = samples(6, 4, 4, 3);
        let refs: Vec<&Sample> = data.iter().collect();
        let cfg = TrainConfig {
            epochs: 3,
            lr: 0.0,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let t = train(ModelState::init(tiny_spec()).unwrap(), &refs[..4], &refs[4..], cfg).unwrap();
        let h = &t.history.records;
        for r in &h[1..] {
            assert!((r.train_loss - h[0].train_loss).abs() <= 1e-12 * h[0].train_loss);
            assert_eq!(r.val_loss, h[0].val_loss);
        }
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        let data = samples(5, 4, 4, 4);
        let refs: Vec<&Sample> = data.iter().collect();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let run = || train(ModelState::init(tiny_spec()).unwrap(), &refs[..4], &refs[4..], cfg.clone()).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.state, b.state);
        assert_eq!(a.history.losses(), b.history.losses());
    }

    #[test]
    fn divergence_is_reported_with_position() {
        let mut data = samples(3, 4, 4, 5);
        data[0].target.data_mut()[0] = f64::NAN;
        let refs: Vec<&Sample> = data.iter().collect();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let err = train(ModelState::init(tiny_spec()).unwrap(), &refs[..2], &refs[2..], cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn bad_config_rejected() {
        let s = ModelState::init(tiny_spec()).unwrap();
        for cfg in [
            TrainConfig { beta: 0.0, ..TrainConfig::default() },
            TrainConfig { lr: -1.0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
        ] {
            assert!(Trainer::new(s.clone(), cfg).is_err());
        }
    }
}
