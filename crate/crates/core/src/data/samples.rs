use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grid::{GridStack, VarGrid};
use super::mask::{coast_mask, COAST_BUFFER_PX};
use super::norm::NormSpec;
use super::{input_channel, Variable, DYNAMIC_VARS, HISTORY_DAYS, INPUT_CHANNELS, TARGET_VARS};
use crate::error::{Error, Result};
use crate::tensor::GridTensor;

/// One forecast case: three days of history, the next day's state, and the
/// pixels the loss and metrics are allowed to see.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `[1, 20, H, W]`, normalized to `[-1, 1]`.
    pub input: GridTensor,
    /// `[1, 3, H, W]`: normalized (u, v, A) on the target date.
    pub target: GridTensor,
    /// `[1, 1, H, W]` of 0/1.
    pub mask: GridTensor,
    /// Target date.
    pub date: NaiveDate,
}

impl Sample {
    pub fn valid_pixels(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m > 0.0).count()
    }
}

/// Samples stacked along the batch axis.
#[derive(Clone, Debug)]
pub struct Batch {
    pub input: GridTensor,
    pub target: GridTensor,
    pub mask: GridTensor,
    pub dates: Vec<NaiveDate>,
}

pub fn stack_batch(samples: &[&Sample]) -> Result<Batch> {
    let collect = |f: fn(&Sample) -> &GridTensor| {
        GridTensor::stack(&samples.iter().map(|s| f(s)).collect::<Vec<_>>())
    };
    Ok(Batch {
        input: collect(|s| &s.input)?,
        target: collect(|s| &s.target)?,
        mask: collect(|s| &s.mask)?,
        dates: samples.iter().map(|s| s.date).collect(),
    })
}

const REQUIRED: [Variable; 9] = Variable::ALL;

/// One sample per complete four-day window, in date order.
///
/// Day `t` is the target; days `t-3 .. t-1` form the input. Coordinates and
/// land come from day `t-1`. A window is skipped when any grid it reads is
/// missing entirely. Invalid land pixels count as land.
pub fn build_samples(stack: &GridStack, norm: &NormSpec) -> Result<Vec<Sample>> {
    for v in REQUIRED {
        if stack.var_index(v.name()).is_none() {
            return Err(Error::InvalidParameter(format!(
                "grid stack lacks variable '{}'",
                v.name()
            )));
        }
        norm.bounds(v.name())?;
    }
    let (h, w) = (stack.height, stack.width);
    let hw = h * w;
    let mut out = Vec::new();
    for t in HISTORY_DAYS..stack.n_days {
        let grid = |day: usize, v: Variable| stack.get(day, v.name()).expect("checked above");
        let latest = t - 1;
        let mut reads: Vec<(usize, &VarGrid)> = Vec::with_capacity(INPUT_CHANNELS + 4);
        for d in 0..HISTORY_DAYS {
            for v in DYNAMIC_VARS {
                let ch = input_channel(d, v).expect("dynamic variable");
                reads.push((ch, grid(t - HISTORY_DAYS + d, v)));
            }
        }
        reads.push((input_channel(0, Variable::CoordX).unwrap(), grid(latest, Variable::CoordX)));
        reads.push((input_channel(0, Variable::CoordY).unwrap(), grid(latest, Variable::CoordY)));
        let land = grid(latest, Variable::Land);
        let targets = TARGET_VARS.map(|v| grid(t, v));
        if reads.iter().any(|(_, g)| g.is_missing())
            || land.is_missing()
            || targets.iter().any(|g| g.is_missing())
        {
            continue;
        }

        let is_land: Vec<bool> = land
            .values
            .iter()
            .zip(&land.valid)
            .map(|(&v, &ok)| !ok || v >= 0.5)
            .collect();
        let mut valid = coast_mask(&is_land, h, w, COAST_BUFFER_PX);
        for g in reads.iter().map(|(_, g)| *g).chain(targets.iter().copied()) {
            for (m, &ok) in valid.iter_mut().zip(&g.valid) {
                *m &= ok;
            }
        }

        let mut input = GridTensor::zeros([1, INPUT_CHANNELS, h, w]);
        for (ch, g) in &reads {
            input.data_mut()[ch * hw..(ch + 1) * hw].copy_from_slice(&norm.normalize(g)?);
        }
        let mut target = GridTensor::zeros([1, TARGET_VARS.len(), h, w]);
        for (ch, g) in targets.iter().enumerate() {
            target.data_mut()[ch * hw..(ch + 1) * hw].copy_from_slice(&norm.normalize(g)?);
        }
        let mask = GridTensor::from_vec(
            [1, 1, h, w],
            valid.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )?;
        out.push(Sample {
            input,
            target,
            mask,
            date: stack.date(t),
        });
    }
    Ok(out)
}

/// Seeded random split into `(train, val)` with `round(ratio * n)` training
/// items. Each part keeps the input order.
pub fn split_dataset<T>(items: Vec<T>, ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(format!(
            "split ratio {ratio} must lie in [0, 1]"
        )));
    }
    let n = items.len();
    let n_train = (ratio * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let (mut train, mut val) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
    for (item, t) in items.into_iter().zip(is_train) {
        if t {
            train.push(item);
        } else {
            val.push(item);
        }
    }
    Ok((train, val))
}
