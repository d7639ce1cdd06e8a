//! Forecasting models: the information-sharing U-net, its baselines, and
//! the statistical references.

mod baselines;
pub mod checkpoint;
mod params;
mod plain;
mod unet;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use baselines::{LinRegModel, Persistence, RIDGE_LAMBDA};
pub use params::{Bound, ParamSet};

use crate::autograd::{Activation, Precision, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::GridTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    HisUnet,
    EbUnet,
    LbUnet,
    Unet,
    Fcn7,
    CnnDense,
    Persistence,
    LinReg,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::HisUnet,
        ModelKind::EbUnet,
        ModelKind::LbUnet,
        ModelKind::Unet,
        ModelKind::Fcn7,
        ModelKind::CnnDense,
        ModelKind::Persistence,
        ModelKind::LinReg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::HisUnet => "his_unet",
            ModelKind::EbUnet => "eb_unet",
            ModelKind::LbUnet => "lb_unet",
            ModelKind::Unet => "unet",
            ModelKind::Fcn7 => "fcn7",
            ModelKind::CnnDense => "cnn_dense",
            ModelKind::Persistence => "persistence",
            ModelKind::LinReg => "linreg",
        }
    }

    /// Trained by gradient descent through the tape.
    pub fn is_neural(self) -> bool {
        !matches!(self, ModelKind::Persistence | ModelKind::LinReg)
    }

    /// Required divisor of the grid height and width.
    pub fn size_multiple(self, depth: usize) -> usize {
        match self {
            ModelKind::HisUnet | ModelKind::EbUnet | ModelKind::LbUnet | ModelKind::Unet => {
                1 << depth
            }
            ModelKind::CnnDense => 1 << plain::CNN_STAGES,
            _ => 1,
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind {
                what: "model",
                name: s.to_string(),
            })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture selector plus every structural hyperparameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub stem_channels: usize,
    /// Number of pooling levels of the U-net variants.
    pub depth: usize,
    pub input_channels: usize,
    pub output_channels: usize,
    pub activation: Activation,
    pub seed: u64,
    /// Grid size the model is built for; WAM weight grids and the dense
    /// layer of `cnn_dense` depend on it.
    pub height: usize,
    pub width: usize,
    /// Replace every attention map by ones. Used to check WAM algebra.
    pub identity_attention: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, height: usize, width: usize) -> Self {
        ModelSpec {
            kind,
            stem_channels: 32,
            depth: 3,
            input_channels: crate::data::INPUT_CHANNELS,
            output_channels: 3,
            activation: Activation::Tanh,
            seed: 0,
            height,
            width,
            identity_attention: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Feature channels of encoder level `level` (1-based); `depth + 1` is
    /// the bottleneck.
    pub fn level_channels(&self, level: usize) -> usize {
        self.stem_channels << (level - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stem_channels == 0 || self.depth == 0 {
            return Err(Error::InvalidParameter(
                "stem_channels and depth must be positive".into(),
            ));
        }
        if self.output_channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "output_channels must be 3 (u, v, A), got {}",
                self.output_channels
            )));
        }
        let m = self.kind.size_multiple(self.depth);
        if self.height == 0 || self.width == 0 || self.height % m != 0 || self.width % m != 0 {
            return Err(Error::SpatialSize {
                op: self.kind.name(),
                height: self.height,
                width: self.width,
                multiple: m,
            });
        }
        Ok(())
    }
}

/// Output of a neural forward pass, each `[B, 1, H, W]` in normalized units.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub u: Var,
    pub v: Var,
    pub a: Var,
}

impl Forward {
    /// `[B, 3, H, W]` stack in (u, v, A) order.
    pub fn stacked(&self, tape: &mut Tape) -> Result<Var> {
        tape.concat(&[self.u, self.v, self.a])
    }
}

/// A neural model: its spec and every learnable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub spec: ModelSpec,
    pub params: ParamSet,
}

impl ModelState {
    /// Builds a freshly initialized network from `spec.seed`.
    pub fn init(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let params = match spec.kind {
            ModelKind::HisUnet | ModelKind::EbUnet | ModelKind::LbUnet | ModelKind::Unet => {
                unet::init(&spec, &mut rng)
            }
            ModelKind::Fcn7 => plain::init_fcn7(&spec, &mut rng),
            ModelKind::CnnDense => plain::init_cnn_dense(&spec, &mut rng),
            ModelKind::Persistence | ModelKind::LinReg => {
                return Err(Error::Model(format!(
                    "{} has no network parameters",
                    spec.kind
                )))
            }
        };
        Ok(ModelState { spec, params })
    }

    /// Records the forward pass of the network on `tape`, binding every
    /// parameter as a differentiable leaf. Returns the bound parameters too
    /// so callers can collect gradients.
    pub fn forward<'a>(&'a self, tape: &mut Tape, x: Var) -> Result<(Forward, Bound<'a>)> {
        let [_, c, h, w] = tape.shape(x);
        if c != self.spec.input_channels {
            return Err(Error::Shape {
                op: self.spec.kind.name(),
                dim: "input channels",
                expected: self.spec.input_channels,
                got: c,
            });
        }
        if (h, w) != (self.spec.height, self.spec.width) {
            return Err(Error::SpatialSize {
                op: self.spec.kind.name(),
                height: h,
                width: w,
                multiple: self.spec.kind.size_multiple(self.spec.depth),
            });
        }
        let bound = self.params.bind(tape);
        let out = match self.spec.kind {
            ModelKind::HisUnet | ModelKind::EbUnet | ModelKind::LbUnet | ModelKind::Unet => {
                unet::forward(&self.spec, tape, &bound, x)?
            }
            ModelKind::Fcn7 => plain::forward_fcn7(&self.spec, tape, &bound, x)?,
            ModelKind::CnnDense => plain::forward_cnn_dense(&self.spec, tape, &bound, x)?,
            ModelKind::Persistence | ModelKind::LinReg => unreachable!("validated in init"),
        };
        Ok((out, bound))
    }

    /// Zeroes the weights and biases of every output head.
    pub fn zero_heads(&mut self) {
        for (name, t) in self.params.iter_mut() {
            if name.contains("head.") || name.starts_with("cnn.dense.") {
                t.fill(0.0);
            }
        }
    }

    /// Number of WAM levels stored in this state.
    pub fn wam_levels(&self) -> usize {
        (1..)
            .take_while(|l| self.params.get(&format!("wam{l}.a_in_siv")).is_some())
            .count()
    }
}

/// Anything that maps a `[B, 20, H, W]` input stack to a `[B, 3, H, W]`
/// (u, v, A) forecast in normalized units.
pub trait Forecaster {
    fn name(&self) -> String;

    fn predict(&self, input: &GridTensor) -> Result<GridTensor>;

    /// Pixels where the forecast is defined, `None` meaning everywhere.
    fn output_mask(&self) -> Option<&[bool]> {
        None
    }
}

/// Runs a neural model without keeping the graph.
pub struct NeuralForecaster<'a> {
    pub state: &'a ModelState,
    pub precision: Precision,
}

impl Forecaster for NeuralForecaster<'_> {
    fn name(&self) -> String {
        self.state.spec.kind.name().to_string()
    }

    fn predict(&self, input: &GridTensor) -> Result<GridTensor> {
        let mut tape = Tape::with_precision(self.precision);
        let x = tape.constant(input.clone());
        let (out, _) = self.state.forward(&mut tape, x)?;
        let y = out.stacked(&mut tape)?;
        Ok(tape.value(y).clone())
    }
}

impl Forecaster for ModelState {
    fn name(&self) -> String {
        self.spec.kind.name().to_string()
    }

    fn predict(&self, input: &GridTensor) -> Result<GridTensor> {
        NeuralForecaster {
            state: self,
            precision: Precision::F64,
        }
        .predict(input)
    }
}
