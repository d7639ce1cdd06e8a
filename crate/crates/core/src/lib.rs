pub mod attention;
pub mod autograd;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradsuite;
pub mod models;
pub mod synth;
pub mod tensor;
pub mod train;

pub use autograd::{Activation, EwOp, PoolMode, Precision, Tape, Var};
pub use error::{Error, Result};
pub use tensor::{GridTensor, Shape};
