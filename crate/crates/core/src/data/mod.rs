//! Gridded inputs: variables, the SIGD container, normalization, masking,
//! reprojection and assembly of 20-channel samples.

mod grid;
mod mask;
mod norm;
mod reproject;
mod samples;
pub mod sigd;

use std::fmt;
use std::str::FromStr;

pub use grid::{GridStack, VarGrid};
pub use mask::{coast_mask, COAST_BUFFER_PX};
pub use norm::{NormSpec, DEFAULT_CELL_KM};
pub use reproject::{bilinear_reproject, bilinear_sample, Boundary, GridGeometry};
pub use samples::{build_samples, split_dataset, stack_batch, Batch, Sample};

use crate::error::Error;

/// The variables a sample is assembled from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    SivU,
    SivV,
    Sic,
    T2m,
    WindU,
    WindV,
    CoordX,
    CoordY,
    Land,
}

impl Variable {
    pub const ALL: [Variable; 9] = [
        Variable::SivU,
        Variable::SivV,
        Variable::Sic,
        Variable::T2m,
        Variable::WindU,
        Variable::WindV,
        Variable::CoordX,
        Variable::CoordY,
        Variable::Land,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::SivU => "siv_u",
            Variable::SivV => "siv_v",
            Variable::Sic => "sic",
            Variable::T2m => "t2m",
            Variable::WindU => "wind_u",
            Variable::WindV => "wind_v",
            Variable::CoordX => "coord_x",
            Variable::CoordY => "coord_y",
            Variable::Land => "land",
        }
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Variable::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownKind {
                what: "variable",
                name: s.to_string(),
            })
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Days of history in each input stack.
pub const HISTORY_DAYS: usize = 3;

/// Per-day variables, in channel order within one day.
pub const DYNAMIC_VARS: [Variable; 6] = [
    Variable::SivU,
    Variable::SivV,
    Variable::Sic,
    Variable::T2m,
    Variable::WindU,
    Variable::WindV,
];

/// Forecast targets in output channel order.
pub const TARGET_VARS: [Variable; 3] = [Variable::SivU, Variable::SivV, Variable::Sic];

/// `3 days x 6 variables + coord_x + coord_y`.
pub const INPUT_CHANNELS: usize = HISTORY_DAYS * DYNAMIC_VARS.len() + 2;

/// Input channel of `var` on history day `day` (0 = oldest, 2 = latest).
///
/// Channels are laid out day by day, oldest first, each day in
/// [`DYNAMIC_VARS`] order, followed by `coord_x` (18) and `coord_y` (19).
pub fn input_channel(day: usize, var: Variable) -> Option<usize> {
    match var {
        Variable::CoordX => Some(HISTORY_DAYS * DYNAMIC_VARS.len()),
        Variable::CoordY => Some(HISTORY_DAYS * DYNAMIC_VARS.len() + 1),
        Variable::Land => None,
        _ => {
            let pos = DYNAMIC_VARS.iter().position(|&v| v == var)?;
            (day < HISTORY_DAYS).then_some(day * DYNAMIC_VARS.len() + pos)
        }
    }
}

/// Channels holding the latest observed (u, v, A).
pub fn latest_state_channels() -> [usize; 3] {
    TARGET_VARS.map(|v| input_channel(HISTORY_DAYS - 1, v).expect("dynamic variable"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_layout() {
        assert_eq!(INPUT_CHANNELS, 20);
        assert_eq!(input_channel(0, Variable::SivU), Some(0));
        assert_eq!(input_channel(2, Variable::WindV), Some(17));
        assert_eq!(input_channel(0, Variable::CoordY), Some(19));
        assert_eq!(latest_state_channels(), [12, 13, 14]);
        assert_eq!(input_channel(3, Variable::Sic), None);
        assert!("ice".parse::<Variable>().is_err());
    }
}
