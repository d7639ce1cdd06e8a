use std::collections::BTreeMap;

use super::grid::VarGrid;
use super::Variable;
use crate::error::{Error, Result};

/// Nominal `(min, max)` per variable, mapped onto `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormSpec {
    bounds: BTreeMap<String, (f64, f64)>,
}

/// Grid spacing assumed when no coordinate extent is configured.
pub const DEFAULT_CELL_KM: f64 = 25.0;

impl NormSpec {
    /// Physical envelopes plus coordinate bounds covering an `h x w` grid
    /// with `cell_km` spacing starting at zero.
    pub fn for_grid(height: usize, width: usize, cell_km: f64) -> Self {
        let extent = |n: usize| (cell_km * n.saturating_sub(1) as f64).max(cell_km);
        let mut bounds = BTreeMap::new();
        bounds.insert("siv_u".into(), (-50.0, 50.0));
        bounds.insert("siv_v".into(), (-50.0, 50.0));
        bounds.insert("sic".into(), (0.0, 1.0));
        bounds.insert("t2m".into(), (-50.0, 30.0));
        bounds.insert("wind_u".into(), (-40.0, 40.0));
        bounds.insert("wind_v".into(), (-40.0, 40.0));
        bounds.insert("coord_x".into(), (0.0, extent(width)));
        bounds.insert("coord_y".into(), (0.0, extent(height)));
        bounds.insert("land".into(), (0.0, 1.0));
        NormSpec { bounds }
    }

    pub fn set(&mut self, var: &str, min: f64, max: f64) -> Result<()> {
        if !(min < max) {
            return Err(Error::InvalidParameter(format!(
                "normalization bounds for {var}: min {min} must be below max {max}"
            )));
        }
        self.bounds.insert(var.to_string(), (min, max));
        Ok(())
    }

    pub fn bounds(&self, var: &str) -> Result<(f64, f64)> {
        self.bounds
            .get(var)
            .copied()
            .ok_or_else(|| Error::UnknownKind {
                what: "normalization variable",
                name: var.to_string(),
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, (f64, f64))> {
        self.bounds.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// `2 (x - min) / (max - min) - 1`, clamped to `[-1, 1]`.
    pub fn normalize_value(&self, var: Variable, x: f64) -> Result<f64> {
        let (lo, hi) = self.bounds(var.name())?;
        Ok((2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0))
    }

    pub fn denormalize_value(&self, var: Variable, z: f64) -> Result<f64> {
        let (lo, hi) = self.bounds(var.name())?;
        Ok((z + 1.0) * 0.5 * (hi - lo) + lo)
    }

    /// Normalized copy of a grid; invalid pixels map to 0.
    pub fn normalize(&self, g: &VarGrid) -> Result<Vec<f64>> {
        let (lo, hi) = self.bounds(&g.var)?;
        let scale = 2.0 / (hi - lo);
        Ok(g.values
            .iter()
            .zip(&g.valid)
            .map(|(&v, &ok)| {
                if ok {
                    ((f64::from(v) - lo) * scale - 1.0).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn denormalize(&self, var: &str, z: &[f64]) -> Result<Vec<f64>> {
        let (lo, hi) = self.bounds(var)?;
        Ok(z.iter().map(|&v| (v + 1.0) * 0.5 * (hi - lo) + lo).collect())
    }
}
