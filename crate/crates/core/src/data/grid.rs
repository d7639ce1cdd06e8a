use chrono::{Days, NaiveDate};

use crate::error::{Error, Result};

/// One variable on one day: an `H x W` grid plus its validity mask.
///
/// Values are held in single precision, which is what the SIGD container
/// stores. Invalid pixels hold `0.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarGrid {
    pub var: String,
    pub date: NaiveDate,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
    pub valid: Vec<bool>,
}

impl VarGrid {
    pub fn new(var: impl Into<String>, date: NaiveDate, height: usize, width: usize) -> Self {
        VarGrid {
            var: var.into(),
            date,
            height,
            width,
            values: vec![0.0; height * width],
            valid: vec![true; height * width],
        }
    }

    /// Builds a grid from raw values; NaN marks a missing pixel.
    pub fn from_raw(
        var: impl Into<String>,
        date: NaiveDate,
        height: usize,
        width: usize,
        raw: Vec<f32>,
    ) -> Result<Self> {
        if raw.len() != height * width {
            return Err(Error::Shape {
                op: "VarGrid::from_raw",
                dim: "pixels",
                expected: height * width,
                got: raw.len(),
            });
        }
        let valid: Vec<bool> = raw.iter().map(|v| !v.is_nan()).collect();
        let values = raw
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v })
            .collect();
        Ok(VarGrid {
            var: var.into(),
            date,
            height,
            width,
            values,
            valid,
        })
    }

    /// Values with NaN at invalid pixels.
    pub fn raw(&self) -> Vec<f32> {
        self.values
            .iter()
            .zip(&self.valid)
            .map(|(&v, &ok)| if ok { v } else { f32::NAN })
            .collect()
    }

    pub fn missing(height: usize, width: usize, var: impl Into<String>, date: NaiveDate) -> Self {
        let mut g = Self::new(var, date, height, width);
        g.valid.fill(false);
        g
    }

    /// A grid with no valid pixel counts as absent for that day.
    pub fn is_missing(&self) -> bool {
        !self.valid.iter().any(|&v| v)
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, value: f32) {
        self.values[y * self.width + x] = value;
        self.valid[y * self.width + x] = true;
    }

    pub fn invalidate(&mut self, y: usize, x: usize) {
        self.values[y * self.width + x] = 0.0;
        self.valid[y * self.width + x] = false;
    }
}

/// A run of consecutive days, each holding the same variables on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridStack {
    pub height: usize,
    pub width: usize,
    pub start: NaiveDate,
    pub vars: Vec<String>,
    pub n_days: usize,
    /// Day-major: entry `day * vars.len() + var`.
    pub grids: Vec<VarGrid>,
}

impl GridStack {
    /// An empty stack with every grid missing.
    pub fn new(height: usize, width: usize, start: NaiveDate, vars: Vec<String>, n_days: usize) -> Self {
        let mut grids = Vec::with_capacity(n_days * vars.len());
        for d in 0..n_days {
            let date = start + Days::new(d as u64);
            for v in &vars {
                grids.push(VarGrid::missing(height, width, v.clone(), date));
            }
        }
        GridStack {
            height,
            width,
            start,
            vars,
            n_days,
            grids,
        }
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start + Days::new(day as u64)
    }

    pub fn var_index(&self, var: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == var)
    }

    pub fn get(&self, day: usize, var: &str) -> Option<&VarGrid> {
        let vi = self.var_index(var)?;
        (day < self.n_days).then(|| &self.grids[day * self.vars.len() + vi])
    }

    pub fn get_mut(&mut self, day: usize, var: &str) -> Option<&mut VarGrid> {
        let vi = self.var_index(var)?;
        let nv = self.vars.len();
        (day < self.n_days).then(|| &mut self.grids[day * nv + vi])
    }

    /// Replaces a grid, keeping the stack's date for that day.
    pub fn put(&mut self, day: usize, mut grid: VarGrid) -> Result<()> {
        if grid.height != self.height || grid.width != self.width {
            return Err(Error::Shape {
                op: "GridStack::put",
                dim: "pixels",
                expected: self.height * self.width,
                got: grid.height * grid.width,
            });
        }
        let vi = self.var_index(&grid.var).ok_or_else(|| Error::UnknownKind {
            what: "stack variable",
            name: grid.var.clone(),
        })?;
        if day >= self.n_days {
            return Err(Error::InvalidParameter(format!(
                "day {day} outside a {}-day stack",
                self.n_days
            )));
        }
        grid.date = self.date(day);
        let nv = self.vars.len();
        self.grids[day * nv + vi] = grid;
        Ok(())
    }

    /// Days `0..n`, re-dated from the same start.
    pub fn truncated(&self, n: usize) -> GridStack {
        let n = n.min(self.n_days);
        GridStack {
            height: self.height,
            width: self.width,
            start: self.start,
            vars: self.vars.clone(),
            n_days: n,
            grids: self.grids[..n * self.vars.len()].to_vec(),
        }
    }
}
