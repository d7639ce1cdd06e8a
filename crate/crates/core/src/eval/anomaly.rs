use std::collections::{BTreeMap, BTreeSet};

use chrono::Datelike;

use crate::data::GridStack;
use crate::error::{Error, Result};

/// Threshold above which a pixel counts towards sea-ice area.
pub const ICE_EXTENT_THRESHOLD: f64 = 0.15;

/// Mean field of one calendar month of one year.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthlyField {
    pub mean: Vec<f64>,
    /// Pixels with at least one valid day.
    pub valid: Vec<bool>,
    pub days: usize,
}

impl MonthlyField {
    /// Mean over the valid pixels, or `None` when none are valid.
    pub fn area_mean(&self) -> Option<f64> {
        let (s, n) = self
            .mean
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v, n + 1));
        (n > 0).then(|| s / n as f64)
    }
}

/// Monthly means keyed by `(year, month)`.
pub type MonthlyMeans = BTreeMap<(i32, u32), MonthlyField>;

/// Monthly per-pixel means of a daily field produced by `field(day)`, which
/// returns values and validity or `None` when the day is missing.
pub fn monthly_means_with(
    stack: &GridStack,
    mut field: impl FnMut(usize) -> Option<(Vec<f64>, Vec<bool>)>,
) -> MonthlyMeans {
    let mut acc: BTreeMap<(i32, u32), (Vec<f64>, Vec<usize>, usize)> = BTreeMap::new();
    for day in 0..stack.n_days {
        let Some((vals, valid)) = field(day) else { continue };
        let n = vals.len();
        let d = stack.date(day);
        let e = acc
            .entry((d.year(), d.month()))
            .or_insert_with(|| (vec![0.0; n], vec![0; n], 0));
        e.2 += 1;
        for k in 0..n {
            if valid[k] {
                e.0[k] += vals[k];
                e.1[k] += 1;
            }
        }
    }
    acc.into_iter()
        .map(|(key, (sum, count, days))| {
            let mean = sum.iter().zip(&count).map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
            let valid = count.iter().map(|&c| c > 0).collect();
            (key, MonthlyField { mean, valid, days })
        })
        .collect()
}

/// Monthly means of a stored variable.
pub fn monthly_means(stack: &GridStack, var: &str) -> Result<MonthlyMeans> {
    if stack.var_index(var).is_none() {
        return Err(Error::UnknownKind {
            what: "stack variable",
            name: var.to_string(),
        });
    }
    Ok(monthly_means_with(stack, |day| {
        let g = stack.get(day, var)?;
        (!g.is_missing()).then(|| (g.values.iter().map(|&v| f64::from(v)).collect(), g.valid.clone()))
    }))
}

/// Monthly means of wind speed `sqrt(u^2 + v^2)`.
pub fn monthly_wind_speed(stack: &GridStack) -> Result<MonthlyMeans> {
    for v in ["wind_u", "wind_v"] {
        if stack.var_index(v).is_none() {
            return Err(Error::UnknownKind {
                what: "stack variable",
                name: v.to_string(),
            });
        }
    }
    Ok(monthly_means_with(stack, |day| {
        let (u, v) = (stack.get(day, "wind_u")?, stack.get(day, "wind_v")?);
        if u.is_missing() || v.is_missing() {
            return None;
        }
        let vals = u.values.iter().zip(&v.values).map(|(&a, &b)| f64::from(a).hypot(f64::from(b))).collect();
        let valid = u.valid.iter().zip(&v.valid).map(|(&a, &b)| a && b).collect();
        Some((vals, valid))
    }))
}

/// Area in km^2 of valid pixels with concentration above 15 %.
pub fn sea_ice_area(sic: &[f64], valid: &[bool], cell_km: f64) -> f64 {
    let n = sic
        .iter()
        .zip(valid)
        .filter(|(&a, &ok)| ok && a > ICE_EXTENT_THRESHOLD)
        .count();
    n as f64 * cell_km * cell_km
}

/// Monthly means of daily sea-ice area, as single-pixel fields.
pub fn monthly_sea_ice_area(stack: &GridStack, cell_km: f64) -> Result<MonthlyMeans> {
    if stack.var_index("sic").is_none() {
        return Err(Error::UnknownKind {
            what: "stack variable",
            name: "sic".into(),
        });
    }
    Ok(monthly_means_with(stack, |day| {
        let g = stack.get(day, "sic")?;
        if g.is_missing() {
            return None;
        }
        let vals: Vec<f64> = g.values.iter().map(|&v| f64::from(v)).collect();
        Some((vec![sea_ice_area(&vals, &g.valid, cell_km)], vec![true]))
    }))
}

/// Anomaly of one calendar month.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthAnomaly {
    pub month: u32,
    /// Per-pixel target minus baseline mean; NaN where either is invalid.
    pub grid: Vec<f64>,
    /// Area mean of the valid anomaly pixels.
    pub scalar: Option<f64>,
    /// Baseline years that contributed.
    pub baseline_years: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyReport {
    pub target_year: i32,
    pub months: Vec<MonthAnomaly>,
    /// Months present in the target year but absent from every baseline
    /// year, or present in the baseline but absent from the target year.
    pub gaps: Vec<u32>,
}

/// Target-year monthly means minus the mean over `baseline_years` of the
/// same calendar month.
pub fn anomaly(means: &MonthlyMeans, baseline_years: &[i32], target_year: i32) -> Result<AnomalyReport> {
    if baseline_years.is_empty() {
        return Err(Error::InvalidParameter("anomaly baseline needs at least one year".into()));
    }
    let months: BTreeSet<u32> = means
        .keys()
        .filter(|(y, _)| *y == target_year || baseline_years.contains(y))
        .map(|&(_, m)| m)
        .collect();
    let mut out = Vec::new();
    let mut gaps = Vec::new();
    for m in months {
        let base: Vec<&MonthlyField> = baseline_years.iter().filter_map(|y| means.get(&(*y, m))).collect();
        let (Some(target), false) = (means.get(&(target_year, m)), base.is_empty()) else {
            gaps.push(m);
            continue;
        };
        let n = target.mean.len();
        let mut grid = vec![f64::NAN; n];
        let (mut s, mut c) = (0.0, 0usize);
        for k in 0..n {
            let contrib: Vec<f64> = base.iter().filter(|f| f.valid[k]).map(|f| f.mean[k]).collect();
            if !target.valid[k] || contrib.is_empty() {
                continue;
            }
            let clim = contrib.iter().sum::<f64>() / contrib.len() as f64;
            grid[k] = target.mean[k] - clim;
            s += grid[k];
            c += 1;
        }
        out.push(MonthAnomaly {
            month: m,
            grid,
            scalar: (c > 0).then(|| s / c as f64),
            baseline_years: base.len(),
        });
    }
    Ok(AnomalyReport {
        target_year,
        months: out,
        gaps,
    })
}
