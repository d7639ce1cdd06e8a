//! Forecast skill: correlation, RMSE and MAE in physical units, broken down
//! by month and region, plus WAM weight maps and monthly anomalies.

mod anomaly;
mod metrics;
mod regions;
mod wam;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::Datelike;

pub use anomaly::{
    anomaly, monthly_means, monthly_means_with, monthly_sea_ice_area, monthly_wind_speed, sea_ice_area,
    AnomalyReport, MonthAnomaly, MonthlyField, MonthlyMeans, ICE_EXTENT_THRESHOLD,
};
pub use metrics::{corr, mae, rmse, siv_metric, Moments};
pub use regions::{Region, RegionMask, REGION_VAR};
pub use wam::{export_wam_maps, write_wam_maps, WamMap};

use crate::data::{stack_batch, NormSpec, Sample, TARGET_VARS};
use crate::error::{Error, Result};
use crate::models::Forecaster;

/// Which slice of the evaluation set a record summarizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Overall,
    Month(u32),
    RegionMonth(Region, u32),
}

impl Scope {
    pub fn name(&self) -> &'static str {
        match self {
            Scope::Overall => "overall",
            Scope::Month(_) => "month",
            Scope::RegionMonth(..) => "region_month",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    /// Concentration, percent.
    Sic,
    /// Drift, km/day, averaged over u and v.
    Siv,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Sic => "SIC",
            Target::Siv => "SIV",
        }
    }
}

/// One row of the metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub model: String,
    pub scope: Scope,
    pub variable: Target,
    /// `None` when every contributing day had zero variance.
    pub r: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub n_pixels: usize,
    /// Days left out of R because their correlation was undefined.
    pub r_undefined: usize,
}

pub const METRICS_HEADER: &str = "model\tscope\tmonth\tregion\tvariable\tR\tRMSE\tMAE\tn_pixels\tr_undefined";

/// Error moments over every day plus correlation moments over the days where
/// R was defined.
#[derive(Clone, Copy, Debug, Default)]
struct Cell {
    err: [Moments; 3],
    corr: [Moments; 3],
    undefined_sic: usize,
    undefined_siv: usize,
}

impl Cell {
    fn add_day(&mut self, day: &[Moments; 3]) {
        for c in 0..3 {
            self.err[c].merge(&day[c]);
        }
        if day[2].corr().is_some() {
            self.corr[2].merge(&day[2]);
        } else {
            self.undefined_sic += 1;
        }
        if day[0].corr().is_some() && day[1].corr().is_some() {
            self.corr[0].merge(&day[0]);
            self.corr[1].merge(&day[1]);
        } else {
            self.undefined_siv += 1;
        }
    }

    fn records(&self, model: &str, scope: Scope) -> Vec<MetricsRecord> {
        let mut out = Vec::new();
        let e = &self.err;
        if e[2].n > 0 {
            out.push(MetricsRecord {
                model: model.to_string(),
                scope,
                variable: Target::Sic,
                r: self.corr[2].corr(),
                rmse: e[2].rmse().expect("n > 0"),
                mae: e[2].mae().expect("n > 0"),
                n_pixels: e[2].n,
                r_undefined: self.undefined_sic,
            });
        }
        if e[0].n > 0 {
            let r = match (self.corr[0].corr(), self.corr[1].corr()) {
                (Some(a), Some(b)) => Some(0.5 * (a + b)),
                _ => None,
            };
            out.push(MetricsRecord {
                model: model.to_string(),
                scope,
                variable: Target::Siv,
                r,
                rmse: 0.5 * (e[0].rmse().expect("n > 0") + e[1].rmse().expect("n > 0")),
                mae: 0.5 * (e[0].mae().expect("n > 0") + e[1].mae().expect("n > 0")),
                n_pixels: e[0].n,
                r_undefined: self.undefined_siv,
            });
        }
        out
    }
}

/// Converts a normalized `[3, H*W]` forecast plane into physical units:
/// drift in km/day, concentration in percent.
fn physical(norm: &NormSpec, channel: usize, z: &[f64]) -> Result<Vec<f64>> {
    let mut v = norm.denormalize(TARGET_VARS[channel].name(), z)?;
    if channel == 2 {
        v.iter_mut().for_each(|x| *x *= 100.0);
    }
    Ok(v)
}

/// Scores `model` on `samples`: one record per variable for the whole set,
/// for each calendar month, and for each region and month.
///
/// Samples are visited in date order, so the result does not depend on the
/// order they are passed in.
pub fn evaluate(
    model: &dyn Forecaster,
    samples: &[&Sample],
    norm: &NormSpec,
    regions: Option<&RegionMask>,
    batch_size: usize,
) -> Result<Vec<MetricsRecord>> {
    let mut ordered: Vec<&Sample> = samples.to_vec();
    ordered.sort_by_key(|s| s.date);
    let mut cells: BTreeMap<Scope, Cell> = BTreeMap::new();
    for chunk in ordered.chunks(batch_size.max(1)) {
        let batch = stack_batch(chunk)?;
        let pred = model.predict(&batch.input)?;
        let [_, _, h, w] = batch.target.shape();
        let hw = h * w;
        if let Some(r) = regions {
            if (r.height, r.width) != (h, w) {
                return Err(Error::Shape {
                    op: "evaluate",
                    dim: "region mask pixels",
                    expected: hw,
                    got: r.height * r.width,
                });
            }
        }
        for (b, s) in chunk.iter().enumerate() {
            let mut mask: Vec<bool> = s.mask.data().iter().map(|&m| m > 0.0).collect();
            if let Some(om) = model.output_mask() {
                mask.iter_mut().zip(om).for_each(|(m, &o)| *m &= o);
            }
            let mut p = Vec::with_capacity(3);
            let mut o = Vec::with_capacity(3);
            for c in 0..3 {
                p.push(physical(norm, c, pred.plane(b, c))?);
                o.push(physical(norm, c, batch.target.plane(b, c))?);
            }
            let month = s.date.month();
            let day = |m: &[bool]| -> [Moments; 3] { [0, 1, 2].map(|c| Moments::from_pairs(&p[c], &o[c], m)) };
            let all = day(&mask);
            if all[0].n == 0 {
                continue;
            }
            cells.entry(Scope::Overall).or_default().add_day(&all);
            cells.entry(Scope::Month(month)).or_default().add_day(&all);
            if let Some(r) = regions {
                for region in Region::LABELLED {
                    let rm: Vec<bool> = (0..hw).map(|k| mask[k] && r.labels[k] == region).collect();
                    let d = day(&rm);
                    if d[0].n > 0 {
                        cells.entry(Scope::RegionMonth(region, month)).or_default().add_day(&d);
                    }
                }
            }
        }
    }
    let name = model.name();
    Ok(cells
        .iter()
        .flat_map(|(scope, cell)| cell.records(&name, *scope))
        .collect())
}

fn fmt_num(v: f64) -> String {
    format!("{v:.6}")
}

/// The metrics table as tab-separated text with [`METRICS_HEADER`].
pub fn metrics_tsv(records: &[MetricsRecord]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in records {
        let (month, region) = match r.scope {
            Scope::Overall => ("all".to_string(), "all"),
            Scope::Month(m) => (m.to_string(), "all"),
            Scope::RegionMonth(g, m) => (m.to_string(), g.name()),
        };
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.model,
            r.scope.name(),
            month,
            region,
            r.variable.name(),
            r.r.map_or_else(|| "NA".to_string(), fmt_num),
            fmt_num(r.rmse),
            fmt_num(r.mae),
            r.n_pixels,
            r.r_undefined
        )
        .expect("write to string");
    }
    s
}

pub fn write_metrics(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    fs::write(path, metrics_tsv(records))?;
    Ok(())
}

/// The overall record of `variable` for `model`, if present.
pub fn overall<'a>(records: &'a [MetricsRecord], model: &str, variable: Target) -> Option<&'a MetricsRecord> {
    records
        .iter()
        .find(|r| r.model == model && r.scope == Scope::Overall && r.variable == variable)
}
