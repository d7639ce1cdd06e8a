use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::attention::WAM_GRIDS;
use crate::data::{sigd, GridStack, VarGrid};
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelState};

/// Channel mean of one WAM weight grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WamMap {
    pub level: usize,
    pub grid: &'static str,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

/// For every WAM level and each of its four weight grids, the mean over
/// channels as an `H x W` map.
pub fn export_wam_maps(state: &ModelState) -> Result<Vec<WamMap>> {
    if state.spec.kind != ModelKind::HisUnet {
        return Err(Error::Model(format!(
            "WAM export needs a his_unet checkpoint, got {}",
            state.spec.kind
        )));
    }
    let mut out = Vec::new();
    for level in 1..=state.wam_levels() {
        for grid in WAM_GRIDS {
            let t = state.params.require(&format!("wam{level}.{grid}"))?;
            let [_, c, h, w] = t.shape();
            let mut values = vec![0.0; h * w];
            for ch in 0..c {
                for (v, &x) in values.iter_mut().zip(t.plane(0, ch)) {
                    *v += x;
                }
            }
            values.iter_mut().for_each(|v| *v /= c as f64);
            out.push(WamMap {
                level,
                grid,
                height: h,
                width: w,
                values,
            });
        }
    }
    Ok(out)
}

/// Writes one SIGD file per level, `wam{level}.sigd`, holding the four maps
/// as variables of a single day. Returns the paths written.
pub fn write_wam_maps(dir: impl AsRef<Path>, maps: &[WamMap], date: NaiveDate) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut levels: Vec<usize> = maps.iter().map(|m| m.level).collect();
    levels.dedup();
    let mut paths = Vec::new();
    for level in levels {
        let these: Vec<&WamMap> = maps.iter().filter(|m| m.level == level).collect();
        let (h, w) = (these[0].height, these[0].width);
        let vars = these.iter().map(|m| m.grid.to_string()).collect();
        let mut stack = GridStack::new(h, w, date, vars, 1);
        for m in these {
            let raw = m.values.iter().map(|&v| v as f32).collect();
            stack.put(0, VarGrid::from_raw(m.grid, date, h, w, raw)?)?;
        }
        let path = dir.join(format!("wam{level}.sigd"));
        sigd::write_stack(&path, &stack)?;
        paths.push(path);
    }
    Ok(paths)
}
