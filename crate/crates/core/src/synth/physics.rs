use super::WorldConfig;
use crate::data::{bilinear_sample, Boundary, GridGeometry};
use crate::error::{Error, Result};

/// Seconds per day over metres per kilometre.
const MS_TO_KM_PER_DAY: f64 = 86.4;

/// Free drift: `alpha * R(theta) * wind` plus the background current.
///
/// Wind in m/s, drift in km/day, zero on land. Positive `theta` turns the
/// drift clockwise from the wind.
pub fn drift_from_wind(
    wind_u: &[f64],
    wind_v: &[f64],
    land: &[bool],
    cfg: &WorldConfig,
) -> (Vec<f64>, Vec<f64>) {
    let th = -cfg.theta_deg.to_radians();
    let (s, c) = th.sin_cos();
    let k = cfg.alpha * MS_TO_KM_PER_DAY;
    let mut u = vec![0.0; wind_u.len()];
    let mut v = vec![0.0; wind_u.len()];
    for i in 0..wind_u.len() {
        if land[i] {
            continue;
        }
        u[i] = k * (c * wind_u[i] - s * wind_v[i]) + cfg.current_u;
        v[i] = k * (s * wind_u[i] + c * wind_v[i]) + cfg.current_v;
    }
    (u, v)
}

/// Freeze/melt rate in concentration per day for air temperature `t2m`.
pub fn thermo_rate(t2m: f64, cfg: &WorldConfig) -> f64 {
    let tf = cfg.freeze_temp;
    cfg.k_f * (tf - t2m).max(0.0) - cfg.k_f * (t2m - tf).max(0.0)
}

/// Largest displacement in cells over one step.
pub fn courant_number(u: &[f64], v: &[f64], cfg: &WorldConfig) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| a.abs().max(b.abs()) * cfg.dt_days / cfg.cell_km)
        .fold(0.0, f64::max)
}

/// `div(u)` in 1/day by centred differences on the torus.
pub fn divergence(u: &[f64], v: &[f64], h: usize, w: usize, cell_km: f64) -> Vec<f64> {
    let mut d = vec![0.0; h * w];
    for y in 0..h {
        let (yn, ys) = ((y + 1) % h, (y + h - 1) % h);
        for x in 0..w {
            let (xe, xw) = ((x + 1) % w, (x + w - 1) % w);
            d[y * w + x] = (u[y * w + xe] - u[y * w + xw] + v[yn * w + x] - v[ys * w + x]) / (2.0 * cell_km);
        }
    }
    d
}

/// One day of ice concentration evolution.
///
/// Semi-Lagrangian transport with bilinear back-interpolation from the
/// departure point `x - u dt`, a compression term `-A div(u) dt` completing
/// the flux form, and the thermodynamic source, clamped to `[0, 1]`.
/// Land cells hold zero ice and are returned unchanged. The domain is
/// periodic.
pub fn step_sic(
    a: &[f64],
    u: &[f64],
    v: &[f64],
    t2m: &[f64],
    land: &[bool],
    cfg: &WorldConfig,
) -> Result<Vec<f64>> {
    let (h, w) = (cfg.height, cfg.width);
    let cells = courant_number(u, v, cfg);
    if cells > 1.0 {
        return Err(Error::Cfl {
            cells,
            alpha: cfg.alpha,
        });
    }
    let geom = GridGeometry::index_space(h, w);
    let div = divergence(u, v, h, w, cfg.cell_km);
    let step = cfg.dt_days / cfg.cell_km;
    let mut next = a.to_vec();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if land[i] {
                continue;
            }
            let (dx, dy) = (u[i] * step, v[i] * step);
            let adv = if dx == 0.0 && dy == 0.0 {
                a[i]
            } else {
                bilinear_sample(a, None, &geom, x as f64 - dx, y as f64 - dy, Boundary::Periodic)
                    .expect("periodic sampling")
            };
            let compress = -adv * div[i] * cfg.dt_days;
            let source = thermo_rate(t2m[i], cfg) * cfg.dt_days;
            next[i] = (adv + compress + source).clamp(0.0, 1.0);
        }
    }
    Ok(next)
}
