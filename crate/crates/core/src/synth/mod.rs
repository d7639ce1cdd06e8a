//! Synthetic coupled ice world: wind-driven free drift advecting ice
//! concentration, with freeze/melt from a seasonal air temperature.
//!
//! The domain is a torus of `cell_km` cells stepped once per day. Day `d`
//! holds wind, drift, temperature and concentration; concentration on day
//! `d + 1` follows from the day-`d` fields.

mod fields;
mod physics;

use std::f64::consts::PI;

use chrono::{Datelike, Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use fields::{smooth_noise, translate_periodic, Ar1Field};
pub use physics::{courant_number, divergence, drift_from_wind, step_sic, thermo_rate};

use crate::data::{GridStack, VarGrid, Variable};
use crate::error::{Error, Result};

/// Every knob of the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub height: usize,
    pub width: usize,
    pub n_days: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Ice speed over wind speed.
    pub alpha: f64,
    /// Turning angle of drift relative to wind, degrees clockwise.
    pub theta_deg: f64,
    /// Freeze/melt rate, concentration per day per degree.
    pub k_f: f64,
    pub freeze_temp: f64,
    /// AR(1) coefficient of the wind and temperature-noise fields.
    pub rho: f64,
    /// Gaussian correlation length of the forcing fields, cells.
    pub wind_smoothness: f64,
    /// Per-day displacement of the forcing patterns, cells.
    pub steer_x: f64,
    pub steer_y: f64,
    /// Standard deviation of the raw wind components, m/s.
    pub wind_std: f64,
    /// Soft bound on wind speed, m/s.
    pub wind_max: f64,
    /// Background ocean current, km/day.
    pub current_u: f64,
    pub current_v: f64,
    /// Rows of continent along the bottom edge.
    pub land_rows: usize,
    pub n_islands: usize,
    pub island_radius: f64,
    pub t2m_mean: f64,
    /// Seasonal half-range of air temperature.
    pub t2m_amplitude: f64,
    /// Top-to-bottom temperature difference across the domain.
    pub t2m_gradient: f64,
    /// Standard deviation of the weather noise on temperature.
    pub t2m_noise: f64,
    pub cell_km: f64,
    pub dt_days: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            height: 48,
            width: 48,
            n_days: 250,
            seed: 0,
            start_date: NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"),
            alpha: 0.02,
            theta_deg: 20.0,
            k_f: 0.01,
            freeze_temp: 0.0,
            rho: 0.8,
            wind_smoothness: 3.0,
            steer_x: 2.0,
            steer_y: 1.0,
            wind_std: 6.0,
            wind_max: 12.0,
            current_u: 1.0,
            current_v: -0.5,
            land_rows: 4,
            n_islands: 2,
            island_radius: 2.5,
            t2m_mean: -2.0,
            t2m_amplitude: 8.0,
            t2m_gradient: 30.0,
            t2m_noise: 2.0,
            cell_km: 25.0,
            dt_days: 1.0,
        }
    }
}

impl WorldConfig {
    /// A world whose ice never changes: no drift, no current, and air
    /// temperature pinned to the freezing point.
    pub fn frozen(mut self) -> Self {
        self.alpha = 0.0;
        self.current_u = 0.0;
        self.current_v = 0.0;
        self.t2m_mean = self.freeze_temp;
        self.t2m_amplitude = 0.0;
        self.t2m_gradient = 0.0;
        self.t2m_noise = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.height == 0 || self.width == 0 || self.n_days == 0 {
            return bad("world height, width and n_days must be positive".into());
        }
        // alpha = 0 is admitted for the static world.
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        for (name, v) in [
            ("k_f", self.k_f),
            ("wind_smoothness", self.wind_smoothness),
            ("wind_std", self.wind_std),
            ("t2m_noise", self.t2m_noise),
            ("island_radius", self.island_radius),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [("wind_max", self.wind_max), ("cell_km", self.cell_km), ("dt_days", self.dt_days)] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.land_rows >= self.height {
            return bad(format!(
                "land_rows {} leaves no ocean on a {}-row grid",
                self.land_rows, self.height
            ));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start_date + Days::new(day as u64)
    }
}

const STREAM_WIND_U: u64 = 1;
const STREAM_WIND_V: u64 = 2;
const STREAM_T2M: u64 = 3;
const STREAM_LAND: u64 = 4;

/// Land mask: a continent along the bottom rows plus round islands.
pub fn land_mask(cfg: &WorldConfig) -> Vec<bool> {
    let (h, w) = (cfg.height, cfg.width);
    let mut land = vec![false; h * w];
    for y in h - cfg.land_rows..h {
        land[y * w..(y + 1) * w].fill(true);
    }
    let mut rng = cfg.rng(STREAM_LAND);
    for _ in 0..cfg.n_islands {
        let cy = rng.gen_range(0.0..(h - cfg.land_rows) as f64);
        let cx = rng.gen_range(0.0..w as f64);
        for y in 0..h {
            for x in 0..w {
                let dy = (y as f64 - cy).abs().min(h as f64 - (y as f64 - cy).abs());
                let dx = (x as f64 - cx).abs().min(w as f64 - (x as f64 - cx).abs());
                if dy.hypot(dx) <= cfg.island_radius {
                    land[y * w + x] = true;
                }
            }
        }
    }
    land
}

/// Wind components in m/s for successive days.
pub struct WindProcess {
    u: Ar1Field,
    v: Ar1Field,
    std: f64,
    max: f64,
}

impl WindProcess {
    pub fn new(cfg: &WorldConfig) -> Self {
        let field = |stream| {
            Ar1Field::new(
                cfg.height,
                cfg.width,
                cfg.rho,
                cfg.wind_smoothness,
                (cfg.steer_x, cfg.steer_y),
                cfg.rng(stream),
            )
        };
        WindProcess {
            u: field(STREAM_WIND_U),
            v: field(STREAM_WIND_V),
            std: cfg.wind_std,
            max: cfg.wind_max,
        }
    }

    pub fn next_day(&mut self) -> (Vec<f64>, Vec<f64>) {
        let (s, m) = (self.std, self.max);
        let mut u: Vec<f64> = self.u.next_field().iter().map(|z| s * z).collect();
        let mut v: Vec<f64> = self.v.next_field().iter().map(|z| s * z).collect();
        for (a, b) in u.iter_mut().zip(v.iter_mut()) {
            let speed = a.hypot(*b);
            if speed > 0.0 {
                let k = m * (speed / m).tanh() / speed;
                *a *= k;
                *b *= k;
            }
        }
        (u, v)
    }
}

/// `n_days` of wind from the configured seed.
pub fn gen_wind(cfg: &WorldConfig, n_days: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut p = WindProcess::new(cfg);
    (0..n_days).map(|_| p.next_day()).collect()
}

/// Seasonal factor in `[-1, 1]`: coldest near 20 January.
fn season(date: NaiveDate) -> f64 {
    -(2.0 * PI * (date.ordinal0() as f64 - 19.0) / 365.25).cos()
}

/// Air temperature of one day.
fn t2m_field(cfg: &WorldConfig, date: NaiveDate, noise: Option<&[f64]>) -> Vec<f64> {
    let (h, w) = (cfg.height, cfg.width);
    let base = cfg.t2m_mean + cfg.t2m_amplitude * season(date);
    (0..h * w)
        .map(|k| {
            let y = (k / w) as f64 / (h.max(2) - 1) as f64;
            let n = noise.map_or(0.0, |z| cfg.t2m_noise * z[k]);
            base + cfg.t2m_gradient * (y - 0.5) + n
        })
        .collect()
}

fn to_grid(var: Variable, date: NaiveDate, h: usize, w: usize, values: &[f64], land: Option<&[bool]>) -> VarGrid {
    let raw = values
        .iter()
        .enumerate()
        .map(|(i, &v)| match land {
            Some(l) if l[i] => f32::NAN,
            _ => v as f32,
        })
        .collect();
    VarGrid::from_raw(var.name(), date, h, w, raw).expect("grid size")
}

/// Generates every variable for `n_days` days.
///
/// `sic`, `siv_u` and `siv_v` are missing on land; the other fields cover
/// the whole grid.
pub fn gen_world(cfg: &WorldConfig) -> Result<GridStack> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let land = land_mask(cfg);
    let vars: Vec<String> = Variable::ALL.iter().map(|v| v.name().to_string()).collect();
    let mut stack = GridStack::new(h, w, cfg.start_date, vars, cfg.n_days);

    let coord_x: Vec<f64> = (0..h * w).map(|k| (k % w) as f64 * cfg.cell_km).collect();
    let coord_y: Vec<f64> = (0..h * w).map(|k| (k / w) as f64 * cfg.cell_km).collect();
    let land_f: Vec<f64> = land.iter().map(|&l| f64::from(u8::from(l))).collect();

    let mut wind = WindProcess::new(cfg);
    let mut t_noise = (cfg.t2m_noise > 0.0).then(|| {
        Ar1Field::new(h, w, cfg.rho, cfg.wind_smoothness, (cfg.steer_x, cfg.steer_y), cfg.rng(STREAM_T2M))
    });

    let t0 = t2m_field(cfg, cfg.start_date, None);
    let mut a: Vec<f64> = t0
        .iter()
        .zip(&land)
        .map(|(&t, &l)| if l { 0.0 } else { (0.5 - (t - cfg.freeze_temp) / 10.0).clamp(0.0, 1.0) })
        .collect();

    for day in 0..cfg.n_days {
        let date = stack.date(day);
        let (wu, wv) = wind.next_day();
        let noise = t_noise.as_mut().map(|f| f.next_field().to_vec());
        let t2m = t2m_field(cfg, date, noise.as_deref());
        let (u, v) = drift_from_wind(&wu, &wv, &land, cfg);

        let put = |stack: &mut GridStack, var: Variable, vals: &[f64], masked: bool| {
            let g = to_grid(var, date, h, w, vals, masked.then_some(&land[..]));
            stack.put(day, g)
        };
        put(&mut stack, Variable::SivU, &u, true)?;
        put(&mut stack, Variable::SivV, &v, true)?;
        put(&mut stack, Variable::Sic, &a, true)?;
        put(&mut stack, Variable::T2m, &t2m, false)?;
        put(&mut stack, Variable::WindU, &wu, false)?;
        put(&mut stack, Variable::WindV, &wv, false)?;
        put(&mut stack, Variable::CoordX, &coord_x, false)?;
        put(&mut stack, Variable::CoordY, &coord_y, false)?;
        put(&mut stack, Variable::Land, &land_f, false)?;

        if day + 1 < cfg.n_days {
            a = step_sic(&a, &u, &v, &t2m, &land, cfg)?;
        }
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sigd;

    fn small() -> WorldConfig {
        WorldConfig {
            height: 16,
            width: 16,
            n_days: 12,
            seed: 7,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = sigd::encode(&gen_world(&small()).unwrap());
        let b = sigd::encode(&gen_world(&small()).unwrap());
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 8;
        assert_ne!(a, sigd::encode(&gen_world(&other).unwrap()));
    }

    #[test]
    fn sic_stays_in_unit_interval() {
        let s = gen_world(&WorldConfig { n_days: 40, ..small() }).unwrap();
        for d in 0..s.n_days {
            let g = s.get(d, "sic").unwrap();
            for (v, ok) in g.values.iter().zip(&g.valid) {
                assert!(!ok || (0.0..=1.0).contains(v));
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(WorldConfig { rho: 1.0, ..small() }.validate().is_err());
        assert!(WorldConfig { alpha: 1.0, ..small() }.validate().is_err());
        assert!(WorldConfig { alpha: -0.1, ..small() }.validate().is_err());
        assert!(WorldConfig { land_rows: 16, ..small() }.validate().is_err());
        assert!(small().frozen().validate().is_ok());
    }

    #[test]
    fn four_days_make_one_sample() {
        let cfg = WorldConfig { n_days: 4, ..small() };
        let s = gen_world(&cfg).unwrap();
        let norm = crate::data::NormSpec::for_grid(16, 16, cfg.cell_km);
        assert_eq!(crate::data::build_samples(&s, &norm).unwrap().len(), 1);
    }

    #[test]
    fn frozen_world_is_constant() {
        let s = gen_world(&small().frozen()).unwrap();
        for var in ["sic", "siv_u", "siv_v"] {
            let first = s.get(0, var).unwrap();
            for d in 1..s.n_days {
                let g = s.get(d, var).unwrap();
                assert_eq!(g.values, first.values, "{var} day {d}");
            }
        }
    }
}
