//! Flat `key = value` run configuration.
//!
//! Every key lives in [`KEYS`] with its default. Values are resolved
//! defaults < config file < explicit overrides, and unknown keys are fatal.
//! The resolved set can be written back out verbatim as a sidecar.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::autograd::{Activation, Precision};
use crate::data::{NormSpec, Variable};
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec};
use crate::synth::WorldConfig;
use crate::train::TrainConfig;

/// One documented configuration key.
#[derive(Clone, Copy, Debug)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Value of a normalization bound taken from [`NormSpec::for_grid`].
pub const AUTO: &str = "auto";

/// Every accepted key, grouped by consumer.
pub const KEYS: &[Key] = &[
    // paths
    key("data", "world.sigd", "input SIGD stack"),
    key("out", "", "output file or directory; empty picks a per-command default"),
    key("checkpoint", "", "HSUN checkpoint to evaluate or export"),
    key("regions", "", "SIGD raster with a 'region' variable; empty uses the synthetic partition"),
    key("resume", "false", "continue training from <out>/last.hsun"),
    // model
    key("model", "his_unet", "his_unet | eb_unet | lb_unet | unet | fcn7 | cnn_dense | persistence | linreg"),
    key("stem_channels", "32", "channels of the first encoder level"),
    key("depth", "3", "pooling levels of the U-net variants"),
    key("activation", "tanh", "tanh | sigmoid | relu"),
    // training
    key("seed", "0", "world seed for generate; model init and shuffle seed for train"),
    key("epochs", "100", "training epochs"),
    key("lr", "0.001", "Adam learning rate"),
    key("beta", "0.5", "weight of the concentration loss term"),
    key("batch_size", "4", "samples per batch"),
    key("precision", "f64", "f64 | f32 arithmetic in convolution and dense products"),
    key("checkpoint_every", "1", "epochs between last.hsun writes; 0 only at the end"),
    key("train_ratio", "0.8", "fraction of samples in the training split"),
    key("split_seed", "0", "seed of the train/validation shuffle"),
    key("eval_set", "val", "val | train | all"),
    // gradient check
    key("gradcheck_seeds", "5", "seeds 0..n of the gradient suite"),
    key("gradcheck_tol", "1e-4", "maximum relative error"),
    // world
    key("height", "48", "world rows"),
    key("width", "48", "world columns"),
    key("n_days", "250", "days generated"),
    key("start_date", "2021-01-01", "first day, ISO-8601"),
    key("alpha", "0.02", "ice speed over wind speed"),
    key("theta_deg", "20", "drift turning angle, degrees clockwise of wind"),
    key("k_f", "0.01", "freeze/melt rate per day per degree"),
    key("freeze_temp", "0", "freezing point of t2m"),
    key("rho", "0.8", "AR(1) coefficient of the forcing fields"),
    key("wind_smoothness", "3", "correlation length of the forcing fields, cells"),
    key("steer_x", "2", "daily eastward displacement of weather, cells"),
    key("steer_y", "1", "daily northward displacement of weather, cells"),
    key("wind_std", "6", "wind component standard deviation, m/s"),
    key("wind_max", "12", "soft bound on wind speed, m/s"),
    key("current_u", "1", "background current u, km/day"),
    key("current_v", "-0.5", "background current v, km/day"),
    key("land_rows", "4", "rows of continent along the bottom edge"),
    key("n_islands", "2", "number of islands"),
    key("island_radius", "2.5", "island radius, cells"),
    key("t2m_mean", "-2", "mean air temperature"),
    key("t2m_amplitude", "8", "seasonal half-range of air temperature"),
    key("t2m_gradient", "30", "top-to-bottom temperature difference"),
    key("t2m_noise", "2", "weather noise on temperature"),
    key("cell_km", "25", "grid spacing, km"),
    key("dt_days", "1", "time step, days"),
    // normalization
    key("norm_siv_u_min", AUTO, "lower bound of siv_u"),
    key("norm_siv_u_max", AUTO, "upper bound of siv_u"),
    key("norm_siv_v_min", AUTO, "lower bound of siv_v"),
    key("norm_siv_v_max", AUTO, "upper bound of siv_v"),
    key("norm_sic_min", AUTO, "lower bound of sic"),
    key("norm_sic_max", AUTO, "upper bound of sic"),
    key("norm_t2m_min", AUTO, "lower bound of t2m"),
    key("norm_t2m_max", AUTO, "upper bound of t2m"),
    key("norm_wind_u_min", AUTO, "lower bound of wind_u"),
    key("norm_wind_u_max", AUTO, "upper bound of wind_u"),
    key("norm_wind_v_min", AUTO, "lower bound of wind_v"),
    key("norm_wind_v_max", AUTO, "upper bound of wind_v"),
    key("norm_coord_x_min", AUTO, "lower bound of coord_x"),
    key("norm_coord_x_max", AUTO, "upper bound of coord_x"),
    key("norm_coord_y_min", AUTO, "lower bound of coord_y"),
    key("norm_coord_y_max", AUTO, "upper bound of coord_y"),
    key("norm_land_min", AUTO, "lower bound of land"),
    key("norm_land_max", AUTO, "upper bound of land"),
];

pub fn find_key(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// Resolved configuration: one value per key of [`KEYS`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|k| (k.name, k.default.to_string())).collect(),
        }
    }
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::format(format!("{origin}:{}", n + 1), "expected key = value"));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults overlaid with `path`, then with `overrides` in order.
    pub fn resolve(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(p) = path {
            let text = fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingFile(p.to_path_buf()),
                _ => Error::Io(e),
            })?;
            for (k, v) in parse_pairs(&text, &p.display().to_string())? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let k = find_key(name).ok_or_else(|| Error::UnknownConfigKey(name.to_string()))?;
        self.values.insert(k.name, value.to_string());
        Ok(())
    }

    pub fn with(mut self, name: &str, value: impl ToString) -> Result<Self> {
        self.set(name, &value.to_string())?;
        Ok(self)
    }

    pub fn raw(&self, name: &str) -> Result<&str> {
        self.values
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownConfigKey(name.to_string()))
    }

    /// Parses the value of `name` as `T`.
    pub fn get<T>(&self, name: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(name)?;
        raw.parse().map_err(|e: T::Err| Error::ConfigValue {
            key: name.to_string(),
            reason: format!("'{raw}': {e}"),
        })
    }

    /// `None` for an empty value.
    pub fn path(&self, name: &str) -> Result<Option<&str>> {
        let raw = self.raw(name)?;
        Ok((!raw.is_empty()).then_some(raw))
    }

    pub fn world(&self) -> Result<WorldConfig> {
        let start: NaiveDate = self.get("start_date")?;
        let w = WorldConfig {
            height: self.get("height")?,
            width: self.get("width")?,
            n_days: self.get("n_days")?,
            seed: self.get("seed")?,
            start_date: start,
            alpha: self.get("alpha")?,
            theta_deg: self.get("theta_deg")?,
            k_f: self.get("k_f")?,
            freeze_temp: self.get("freeze_temp")?,
            rho: self.get("rho")?,
            wind_smoothness: self.get("wind_smoothness")?,
            steer_x: self.get("steer_x")?,
            steer_y: self.get("steer_y")?,
            wind_std: self.get("wind_std")?,
            wind_max: self.get("wind_max")?,
            current_u: self.get("current_u")?,
            current_v: self.get("current_v")?,
            land_rows: self.get("land_rows")?,
            n_islands: self.get("n_islands")?,
            island_radius: self.get("island_radius")?,
            t2m_mean: self.get("t2m_mean")?,
            t2m_amplitude: self.get("t2m_amplitude")?,
            t2m_gradient: self.get("t2m_gradient")?,
            t2m_noise: self.get("t2m_noise")?,
            cell_km: self.get("cell_km")?,
            dt_days: self.get("dt_days")?,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let t = TrainConfig {
            epochs: self.get("epochs")?,
            lr: self.get("lr")?,
            beta: self.get("beta")?,
            batch_size: self.get("batch_size")?,
            seed: self.get("seed")?,
            precision: self.get::<Precision>("precision")?,
            checkpoint_every: self.get("checkpoint_every")?,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        self.get("model")
    }

    /// Model spec for a `height x width` grid.
    pub fn model_spec(&self, height: usize, width: usize) -> Result<ModelSpec> {
        let mut s = ModelSpec::new(self.model_kind()?, height, width).with_seed(self.get("seed")?);
        s.stem_channels = self.get("stem_channels")?;
        s.depth = self.get("depth")?;
        s.activation = self.get::<Activation>("activation")?;
        s.validate()?;
        Ok(s)
    }

    /// Bounds for a `height x width` grid, `auto` entries filled from
    /// [`NormSpec::for_grid`].
    pub fn norm(&self, height: usize, width: usize) -> Result<NormSpec> {
        let mut n = NormSpec::for_grid(height, width, self.get("cell_km")?);
        for var in Variable::ALL {
            let (lo_key, hi_key) = (format!("norm_{var}_min"), format!("norm_{var}_max"));
            let (mut lo, mut hi) = n.bounds(var.name())?;
            if self.raw(&lo_key)? != AUTO {
                lo = self.get(&lo_key)?;
            }
            if self.raw(&hi_key)? != AUTO {
                hi = self.get(&hi_key)?;
            }
            n.set(var.name(), lo, hi).map_err(|e| Error::ConfigValue {
                key: lo_key.clone(),
                reason: e.to_string(),
            })?;
        }
        Ok(n)
    }

    /// Every key and its resolved value, one `key = value` line each, in
    /// registry order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            writeln!(s, "{} = {}", k.name, self.values[k.name]).expect("write to string");
        }
        s
    }

    pub fn write_echo(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_no_duplicates_and_defaults_parse() {
        let mut names: Vec<&str> = KEYS.iter().map(|k| k.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), KEYS.len());
        let cfg = RunConfig::default();
        assert_eq!(cfg.world().unwrap(), WorldConfig::default());
        assert_eq!(cfg.train().unwrap(), TrainConfig::default());
        assert_eq!(cfg.norm(48, 48).unwrap(), NormSpec::for_grid(48, 48, 25.0));
        assert_eq!(cfg.model_spec(48, 48).unwrap(), ModelSpec::new(ModelKind::HisUnet, 48, 48));
    }

    #[test]
    fn precedence_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        fs::write(&p, "# comment\nepochs = 7\nlr=0.01  # inline\n\n").unwrap();
        let cfg = RunConfig::resolve(Some(&p), &[("epochs".into(), "9".into())]).unwrap();
        assert_eq!(cfg.get::<usize>("epochs").unwrap(), 9);
        assert_eq!(cfg.get::<f64>("lr").unwrap(), 0.01);
        assert_eq!(cfg.get::<usize>("batch_size").unwrap(), 4);

        fs::write(&p, "epochz = 7\n").unwrap();
        let e = RunConfig::resolve(Some(&p), &[]).unwrap_err();
        assert_eq!(e.kind(), "bad_config_key");
        let e = RunConfig::resolve(Some(&dir.path().join("nope")), &[]).unwrap_err();
        assert_eq!(e.kind(), "missing_file");
        fs::write(&p, "epochs 7\n").unwrap();
        assert_eq!(RunConfig::resolve(Some(&p), &[]).unwrap_err().kind(), "format");
        let bad = RunConfig::default().with("epochs", "many").unwrap();
        assert_eq!(bad.train().unwrap_err().kind(), "bad_config_value");
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::default()
            .with("alpha", 0.03)
            .unwrap()
            .with("norm_sic_max", 2)
            .unwrap();
        let pairs = parse_pairs(&cfg.to_text(), "echo").unwrap();
        assert_eq!(pairs.len(), KEYS.len());
        let back = RunConfig::resolve(None, &pairs).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.norm(8, 8).unwrap().bounds("sic").unwrap(), (0.0, 2.0));
    }
}
