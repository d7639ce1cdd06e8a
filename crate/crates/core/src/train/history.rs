use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const HISTORY_HEADER: &str = "epoch\ttrain_loss\tval_loss\twall_seconds";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

/// Per-epoch losses, one row per epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    /// Tab-separated text. Losses are written with round-trip precision.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from(HISTORY_HEADER);
        s.push('\n');
        for r in &self.records {
            writeln!(
                s,
                "{}\t{:e}\t{:e}\t{:.3}",
                r.epoch, r.train_loss, r.val_loss, r.wall_seconds
            )
            .expect("write to string");
        }
        s
    }

    pub fn from_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HISTORY_HEADER) {
            return Err(Error::format(origin, "history header mismatch"));
        }
        let records = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split('\t').collect();
                let bad = || Error::format(origin, format!("bad history row '{l}'"));
                if f.len() != 4 {
                    return Err(bad());
                }
                Ok(EpochRecord {
                    epoch: f[0].parse().map_err(|_| bad())?,
                    train_loss: f[1].parse().map_err(|_| bad())?,
                    val_loss: f[2].parse().map_err(|_| bad())?,
                    wall_seconds: f[3].parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(History { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_tsv(&text, &path.display().to_string())
    }

    /// Losses only, for comparing runs whose timings differ.
    pub fn losses(&self) -> Vec<(usize, f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.epoch, r.train_loss, r.val_loss))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_round_trip_is_exact() {
        let h = History {
            records: vec![
                EpochRecord {
                    epoch: 1,
                    train_loss: 0.1 + 0.2,
                    val_loss: 1.0 / 3.0,
                    wall_seconds: 1.25,
                },
                EpochRecord {
                    epoch: 2,
                    train_loss: 1e-300,
                    val_loss: 7.0,
                    wall_seconds: 0.0,
                },
            ],
        };
        let back = History::from_tsv(&h.to_tsv(), "mem").unwrap();
        assert_eq!(back, h);
        assert!(History::from_tsv("epoch\n", "mem").is_err());
    }
}
