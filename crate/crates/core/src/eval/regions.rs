use std::fmt;
use std::str::FromStr;

use crate::data::GridStack;
use crate::error::{Error, Result};

/// Arctic sub-regions used for the regional breakdown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    /// Central Arctic.
    Ca,
    /// Chukchi and Beaufort Seas.
    Cbs,
    /// Laptev and East Siberian Seas.
    Less,
    /// Kara and Barents Seas.
    Kbs,
    /// East Greenland.
    Eg,
    /// Hudson and Baffin Bays.
    Hbb,
    None,
}

impl Region {
    pub const LABELLED: [Region; 6] = [Region::Ca, Region::Cbs, Region::Less, Region::Kbs, Region::Eg, Region::Hbb];

    pub fn name(self) -> &'static str {
        match self {
            Region::Ca => "CA",
            Region::Cbs => "CBS",
            Region::Less => "LESS",
            Region::Kbs => "KBS",
            Region::Eg => "EG",
            Region::Hbb => "HBB",
            Region::None => "none",
        }
    }

    /// Raster code: 0..=5 for the labelled regions, 6 for none.
    pub fn code(self) -> u8 {
        match self {
            Region::None => 6,
            r => Region::LABELLED.iter().position(|&l| l == r).expect("labelled") as u8,
        }
    }

    pub fn from_code(code: f32) -> Region {
        if code.is_nan() || code < 0.0 || code.fract() != 0.0 {
            return Region::None;
        }
        Region::LABELLED.get(code as usize).copied().unwrap_or(Region::None)
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Region::LABELLED
            .into_iter()
            .chain([Region::None])
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::UnknownKind {
                what: "region",
                name: s.to_string(),
            })
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A label per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<Region>,
}

/// Variable holding region codes in a SIGD raster.
pub const REGION_VAR: &str = "region";

impl RegionMask {
    /// Every pixel unlabelled.
    pub fn none(height: usize, width: usize) -> Self {
        RegionMask {
            height,
            width,
            labels: vec![Region::None; height * width],
        }
    }

    /// Reads day 0 of the `region` variable of a raster stack.
    pub fn from_stack(stack: &GridStack) -> Result<Self> {
        let g = stack.get(0, REGION_VAR).ok_or_else(|| {
            Error::InvalidParameter(format!("region raster has no '{REGION_VAR}' variable"))
        })?;
        Ok(RegionMask {
            height: g.height,
            width: g.width,
            labels: g.raw().into_iter().map(Region::from_code).collect(),
        })
    }

    /// Splits the ocean into a 2 x 3 block partition, one block per region.
    pub fn synthetic(height: usize, width: usize, land: &[bool]) -> Self {
        let labels = (0..height * width)
            .map(|k| {
                if land[k] {
                    return Region::None;
                }
                let (y, x) = (k / width, k % width);
                let row = (2 * y / height).min(1);
                let col = (3 * x / width).min(2);
                Region::LABELLED[row * 3 + col]
            })
            .collect();
        RegionMask { height, width, labels }
    }

    pub fn pixels(&self, r: Region) -> usize {
        self.labels.iter().filter(|&&l| l == r).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_partition_covers_ocean_once() {
        let (h, w) = (12, 18);
        let land: Vec<bool> = (0..h * w).map(|k| k / w >= 10 || k % 7 == 0).collect();
        let m = RegionMask::synthetic(h, w, &land);
        for k in 0..h * w {
            assert_eq!(m.labels[k] == Region::None, land[k]);
        }
        let total: usize = Region::LABELLED.iter().map(|&r| m.pixels(r)).sum();
        assert_eq!(total, land.iter().filter(|&&l| !l).count());
        assert!(Region::LABELLED.iter().all(|&r| m.pixels(r) > 0));
    }

    #[test]
    fn codes_round_trip() {
        for r in Region::LABELLED.into_iter().chain([Region::None]) {
            assert_eq!(Region::from_code(f32::from(r.code())), r);
            assert_eq!(r.name().parse::<Region>().unwrap(), r);
        }
        assert_eq!(Region::from_code(f32::NAN), Region::None);
    }
}
