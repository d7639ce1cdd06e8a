use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{bilinear_sample, Boundary, GridGeometry};

/// Normalized 1-D Gaussian taps with the given standard deviation in cells.
fn gaussian_taps(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Periodic separable blur of a row-major field.
fn blur_periodic(f: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * f[y * w + wrap(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[wrap(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Spatially smooth Gaussian noise with unit marginal variance on a torus.
pub fn smooth_noise(h: usize, w: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let white: Vec<f64> = (0..h * w).map(|_| rng.sample(StandardNormal)).collect();
    let taps = gaussian_taps(sigma);
    // Variance of blurred white noise is the squared sum of squared taps,
    // provided the kernel fits the torus.
    let var_1d: f64 = taps.iter().map(|t| t * t).sum();
    let scale = 1.0 / var_1d;
    blur_periodic(&white, h, w, &taps)
        .into_iter()
        .map(|v| v * scale)
        .collect()
}

/// Periodic translation by `(sx, sy)` cells with bilinear weights.
pub fn translate_periodic(f: &[f64], h: usize, w: usize, sx: f64, sy: f64) -> Vec<f64> {
    if sx == 0.0 && sy == 0.0 {
        return f.to_vec();
    }
    let geom = GridGeometry::index_space(h, w);
    (0..h * w)
        .map(|k| {
            let (y, x) = ((k / w) as f64, (k % w) as f64);
            bilinear_sample(f, None, &geom, x - sx, y - sy, Boundary::Periodic).expect("periodic sampling")
        })
        .collect()
}

/// A scalar random field evolving as
/// `z_t = rho * T(z_{t-1}) + sqrt(1 - rho^2) * eta_t`,
/// where `T` translates by a fixed steering displacement and `eta_t` is fresh
/// smooth noise. The marginal variance stays one.
pub struct Ar1Field {
    h: usize,
    w: usize,
    rho: f64,
    sigma: f64,
    steer: (f64, f64),
    state: Option<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl Ar1Field {
    pub fn new(h: usize, w: usize, rho: f64, sigma: f64, steer: (f64, f64), rng: ChaCha8Rng) -> Self {
        Ar1Field {
            h,
            w,
            rho,
            sigma,
            steer,
            state: None,
            rng,
        }
    }

    pub fn next_field(&mut self) -> &[f64] {
        let eta = smooth_noise(self.h, self.w, self.sigma, &mut self.rng);
        let next = match self.state.take() {
            None => eta,
            Some(prev) => {
                let moved = translate_periodic(&prev, self.h, self.w, self.steer.0, self.steer.1);
                let innov = (1.0 - self.rho * self.rho).sqrt();
                moved
                    .iter()
                    .zip(&eta)
                    .map(|(m, e)| self.rho * m + innov * e)
                    .collect()
            }
        };
        self.state.insert(next)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn taps_are_normalized() {
        for s in [0.0, 0.7, 3.0] {
            assert!((gaussian_taps(s).iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn smooth_noise_has_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut acc = 0.0;
        let mut n = 0.0;
        for _ in 0..20 {
            let f = smooth_noise(64, 64, 2.0, &mut rng);
            acc += f.iter().map(|v| v * v).sum::<f64>();
            n += f.len() as f64;
        }
        let var = acc / n;
        assert!((var - 1.0).abs() < 0.15, "variance {var}");
    }

    #[test]
    fn integer_translation_rolls() {
        let f: Vec<f64> = (0..12).map(|k| k as f64).collect();
        let g = translate_periodic(&f, 3, 4, 1.0, 0.0);
        assert_eq!(&g[0..4], &[3.0, 0.0, 1.0, 2.0]);
        let g = translate_periodic(&f, 3, 4, 0.0, -1.0);
        assert_eq!(&g[0..4], &[4.0, 5.0, 6.0, 7.0]);
    }
}
