use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hisunet::synth::{
    divergence, drift_from_wind, gen_wind, gen_world, step_sic, translate_periodic, Ar1Field, WindProcess, WorldConfig,
};

fn open_ocean(h: usize, w: usize) -> WorldConfig {
    WorldConfig {
        height: h,
        width: w,
        land_rows: 0,
        n_islands: 0,
        k_f: 0.0,
        ..WorldConfig::default()
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn uncorrelated_wind_when_rho_is_zero() {
    let cfg = WorldConfig {
        rho: 0.0,
        height: 24,
        width: 24,
        ..WorldConfig::default()
    };
    let days = gen_wind(&cfg, 100);
    let cells = cfg.height * cfg.width;
    let mut acf = 0.0;
    for k in 0..cells {
        let series: Vec<f64> = days.iter().map(|(u, _)| u[k]).collect();
        acf += pearson(&series[..99], &series[1..]);
    }
    let acf = acf / cells as f64;
    assert!(acf.abs() < 0.2, "lag-1 autocorrelation {acf}");
}

#[test]
fn ar1_field_persists_in_the_steered_frame() {
    let (h, w, rho) = (32, 32, 0.8);
    let mut f = Ar1Field::new(h, w, rho, 3.0, (2.0, 1.0), ChaCha8Rng::seed_from_u64(4));
    let (mut prev, mut next) = (Vec::new(), Vec::new());
    let mut last = f.next_field().to_vec();
    for _ in 0..100 {
        let cur = f.next_field().to_vec();
        prev.extend(translate_periodic(&last, h, w, 2.0, 1.0));
        next.extend_from_slice(&cur);
        last = cur;
    }
    let r = pearson(&prev, &next);
    assert!((r - rho).abs() < 0.05, "{r}");
}

#[test]
fn wind_is_deterministic_and_soft_bounded() {
    let cfg = WorldConfig::default();
    assert_eq!(gen_wind(&cfg, 5), gen_wind(&cfg, 5));
    let mut p = WindProcess::new(&cfg);
    for _ in 0..50 {
        let (u, v) = p.next_day();
        assert!(u.iter().zip(&v).all(|(a, b)| a.hypot(*b) < cfg.wind_max));
    }
}

/// Each day's drift is applied once to the same interior field, so that the
/// clamp to [0, 1] never acts and only transport changes the total.
#[test]
fn total_ice_is_conserved_under_periodic_advection() {
    let cfg = open_ocean(32, 32);
    let (h, w) = (cfg.height, cfg.width);
    let land = vec![false; h * w];
    let t2m = vec![cfg.freeze_temp; h * w];
    let base = hisunet::synth::smooth_noise(h, w, 3.0, &mut ChaCha8Rng::seed_from_u64(9));
    let a: Vec<f64> = base.iter().map(|z| (0.5 + 0.1 * z).clamp(0.05, 0.95)).collect();
    let before: f64 = a.iter().sum();
    let mut wind = WindProcess::new(&cfg);
    let mut checked = 0;
    for day in 0..30 {
        let (wu, wv) = wind.next_day();
        let (u, v) = drift_from_wind(&wu, &wv, &land, &cfg);
        let next = step_sic(&a, &u, &v, &t2m, &land, &cfg).unwrap();
        if next.iter().any(|&x| x == 0.0 || x == 1.0) {
            continue;
        }
        let rel = (next.iter().sum::<f64>() - before).abs() / before;
        assert!(rel < 5e-3, "day {day}: relative change {rel}");
        checked += 1;
    }
    assert!(checked >= 20, "{checked}");
}

#[test]
fn concentration_change_tracks_flux_divergence_without_melt() {
    let cfg = WorldConfig {
        n_days: 60,
        seed: 3,
        ..open_ocean(32, 32)
    };
    let (h, w) = (cfg.height, cfg.width);
    let stack = gen_world(&cfg).unwrap();
    let field = |d: usize, var: &str| -> Vec<f64> {
        stack.get(d, var).unwrap().values.iter().map(|&x| f64::from(x)).collect()
    };
    let (mut dadt, mut flux) = (Vec::new(), Vec::new());
    for d in 0..cfg.n_days - 1 {
        let a = field(d, "sic");
        let a_next = field(d + 1, "sic");
        let (u, v) = (field(d, "siv_u"), field(d, "siv_v"));
        let ua: Vec<f64> = u.iter().zip(&a).map(|(x, y)| x * y).collect();
        let va: Vec<f64> = v.iter().zip(&a).map(|(x, y)| x * y).collect();
        let div = divergence(&ua, &va, h, w, cfg.cell_km);
        for k in 0..h * w {
            if a_next[k] > 0.0 && a_next[k] < 1.0 && a[k] > 0.0 && a[k] < 1.0 {
                dadt.push((a_next[k] - a[k]).abs());
                flux.push(div[k].abs());
            }
        }
    }
    assert!(dadt.len() > 1000);
    let r = pearson(&dadt, &flux);
    assert!(r > 0.3, "correlation {r}");
}

#[test]
fn frozen_world_has_no_drift() {
    let cfg = WorldConfig {
        height: 16,
        width: 16,
        n_days: 6,
        ..WorldConfig::default()
    }
    .frozen();
    let stack = gen_world(&cfg).unwrap();
    for d in 0..cfg.n_days {
        for var in ["siv_u", "siv_v"] {
            let g = stack.get(d, var).unwrap();
            assert!(g.values.iter().zip(&g.valid).all(|(v, ok)| !ok || *v == 0.0));
        }
    }
}
