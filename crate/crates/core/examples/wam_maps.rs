//! Trains a narrow HIS-Unet for a few epochs and summarizes how its WAM
//! weight grids moved away from their 0.5 start.
//!
//!     cargo run --release --example wam_maps -- [out_dir]

use chrono::NaiveDate;

use hisunet::data::{build_samples, split_dataset, NormSpec, Sample};
use hisunet::eval::{export_wam_maps, write_wam_maps};
use hisunet::models::{ModelKind, ModelSpec, ModelState};
use hisunet::synth::{gen_world, WorldConfig};
use hisunet::train::{train, TrainConfig};

fn main() -> hisunet::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "wam_maps".into());
    let world = WorldConfig {
        height: 32,
        width: 32,
        n_days: 80,
        ..WorldConfig::default()
    };
    let stack = gen_world(&world)?;
    let norm = NormSpec::for_grid(world.height, world.width, world.cell_km);
    let (tr, va) = split_dataset(build_samples(&stack, &norm)?, 0.8, 0)?;
    let tr: Vec<&Sample> = tr.iter().collect();
    let va: Vec<&Sample> = va.iter().collect();

    let mut spec = ModelSpec::new(ModelKind::HisUnet, world.height, world.width);
    spec.stem_channels = 8;
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let trained = train(ModelState::init(spec)?, &tr, &va, cfg)?;

    let maps = export_wam_maps(&trained.state)?;
    println!("{:>5} {:<10} {:>7} {:>8} {:>8} {:>8}", "level", "grid", "size", "min", "mean", "max");
    for m in &maps {
        let (lo, hi) = m.values.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let mean = m.values.iter().sum::<f64>() / m.values.len() as f64;
        println!(
            "{:>5} {:<10} {:>7} {:>8.4} {:>8.4} {:>8.4}",
            m.level,
            m.grid,
            format!("{}x{}", m.height, m.width),
            lo,
            mean,
            hi
        );
    }
    let paths = write_wam_maps(&out, &maps, NaiveDate::from_ymd_opt(2021, 1, 1).expect("date"))?;
    println!("{} files written under {out}/", paths.len());
    Ok(())
}
