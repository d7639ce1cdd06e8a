//! Scores persistence, per-pixel linear regression and two briefly trained
//! networks on the same validation split, overall and per region.
//!
//!     cargo run --release --example compare_models

use hisunet::data::{build_samples, split_dataset, NormSpec, Sample};
use hisunet::eval::{evaluate, metrics_tsv, overall, RegionMask, Scope, Target};
use hisunet::models::{Forecaster, LinRegModel, ModelKind, ModelSpec, ModelState, Persistence};
use hisunet::synth::{gen_world, land_mask, WorldConfig};
use hisunet::train::{train, TrainConfig};

fn main() -> hisunet::Result<()> {
    let world = WorldConfig {
        height: 32,
        width: 32,
        n_days: 150,
        ..WorldConfig::default()
    };
    let stack = gen_world(&world)?;
    let norm = NormSpec::for_grid(world.height, world.width, world.cell_km);
    let (train_set, val_set) = split_dataset(build_samples(&stack, &norm)?, 0.8, 0)?;
    let tr: Vec<&Sample> = train_set.iter().collect();
    let va: Vec<&Sample> = val_set.iter().collect();
    let regions = RegionMask::synthetic(world.height, world.width, &land_mask(&world));

    let mut models: Vec<Box<dyn Forecaster>> = vec![Box::new(Persistence), Box::new(LinRegModel::fit(tr.iter().copied())?)];
    for kind in [ModelKind::Unet, ModelKind::HisUnet] {
        let mut spec = ModelSpec::new(kind, world.height, world.width);
        spec.stem_channels = 8;
        let cfg = TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        };
        let t = train(ModelState::init(spec)?, &tr, &va, cfg)?;
        models.push(Box::new(t.state));
    }

    let mut all = Vec::new();
    println!("{:<12} {:>8} {:>8} {:>10} {:>8}", "model", "SIC RMSE", "SIC R", "SIV RMSE", "SIV R");
    for m in &models {
        let recs = evaluate(m.as_ref(), &va, &norm, Some(&regions), 8)?;
        let sic = overall(&recs, &m.name(), Target::Sic).expect("SIC row");
        let siv = overall(&recs, &m.name(), Target::Siv).expect("SIV row");
        let r = |x: Option<f64>| x.map_or("NA".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<12} {:>8.3} {:>8} {:>10.3} {:>8}",
            m.name(),
            sic.rmse,
            r(sic.r),
            siv.rmse,
            r(siv.r)
        );
        all.extend(recs);
    }
    let regional = all.iter().filter(|r| matches!(r.scope, Scope::RegionMonth(..))).count();
    std::fs::write("compare_models.tsv", metrics_tsv(&all))?;
    println!("{} rows ({regional} region-month) written to compare_models.tsv", all.len());
    Ok(())
}
