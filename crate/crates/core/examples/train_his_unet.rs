//! Trains a narrow HIS-Unet on a small synthetic world and saves the run.
//!
//!     cargo run --release --example train_his_unet -- [epochs] [out_dir]

use hisunet::data::{build_samples, split_dataset, NormSpec, Sample};
use hisunet::models::{ModelKind, ModelSpec, ModelState};
use hisunet::synth::{gen_world, WorldConfig};
use hisunet::train::{RunFiles, TrainConfig, Trainer};

fn main() -> hisunet::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(5, |s| s.parse().expect("epochs"));
    let out = args.next().unwrap_or_else(|| "his_unet_run".into());

    let world = WorldConfig {
        height: 32,
        width: 32,
        n_days: 120,
        ..WorldConfig::default()
    };
    let stack = gen_world(&world)?;
    let norm = NormSpec::for_grid(world.height, world.width, world.cell_km);
    let (train, val) = split_dataset(build_samples(&stack, &norm)?, 0.8, 0)?;
    let train: Vec<&Sample> = train.iter().collect();
    let val: Vec<&Sample> = val.iter().collect();

    let mut spec = ModelSpec::new(ModelKind::HisUnet, world.height, world.width);
    spec.stem_channels = 8;
    let state = ModelState::init(spec)?;
    println!(
        "his_unet: {} parameters, {} WAM levels; {} train / {} val samples",
        state.params.count(),
        state.wam_levels(),
        train.len(),
        val.len()
    );

    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let files = RunFiles::in_dir(&out);
    let mut trainer = Trainer::new(state, cfg)?;
    trainer.fit(&train, &val, Some(&files), |r| {
        println!(
            "epoch {:>3}  train {:.5}  val {:.5}  ({:.1} s)",
            r.epoch, r.train_loss, r.val_loss, r.wall_seconds
        )
    })?;
    println!("best val loss {:.5}; checkpoints in {out}/", trainer.best_val);
    Ok(())
}
