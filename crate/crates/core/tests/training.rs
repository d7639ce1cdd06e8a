use std::fs;
use std::path::Path;

use hisunet::cli::{cmd_generate, cmd_train};
use hisunet::config::RunConfig;
use hisunet::data::{build_samples, NormSpec, Sample};
use hisunet::models::{ModelKind, ModelSpec, ModelState};
use hisunet::synth::{gen_world, WorldConfig};
use hisunet::train::{History, TrainConfig, Trainer};

fn one_sample() -> Sample {
    let cfg = WorldConfig {
        height: 16,
        width: 16,
        n_days: 4,
        seed: 11,
        ..WorldConfig::default()
    };
    let stack = gen_world(&cfg).unwrap();
    let norm = NormSpec::for_grid(16, 16, cfg.cell_km);
    build_samples(&stack, &norm).unwrap().remove(0)
}

#[test]
fn single_sample_overfits_within_500_steps() {
    let s = one_sample();
    let mut spec = ModelSpec::new(ModelKind::HisUnet, 16, 16).with_seed(1);
    spec.stem_channels = 16;
    spec.depth = 2;
    let cfg = TrainConfig {
        batch_size: 1,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(ModelState::init(spec).unwrap(), cfg).unwrap();
    let first = t.run_epoch(&[&s], &[&s]).unwrap().train_loss;
    let mut reached = None;
    for step in 2..=500 {
        let rec = t.run_epoch(&[&s], &[&s]).unwrap();
        if rec.train_loss < 1e-3 {
            reached = Some(step);
            break;
        }
    }
    assert!(reached.is_some(), "first loss {first}, last {}", t.history.records.last().unwrap().train_loss);
}

fn world_config(dir: &Path) -> RunConfig {
    RunConfig::default()
        .with("height", 16)
        .and_then(|c| c.with("width", 16))
        .and_then(|c| c.with("n_days", 24))
        .and_then(|c| c.with("seed", 5))
        .and_then(|c| c.with("data", dir.join("w.sigd").display()))
        .unwrap()
}

fn train_config(base: &RunConfig, out: &Path, epochs: usize, resume: bool) -> RunConfig {
    base.clone()
        .with("out", out.display())
        .and_then(|c| c.with("stem_channels", 4))
        .and_then(|c| c.with("depth", 2))
        .and_then(|c| c.with("epochs", epochs))
        .and_then(|c| c.with("resume", resume))
        .unwrap()
}

fn losses(dir: &Path) -> Vec<(usize, u64, u64)> {
    History::load(dir.join("history.tsv"))
        .unwrap()
        .losses()
        .into_iter()
        .map(|(e, t, v)| (e, t.to_bits(), v.to_bits()))
        .collect()
}

#[test]
fn identical_runs_and_resumed_runs_agree_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let base = world_config(tmp.path());
    cmd_generate(&base.clone().with("out", tmp.path().join("w.sigd").display()).unwrap()).unwrap();

    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    cmd_train(&train_config(&base, &a, 2, false), |_| {}).unwrap();
    cmd_train(&train_config(&base, &b, 2, false), |_| {}).unwrap();
    cmd_train(&train_config(&base, &c, 1, false), |_| {}).unwrap();
    assert_eq!(losses(&c).len(), 1);
    cmd_train(&train_config(&base, &c, 1, true), |_| {}).unwrap();

    for f in ["last.hsun", "best.hsun"] {
        let reference = fs::read(a.join(f)).unwrap();
        assert_eq!(reference, fs::read(b.join(f)).unwrap(), "repeat {f}");
        assert_eq!(reference, fs::read(c.join(f)).unwrap(), "resume {f}");
    }
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(losses(&a), losses(&c));
    assert_eq!(losses(&a).len(), 2);
}

#[test]
fn non_neural_models_are_not_trained() {
    let tmp = tempfile::tempdir().unwrap();
    let base = world_config(tmp.path());
    cmd_generate(&base.clone().with("out", tmp.path().join("w.sigd").display()).unwrap()).unwrap();
    let cfg = train_config(&base, &tmp.path().join("r"), 1, false).with("model", "linreg").unwrap();
    assert_eq!(cmd_train(&cfg, |_| {}).unwrap_err().kind(), "model");
}
