//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the report is always printed. The end-to-end
//! criterion trains the full-size HIS-Unet for 20 epochs on one core and
//! dominates the runtime.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use chrono::Datelike;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hisunet::attention::{cbam_apply, hidden_width, wam_forward, CbamParams, WamParams};
use hisunet::cli::{cmd_generate, cmd_train, evaluate_config, Dataset};
use hisunet::config::RunConfig;
use hisunet::data::{coast_mask, sigd, NormSpec, Sample, Variable};
use hisunet::eval::{self, export_wam_maps, overall, Scope, Target};
use hisunet::gradsuite::{run_suite, GRADCHECK_TOL};
use hisunet::models::{checkpoint, Forecaster, LinRegModel, ModelKind, ModelSpec, ModelState, ParamSet, Persistence};
use hisunet::synth::{gen_world, WorldConfig};
use hisunet::train::History;
use hisunet::{GridTensor, Tape};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rand_t(shape: [usize; 4], seed: u64) -> GridTensor {
    GridTensor::uniform(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn value(tape: &Tape, v: hisunet::Var) -> GridTensor {
    tape.value(v).clone()
}

// ---------------------------------------------------------------- criterion 1

fn scope_statement() -> Outcome {
    Ok("real-archive scores are not reproduced; criteria 2-8 substitute synthetic, property and oracle checks".into())
}

// ---------------------------------------------------------------- criterion 2

fn gradient_suite() -> Outcome {
    let rep = run_suite(&[0, 1, 2, 3, 4], GRADCHECK_TOL).map_err(|e| e.to_string())?;
    let required = [
        "conv2d",
        "conv_transpose2d",
        "maxpool2d",
        "pool_spatial_avg",
        "pool_spatial_max",
        "pool_channel_avg",
        "pool_channel_max",
        "tanh",
        "sigmoid",
        "relu",
        "dense",
        "ew_add",
        "ew_mul",
        "cbam_apply",
        "wam_forward",
        "masked_loss",
    ];
    let ops = rep.ops();
    for op in required {
        ensure!(ops.contains(&op), "op {op} not covered");
    }
    ensure!(rep.passed(), "worst relative error {:e} >= {:e}", rep.worst(), GRADCHECK_TOL);
    ensure!(rep.seconds < 60.0, "took {:.1} s", rep.seconds);
    Ok(format!(
        "{} checks over 5 seeds, worst rel err {:.2e} < 1e-4, {:.2} s < 60 s",
        rep.results.len(),
        rep.worst(),
        rep.seconds
    ))
}

// ---------------------------------------------------------------- criterion 3

fn run_wam(p: &WamParams, siv: &GridTensor, sic: &GridTensor, identity: bool) -> (GridTensor, GridTensor) {
    let mut tape = Tape::new();
    let wam = p.bind(&mut tape, identity);
    let a = tape.constant(siv.clone());
    let b = tape.constant(sic.clone());
    let (x, y) = wam_forward(&mut tape, a, b, &wam).unwrap();
    (value(&tape, x), value(&tape, y))
}

fn wam_algebra() -> Outcome {
    let (c, h, w) = (8, 6, 6);
    let rng = |s| ChaCha8Rng::seed_from_u64(s);
    let siv = rand_t([2, c, h, w], 1);
    let sic = rand_t([2, c, h, w], 2);

    let mut p = WamParams::new(c, h, w, &mut rng(3));
    p.a_in_siv.fill(1.0);
    p.a_in_sic.fill(0.0);
    p.a_out_siv.fill(0.0);
    let (out, _) = run_wam(&p, &siv, &sic, true);
    ensure!(out == siv, "pass-through differs by {:e}", out.max_abs_diff(&siv));

    let p = WamParams::new(c, h, w, &mut rng(4));
    let (out_siv, _) = run_wam(&p, &siv, &sic, true);
    let share = GridTensor::from_fn(siv.shape(), |i| 2.0 * (out_siv.at(i) - siv.at(i)));
    let mean = GridTensor::from_fn(siv.shape(), |i| 0.5 * (siv.at(i) + sic.at(i)));
    let avg_err = share.max_abs_diff(&mean);
    ensure!(avg_err < 1e-12, "0.5-init share differs from the mean by {avg_err:e}");

    let mut p = WamParams::new(c, h, w, &mut rng(5));
    p.a_in_siv = rand_t([1, c, h, w], 6);
    p.a_out_sic = rand_t([1, c, h, w], 7);
    let mut q = p.clone();
    std::mem::swap(&mut q.a_in_siv, &mut q.a_in_sic);
    std::mem::swap(&mut q.a_out_siv, &mut q.a_out_sic);
    std::mem::swap(&mut q.attn_siv, &mut q.attn_sic);
    let (a, b) = run_wam(&p, &siv, &sic, false);
    let (b2, a2) = run_wam(&q, &sic, &siv, false);
    ensure!(a == a2 && b == b2, "swap symmetry broken");

    let mut spec = ModelSpec::new(ModelKind::HisUnet, 16, 16).with_seed(8);
    spec.stem_channels = 8;
    spec.identity_attention = true;
    let mut his = ModelState::init(spec).map_err(|e| e.to_string())?;
    for (name, t) in his.params.iter_mut() {
        if name.contains(".a_out_") {
            t.fill(0.0);
        }
    }
    let mut eb_params = ParamSet::new();
    for (name, t) in his.params.iter().filter(|(n, _)| !n.starts_with("wam")) {
        eb_params.insert(name, t.clone());
    }
    let eb = ModelState {
        spec: ModelSpec {
            kind: ModelKind::EbUnet,
            identity_attention: false,
            ..his.spec.clone()
        },
        params: eb_params,
    };
    let x = rand_t([2, 20, 16, 16], 9);
    let delta = his.predict(&x).unwrap().max_abs_diff(&eb.predict(&x).unwrap());
    ensure!(delta < 1e-10, "degeneration differs by {delta:e}");
    Ok(format!(
        "pass-through exact, averaging err {avg_err:.1e} < 1e-12, swap bitwise, HIS->EB max |d| {delta:.1e} < 1e-10"
    ))
}

// ---------------------------------------------------------------- criterion 4

fn naive_conv(x: &GridTensor, k: &GridTensor, bias: Option<&GridTensor>) -> GridTensor {
    let [b, ci, h, w] = x.shape();
    let [co, _, kh, kw] = k.shape();
    let (ph, pw) = (kh as isize / 2, kw as isize / 2);
    GridTensor::from_fn([b, co, h, w], |[ib, oc, y, xx]| {
        let mut acc = bias.map_or(0.0, |t| t.data()[oc]);
        for ic in 0..ci {
            for ky in 0..kh {
                for kx in 0..kw {
                    let sy = y as isize + ky as isize - ph;
                    let sx = xx as isize + kx as isize - pw;
                    if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                        acc += k.at([oc, ic, ky, kx]) * x.at([ib, ic, sy as usize, sx as usize]);
                    }
                }
            }
        }
        acc
    })
}

fn naive_conv_t(x: &GridTensor, k: &GridTensor, bias: &GridTensor) -> GridTensor {
    let [b, ci, h, w] = x.shape();
    let co = k.shape()[1];
    GridTensor::from_fn([b, co, 2 * h, 2 * w], |[ib, oc, y, xx]| {
        let (sy, sx, dy, dx) = (y / 2, xx / 2, y % 2, xx % 2);
        bias.data()[oc] + (0..ci).map(|ic| x.at([ib, ic, sy, sx]) * k.at([ic, oc, dy, dx])).sum::<f64>()
    })
}

fn naive_maxpool(x: &GridTensor) -> GridTensor {
    let [b, c, h, w] = x.shape();
    GridTensor::from_fn([b, c, h / 2, w / 2], |[ib, ic, y, xx]| {
        let mut m = f64::NEG_INFINITY;
        for dy in 0..2 {
            for dx in 0..2 {
                m = m.max(x.at([ib, ic, 2 * y + dy, 2 * xx + dx]));
            }
        }
        m
    })
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn naive_cbam(x: &GridTensor, p: &CbamParams) -> GridTensor {
    let [b, c, h, w] = x.shape();
    let hd = hidden_width(c);
    let ch = &p.channel;
    let mlp = |d: &[f64]| -> Vec<f64> {
        let hid: Vec<f64> = (0..hd)
            .map(|j| ((0..c).map(|i| ch.w1.at([j, i, 0, 0]) * d[i]).sum::<f64>() + ch.b1.data()[j]).max(0.0))
            .collect();
        (0..c)
            .map(|i| (0..hd).map(|j| ch.w2.at([i, j, 0, 0]) * hid[j]).sum::<f64>() + ch.b2.data()[i])
            .collect()
    };
    let mut out = GridTensor::zeros([b, c, h, w]);
    for ib in 0..b {
        let avg: Vec<f64> = (0..c).map(|i| x.plane(ib, i).iter().sum::<f64>() / (h * w) as f64).collect();
        let max: Vec<f64> = (0..c)
            .map(|i| x.plane(ib, i).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let (ma, mm) = (mlp(&avg), mlp(&max));
        let mc: Vec<f64> = (0..c).map(|i| sigmoid(ma[i] + mm[i])).collect();
        let pooled = GridTensor::from_fn([1, 2, h, w], |[_, k, y, xx]| {
            let vals = (0..c).map(|i| x.at([ib, i, y, xx]));
            if k == 0 {
                vals.sum::<f64>() / c as f64
            } else {
                vals.fold(f64::NEG_INFINITY, f64::max)
            }
        });
        let ms = naive_conv(&pooled, &p.spatial.kernel, None);
        for i in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let v = x.at([ib, i, y, xx]) * mc[i] * sigmoid(ms.at([0, 0, y, xx]));
                    out.set([ib, i, y, xx], v);
                }
            }
        }
    }
    out
}

fn oracles() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let x = rand_t([2, 3, 6, 8], 10 + seed);
        let k = rand_t([4, 3, 3, 3], 20 + seed);
        let bias = rand_t([1, 4, 1, 1], 30 + seed);
        let kt = rand_t([3, 2, 2, 2], 40 + seed);
        let bt = rand_t([1, 2, 1, 1], 50 + seed);
        let cp = CbamParams::new(8, &mut ChaCha8Rng::seed_from_u64(60 + seed));
        let xc = rand_t([2, 8, 5, 7], 70 + seed);

        let mut t = Tape::new();
        let (xv, kv, bv) = (t.constant(x.clone()), t.constant(k.clone()), t.constant(bias.clone()));
        let conv = t.conv2d(xv, kv, Some(bv)).unwrap();
        let (ktv, btv) = (t.constant(kt.clone()), t.constant(bt.clone()));
        let convt = t.conv_transpose2d(xv, ktv, Some(btv)).unwrap();
        let pool = t.maxpool2d(xv).unwrap();
        let cbam = cp.bind(&mut t, false);
        let xcv = t.constant(xc.clone());
        let att = cbam_apply(&mut t, xcv, &cbam).unwrap();

        for (got, want, what) in [
            (value(&t, conv), naive_conv(&x, &k, Some(&bias)), "conv2d"),
            (value(&t, convt), naive_conv_t(&x, &kt, &bt), "conv_transpose2d"),
            (value(&t, pool), naive_maxpool(&x), "maxpool2d"),
            (value(&t, att), naive_cbam(&xc, &cp), "cbam_apply"),
        ] {
            let d = got.max_abs_diff(&want);
            ensure!(d < 1e-12, "{what} differs from its loop oracle by {d:e}");
            worst = worst.max(d);
        }
    }

    let (h, w) = (2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let coeffs: Vec<f64> = (0..h * w * 3 * 20).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let samples: Vec<Sample> = (0..40)
        .map(|_| {
            let input = GridTensor::from_fn([1, 20, h, w], |_| rng.gen_range(-1.0..1.0));
            let target = GridTensor::from_fn([1, 3, h, w], |[_, o, y, x]| {
                let p = y * w + x;
                (0..20).map(|k| coeffs[(p * 3 + o) * 20 + k] * input.at([0, k, y, x])).sum()
            });
            Sample {
                input,
                target,
                mask: GridTensor::ones([1, 1, h, w]),
                date: chrono::NaiveDate::MIN,
            }
        })
        .collect();
    let m = LinRegModel::fit(&samples).map_err(|e| e.to_string())?;
    let mut coef_err: f64 = 0.0;
    for y in 0..h {
        for x in 0..w {
            for o in 0..3 {
                let p = y * w + x;
                for (k, &c) in m.coefficients(y, x, o).iter().enumerate() {
                    coef_err = coef_err.max((c - coeffs[(p * 3 + o) * 20 + k]).abs());
                }
            }
        }
    }
    ensure!(coef_err < 1e-6, "linreg coefficient error {coef_err:e}");

    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let n = 500;
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 0.6 * x + rng.gen_range(-1.0..1.0)).collect();
    let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.8)).collect();
    let pairs: Vec<(f64, f64)> = xs.iter().zip(&ys).zip(&mask).filter(|(_, &m)| m).map(|((&x, &y), _)| (x, y)).collect();
    let k = pairs.len() as f64;
    let want_rmse = (pairs.iter().map(|(x, y)| (x - y).powi(2)).sum::<f64>() / k).sqrt();
    let want_mae = pairs.iter().map(|(x, y)| (x - y).abs()).sum::<f64>() / k;
    let (mx, my) = (pairs.iter().map(|p| p.0).sum::<f64>() / k, pairs.iter().map(|p| p.1).sum::<f64>() / k);
    let sxy: f64 = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pairs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let syy: f64 = pairs.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let want_r = sxy / (sxx * syy).sqrt();
    let got_r = eval::corr(&xs, &ys, &mask).map_err(|e| e.to_string())?.ok_or("R undefined")?;
    let metric_err = (eval::rmse(&xs, &ys, &mask).unwrap() - want_rmse)
        .abs()
        .max((eval::mae(&xs, &ys, &mask).unwrap() - want_mae).abs())
        .max((got_r - want_r).abs());
    ensure!(metric_err < 1e-12, "metrics differ from explicit formulas by {metric_err:e}");
    Ok(format!(
        "forwards {worst:.1e} < 1e-12, linreg coef err {coef_err:.1e} < 1e-6, metrics {metric_err:.1e} < 1e-12"
    ))
}

// ---------------------------------------------------------------- criterion 5

fn pipeline() -> Outcome {
    let cfg = WorldConfig {
        height: 16,
        width: 24,
        n_days: 70,
        seed: 3,
        start_date: chrono::NaiveDate::from_ymd_opt(2021, 1, 15).unwrap(),
        ..WorldConfig::default()
    };
    let stack = gen_world(&cfg).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = tmp.path().join("w.sigd");
    sigd::write_stack(&path, &stack).map_err(|e| e.to_string())?;
    let back = sigd::read_stack(&path).map_err(|e| e.to_string())?;
    ensure!(fs::read(&path).unwrap() == sigd::encode(&back), "SIGD round trip is not bitwise");

    let norm = NormSpec::for_grid(cfg.height, cfg.width, cfg.cell_km);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut norm_err: f64 = 0.0;
    for var in Variable::ALL {
        let (lo, hi) = norm.bounds(var.name()).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let x = rng.gen_range(lo..=hi);
            let z = norm.normalize_value(var, x).unwrap();
            norm_err = norm_err.max((norm.denormalize_value(var, z).unwrap() - x).abs());
        }
    }
    ensure!(norm_err < 1e-12, "normalization round trip error {norm_err:e}");

    for trial in 0..50u64 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + trial);
        let (h, w) = (r.gen_range(1..20), r.gen_range(1..20));
        let p = r.gen_range(0.0..0.3);
        let land: Vec<bool> = (0..h * w).map(|_| r.gen_bool(p)).collect();
        let buffer = r.gen_range(0..4);
        let got = coast_mask(&land, h, w, buffer);
        for y in 0..h {
            for x in 0..w {
                let mut far = true;
                for yy in 0..h {
                    for xx in 0..w {
                        if land[yy * w + xx] && y.abs_diff(yy).max(x.abs_diff(xx)) <= buffer {
                            far = false;
                        }
                    }
                }
                ensure!(got[y * w + x] == far, "coast mask trial {trial} differs at ({y}, {x})");
            }
        }
    }

    let samples = hisunet::data::build_samples(&stack, &norm).map_err(|e| e.to_string())?;
    let refs: Vec<&Sample> = samples.iter().collect();
    let recs = eval::evaluate(&Persistence, &refs, &norm, None, 4).map_err(|e| e.to_string())?;
    let recombine = |parts: &[(f64, usize)]| {
        let n: usize = parts.iter().map(|p| p.1).sum();
        ((parts.iter().map(|&(m, k)| m * m * k as f64).sum::<f64>()) / n as f64).sqrt()
    };
    let month_recs = |var: Target| -> Vec<(u32, f64, usize)> {
        recs.iter()
            .filter(|r| r.variable == var)
            .filter_map(|r| match r.scope {
                Scope::Month(m) => Some((m, r.rmse, r.n_pixels)),
                _ => None,
            })
            .collect()
    };
    let sic = overall(&recs, "persistence", Target::Sic).ok_or("no overall row")?;
    let sic_months = month_recs(Target::Sic);
    ensure!(sic_months.len() >= 3, "expected several months, got {}", sic_months.len());
    let parts: Vec<(f64, usize)> = sic_months.iter().map(|&(_, m, k)| (m, k)).collect();
    ensure!(parts.iter().map(|p| p.1).sum::<usize>() == sic.n_pixels, "monthly pixel counts do not add up");
    let mut worst = (recombine(&parts) - sic.rmse).abs();

    // SIV rows average the u and v RMSEs; the identity holds per component.
    let mut comp: std::collections::BTreeMap<u32, [(Vec<f64>, Vec<f64>, Vec<bool>); 2]> = Default::default();
    for s in &samples {
        let pred = Persistence.predict(&s.input).map_err(|e| e.to_string())?;
        let mask: Vec<bool> = s.mask.data().iter().map(|&m| m > 0.0).collect();
        let entry = comp.entry(s.date.month()).or_default();
        for (c, var) in [Variable::SivU, Variable::SivV].into_iter().enumerate() {
            let phys = |z: &[f64]| norm.denormalize(var.name(), z).unwrap();
            entry[c].0.extend(phys(pred.plane(0, c)));
            entry[c].1.extend(phys(s.target.plane(0, c)));
            entry[c].2.extend(&mask);
        }
    }
    let siv = overall(&recs, "persistence", Target::Siv).ok_or("no overall row")?;
    let siv_months = month_recs(Target::Siv);
    ensure!(siv_months.len() == comp.len(), "SIV month rows do not match the sample months");
    let mut whole = [(vec![], vec![], vec![]), (vec![], vec![], vec![])];
    let mut parts = [vec![], vec![]];
    for &(m, rec_rmse, _) in &siv_months {
        let cs = &comp[&m];
        let mut avg = 0.0;
        for c in 0..2 {
            let r = eval::rmse(&cs[c].0, &cs[c].1, &cs[c].2).map_err(|e| e.to_string())?;
            parts[c].push((r, cs[c].2.iter().filter(|&&b| b).count()));
            avg += 0.5 * r;
            whole[c].0.extend(&cs[c].0);
            whole[c].1.extend(&cs[c].1);
            whole[c].2.extend(&cs[c].2);
        }
        worst = worst.max((avg - rec_rmse).abs());
    }
    let mut avg = 0.0;
    for c in 0..2 {
        let r = eval::rmse(&whole[c].0, &whole[c].1, &whole[c].2).map_err(|e| e.to_string())?;
        worst = worst.max((recombine(&parts[c]) - r).abs());
        avg += 0.5 * r;
    }
    worst = worst.max((avg - siv.rmse).abs());
    ensure!(worst < 1e-10, "recombined RMSE differs by {worst:e}");
    Ok(format!(
        "SIGD bitwise, norm err {norm_err:.1e} < 1e-12, 50 coast masks match, RMSE recombination {worst:.1e} < 1e-10"
    ))
}

// ---------------------------------------------------------------- criterion 6

struct EndToEnd {
    rmse: Vec<(String, f64, f64)>,
}

fn scores(cfg: &RunConfig, ds: &Dataset, model: &str, ckpt: Option<&Path>) -> Result<(f64, f64), String> {
    let mut c = cfg.clone().with("model", model).map_err(|e| e.to_string())?;
    if let Some(p) = ckpt {
        c = c.with("checkpoint", p.display()).map_err(|e| e.to_string())?;
    }
    let recs = evaluate_config(&c, ds).map_err(|e| e.to_string())?;
    let sic = overall(&recs, model, Target::Sic).ok_or("no SIC row")?.rmse;
    let siv = overall(&recs, model, Target::Siv).ok_or("no SIV row")?.rmse;
    Ok((sic, siv))
}

fn end_to_end(keep: &mut Option<EndToEnd>) -> Outcome {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("world.sigd");
    let run = tmp.path().join("run");
    let cfg = RunConfig::default()
        .with("data", data.display())
        .and_then(|c| c.with("out", data.display()))
        .map_err(|e| e.to_string())?;
    cmd_generate(&cfg).map_err(|e| e.to_string())?;
    let world = cfg.world().map_err(|e| e.to_string())?;
    ensure!(
        (world.height, world.width, world.n_days) == (48, 48, 250),
        "default world is not 48x48x250"
    );
    let cfg = cfg
        .with("out", run.display())
        .and_then(|c| c.with("epochs", 20))
        .and_then(|c| c.with("batch_size", 4))
        .map_err(|e| e.to_string())?;
    cmd_train(&cfg, |r| {
        println!("  epoch {:>2}  train {:.5}  val {:.5}  {:.1} s", r.epoch, r.train_loss, r.val_loss, r.wall_seconds)
    })
    .map_err(|e| e.to_string())?;

    let hist = History::load(run.join("history.tsv")).map_err(|e| e.to_string())?;
    let losses = hist.losses();
    ensure!(losses.len() == 20, "history has {} epochs", losses.len());
    let (l1, l20) = (losses[0].1, losses[19].1);

    let ds = Dataset::load(&cfg).map_err(|e| e.to_string())?;
    let last = run.join("last.hsun");
    let (his_sic, his_siv) = scores(&cfg, &ds, "his_unet", Some(&last))?;
    let (per_sic, per_siv) = scores(&cfg, &ds, "persistence", None)?;
    let state = checkpoint::load(&last).map_err(|e| e.to_string())?.state;
    let maps = export_wam_maps(&state).map_err(|e| e.to_string())?;
    let minutes = t0.elapsed().as_secs_f64() / 60.0;
    *keep = Some(EndToEnd {
        rmse: vec![
            ("his_unet (48x48, 20 epochs)".into(), his_sic, his_siv),
            ("persistence (48x48)".into(), per_sic, per_siv),
        ],
    });
    println!(
        "  samples train {} val {}; val RMSE his_unet SIC {his_sic:.4} % SIV {his_siv:.4} km/day; persistence SIC {per_sic:.4} % SIV {per_siv:.4} km/day",
        ds.train.len(),
        ds.val.len()
    );

    let mut fails = Vec::new();
    if !(l20 < 0.5 * l1) {
        fails.push(format!("(a) train loss epoch 20 {l20:.5} >= 0.5 x epoch 1 {l1:.5}"));
    }
    if !(his_sic < per_sic && his_siv < per_siv) {
        fails.push(format!(
            "(b) his_unet SIC {his_sic:.4} vs persistence {per_sic:.4}, SIV {his_siv:.4} vs {per_siv:.4}"
        ));
    }
    let expected = [(24, 24), (12, 12), (6, 6), (12, 12), (24, 24), (48, 48)];
    let shapes_ok = maps.len() == 24
        && maps.iter().all(|m| {
            (1..=6).contains(&m.level)
                && (m.height, m.width) == expected[m.level - 1]
                && m.values.len() == m.height * m.width
        });
    let moved = maps.iter().all(|m| m.values.iter().any(|&v| v != 0.5));
    if !(shapes_ok && moved) {
        fails.push(format!("(c) {} maps, shapes ok {shapes_ok}, all moved off 0.5 {moved}", maps.len()));
    }
    if minutes >= 30.0 {
        fails.push(format!("wall time {minutes:.1} min >= 30"));
    }
    let summary = format!(
        "(a) loss {l20:.5} < 0.5 x {l1:.5}; (b) SIC {his_sic:.3} < {per_sic:.3} %, SIV {his_siv:.3} < {per_siv:.3} km/day; (c) 6 levels x 4 maps; {minutes:.1} min < 30"
    );
    if fails.is_empty() {
        Ok(summary)
    } else {
        Err(fails.join("; "))
    }
}

// ---------------------------------------------------------------- criterion 7

fn comparative(full: Option<&EndToEnd>) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("world.sigd");
    let cfg = RunConfig::default()
        .with("height", 32)
        .and_then(|c| c.with("width", 32))
        .and_then(|c| c.with("n_days", 200))
        .and_then(|c| c.with("data", data.display()))
        .and_then(|c| c.with("out", data.display()))
        .and_then(|c| c.with("stem_channels", 8))
        .and_then(|c| c.with("epochs", 8))
        .map_err(|e| e.to_string())?;
    cmd_generate(&cfg).map_err(|e| e.to_string())?;
    let ds = Dataset::load(&cfg).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for kind in ModelKind::ALL {
        let name = kind.name();
        let ckpt = if kind.is_neural() {
            let out = tmp.path().join(name);
            let c = cfg.clone().with("model", name).and_then(|c| c.with("out", out.display()));
            cmd_train(&c.map_err(|e| e.to_string())?, |_| {}).map_err(|e| e.to_string())?;
            Some(out.join("last.hsun"))
        } else {
            None
        };
        let (sic, siv) = scores(&cfg, &ds, name, ckpt.as_deref())?;
        rows.push((name.to_string(), sic, siv));
    }
    rows.sort_by(|a, b| (a.1 + a.2).total_cmp(&(b.1 + b.2)));
    println!("  comparative table: 32x32 world, 200 days, seed 0, stem 8, 8 epochs, validation split");
    println!("  {:<14} {:>10} {:>14}", "model", "SIC RMSE %", "SIV RMSE km/d");
    for (name, sic, siv) in &rows {
        println!("  {name:<14} {sic:>10.4} {siv:>14.4}");
    }
    if let Some(e) = full {
        for (name, sic, siv) in &e.rmse {
            println!("  {name:<28} {sic:>10.4} {siv:>14.4}");
        }
    }
    let rank = |col: fn(&(String, f64, f64)) -> f64| {
        let mut v: Vec<&(String, f64, f64)> = rows.iter().collect();
        v.sort_by(|a, b| col(a).total_cmp(&col(b)));
        v.iter().position(|r| r.0 == "his_unet").unwrap() + 1
    };
    Ok(format!(
        "informational: his_unet ranks {} of 8 on SIC and {} of 8 on SIV at reduced scale",
        rank(|r| r.1),
        rank(|r| r.2)
    ))
}

// ---------------------------------------------------------------- criterion 8

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("w.sigd");
    let base = RunConfig::default()
        .with("height", 16)
        .and_then(|c| c.with("width", 16))
        .and_then(|c| c.with("n_days", 30))
        .and_then(|c| c.with("seed", 9))
        .and_then(|c| c.with("data", data.display()))
        .and_then(|c| c.with("stem_channels", 4))
        .map_err(|e| e.to_string())?;
    cmd_generate(&base.clone().with("out", data.display()).unwrap()).map_err(|e| e.to_string())?;
    let train = |dir: &str, epochs: usize, resume: bool| -> Result<(), String> {
        let c = base
            .clone()
            .with("out", tmp.path().join(dir).display())
            .and_then(|c| c.with("epochs", epochs))
            .and_then(|c| c.with("resume", resume))
            .map_err(|e| e.to_string())?;
        cmd_train(&c, |_| {}).map(|_| ()).map_err(|e| e.to_string())
    };
    train("a", 3, false)?;
    train("b", 3, false)?;
    train("c", 1, false)?;
    train("c", 2, true)?;
    let bits = |dir: &str| -> Result<Vec<(usize, u64, u64)>, String> {
        let h = History::load(tmp.path().join(dir).join("history.tsv")).map_err(|e| e.to_string())?;
        Ok(h.losses().into_iter().map(|(e, t, v)| (e, t.to_bits(), v.to_bits())).collect())
    };
    for f in ["last.hsun", "best.hsun"] {
        let a = fs::read(tmp.path().join("a").join(f)).map_err(|e| e.to_string())?;
        ensure!(a == fs::read(tmp.path().join("b").join(f)).unwrap(), "repeat run {f} differs");
        ensure!(a == fs::read(tmp.path().join("c").join(f)).unwrap(), "resumed run {f} differs");
    }
    ensure!(bits("a")? == bits("b")?, "repeat histories differ");
    ensure!(bits("a")? == bits("c")?, "resumed history differs");
    Ok("repeat and 1+2 resumed runs match 3-epoch run: checkpoints and loss histories bitwise".into())
}

// ----------------------------------------------------------------------------

fn main() {
    let started = Instant::now();
    let mut full = None;
    let mut results: Vec<(usize, &str, bool, String)> = Vec::new();
    let mut record = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (ok, detail) = match out {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("criterion {id} {tag} {name}: {detail} [{:.1} s]", t.elapsed().as_secs_f64());
        results.push((id, name, ok, detail));
    };
    record(1, "scope", &mut scope_statement);
    record(2, "gradient suite", &mut gradient_suite);
    record(3, "WAM algebra", &mut wam_algebra);
    record(4, "oracle equivalences", &mut oracles);
    record(5, "pipeline correctness", &mut pipeline);
    record(6, "end-to-end desk-scale run", &mut || end_to_end(&mut full));
    record(7, "comparative report", &mut || comparative(full.as_ref()));
    record(8, "determinism and resume", &mut determinism);

    println!("\nacceptance summary ({:.1} min)", started.elapsed().as_secs_f64() / 60.0);
    for (id, name, ok, _) in &results {
        println!("  {id}. {name:<28} {}", if *ok { "PASS" } else { "FAIL" });
    }
    if results.iter().any(|r| !r.2) {
        std::process::exit(1);
    }
}
