//! Finite-difference gradient suite over every differentiable op kind plus
//! CBAM, WAM and the masked loss.
//!
//! Each case is checked with respect to each of its inputs: the op output is
//! projected onto a fixed random tensor to give a scalar, and the tape
//! gradient is compared with central differences.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{cbam_apply, hidden_width, wam_forward, Cbam, ChannelAttn, SpatialAttn, Wam, SPATIAL_KERNEL};
use crate::autograd::{grad_check, Activation, EwOp, PoolMode, Tape, Var};
use crate::error::Result;
use crate::tensor::GridTensor;

/// Tolerance on the maximum relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Central-difference step.
pub const GRADCHECK_EPS: f64 = 1e-5;

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

struct Case {
    op: &'static str,
    inputs: Vec<(&'static str, GridTensor)>,
    build: Build,
}

/// Outcome of one (op, input, seed) check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub op: &'static str,
    pub input: &'static str,
    pub seed: u64,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub results: Vec<CheckResult>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn worst(&self) -> f64 {
        self.results.iter().map(|r| r.max_rel_err).fold(0.0, f64::max)
    }

    /// Names of the ops covered, in suite order.
    pub fn ops(&self) -> Vec<&'static str> {
        let mut ops: Vec<&'static str> = Vec::new();
        for r in &self.results {
            if !ops.contains(&r.op) {
                ops.push(r.op);
            }
        }
        ops
    }

    /// Tab-separated table, one row per check.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("op\tinput\tseed\tmax_rel_err\tstatus\n");
        for r in &self.results {
            s.push_str(&format!(
                "{}\t{}\t{}\t{:e}\t{}\n",
                r.op,
                r.input,
                r.seed,
                r.max_rel_err,
                if r.passed { "PASS" } else { "FAIL" }
            ));
        }
        s
    }
}

fn rand_t(shape: [usize; 4], rng: &mut ChaCha8Rng) -> GridTensor {
    GridTensor::uniform(shape, 1.0, rng)
}

fn cbam_inputs(prefix: &'static [&'static str; 5], c: usize, rng: &mut ChaCha8Rng) -> Vec<(&'static str, GridTensor)> {
    let hd = hidden_width(c);
    let k = SPATIAL_KERNEL;
    let shapes = [[hd, c, 1, 1], [1, hd, 1, 1], [c, hd, 1, 1], [1, c, 1, 1], [1, 2, k, k]];
    prefix
        .iter()
        .zip(shapes)
        .map(|(&n, s)| (n, GridTensor::uniform(s, 0.5, rng)))
        .collect()
}

fn cbam_from(v: &[Var]) -> Cbam {
    Cbam {
        channel: ChannelAttn {
            w1: v[0],
            b1: v[1],
            w2: v[2],
            b2: v[3],
        },
        spatial: SpatialAttn { kernel: v[4] },
        identity: false,
    }
}

const CBAM_NAMES: [&str; 5] = ["mlp1.w", "mlp1.b", "mlp2.w", "mlp2.b", "spatial.w"];
const SHARED_NAMES: [&str; 5] = ["shared.mlp1.w", "shared.mlp1.b", "shared.mlp2.w", "shared.mlp2.b", "shared.spatial.w"];
const SIV_NAMES: [&str; 5] = ["siv.mlp1.w", "siv.mlp1.b", "siv.mlp2.w", "siv.mlp2.b", "siv.spatial.w"];
const SIC_NAMES: [&str; 5] = ["sic.mlp1.w", "sic.mlp1.b", "sic.mlp2.w", "sic.mlp2.b", "sic.spatial.w"];

fn cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut out = vec![
        Case {
            op: "conv2d",
            inputs: vec![
                ("x", rand_t([2, 2, 5, 5], r)),
                ("kernel", rand_t([3, 2, 3, 3], r)),
                ("bias", rand_t([1, 3, 1, 1], r)),
            ],
            build: Box::new(|t, v| t.conv2d(v[0], v[1], Some(v[2]))),
        },
        Case {
            op: "conv_transpose2d",
            inputs: vec![
                ("x", rand_t([2, 3, 3, 3], r)),
                ("kernel", rand_t([3, 2, 2, 2], r)),
                ("bias", rand_t([1, 2, 1, 1], r)),
            ],
            build: Box::new(|t, v| t.conv_transpose2d(v[0], v[1], Some(v[2]))),
        },
        Case {
            op: "maxpool2d",
            inputs: vec![("x", rand_t([2, 2, 4, 6], r))],
            build: Box::new(|t, v| t.maxpool2d(v[0])),
        },
    ];
    for (op, mode) in [("pool_spatial_avg", PoolMode::Avg), ("pool_spatial_max", PoolMode::Max)] {
        out.push(Case {
            op,
            inputs: vec![("x", rand_t([2, 3, 3, 4], r))],
            build: Box::new(move |t, v| Ok(t.pool_spatial(v[0], mode))),
        });
    }
    for (op, mode) in [("pool_channel_avg", PoolMode::Avg), ("pool_channel_max", PoolMode::Max)] {
        out.push(Case {
            op,
            inputs: vec![("x", rand_t([2, 4, 3, 3], r))],
            build: Box::new(move |t, v| Ok(t.pool_channel(v[0], mode))),
        });
    }
    for kind in [Activation::Tanh, Activation::Sigmoid, Activation::Relu] {
        out.push(Case {
            op: kind.name(),
            inputs: vec![("x", rand_t([2, 2, 3, 3], r))],
            build: Box::new(move |t, v| Ok(t.activation(v[0], kind))),
        });
    }
    out.push(Case {
        op: "dense",
        inputs: vec![
            ("x", rand_t([3, 5, 1, 1], r)),
            ("weight", rand_t([4, 5, 1, 1], r)),
            ("bias", rand_t([1, 4, 1, 1], r)),
        ],
        build: Box::new(|t, v| t.dense(v[0], v[1], Some(v[2]))),
    });
    for (op, ew) in [("ew_add", EwOp::Add), ("ew_mul", EwOp::Mul)] {
        out.push(Case {
            op,
            inputs: vec![("x", rand_t([2, 3, 3, 3], r)), ("y", rand_t([2, 3, 3, 3], r))],
            build: Box::new(move |t, v| t.ew(v[0], v[1], ew)),
        });
        out.push(Case {
            op: if ew == EwOp::Add { "ew_add_broadcast" } else { "ew_mul_broadcast" },
            inputs: vec![("x", rand_t([2, 3, 3, 3], r)), ("y", rand_t([2, 3, 1, 1], r))],
            build: Box::new(move |t, v| t.ew(v[0], v[1], ew)),
        });
    }
    let c = 8;
    let mut inputs = vec![("x", rand_t([2, c, 5, 5], r))];
    inputs.extend(cbam_inputs(&CBAM_NAMES, c, r));
    out.push(Case {
        op: "cbam_apply",
        inputs,
        build: Box::new(|t, v| cbam_apply(t, v[0], &cbam_from(&v[1..6]))),
    });
    let grid = [1, c, 4, 4];
    let mut inputs = vec![
        ("siv", rand_t([2, c, 4, 4], r)),
        ("sic", rand_t([2, c, 4, 4], r)),
        ("a_in_siv", GridTensor::uniform(grid, 1.0, r)),
        ("a_in_sic", GridTensor::uniform(grid, 1.0, r)),
        ("a_out_siv", GridTensor::uniform(grid, 1.0, r)),
        ("a_out_sic", GridTensor::uniform(grid, 1.0, r)),
    ];
    inputs.extend(cbam_inputs(&SHARED_NAMES, c, r));
    inputs.extend(cbam_inputs(&SIV_NAMES, c, r));
    inputs.extend(cbam_inputs(&SIC_NAMES, c, r));
    out.push(Case {
        op: "wam_forward",
        inputs,
        build: Box::new(|t, v| {
            let p = Wam {
                a_in_siv: v[2],
                a_in_sic: v[3],
                a_out_siv: v[4],
                a_out_sic: v[5],
                shared: cbam_from(&v[6..11]),
                siv: cbam_from(&v[11..16]),
                sic: cbam_from(&v[16..21]),
            };
            let (a, b) = wam_forward(t, v[0], v[1], &p)?;
            t.concat(&[a, b])
        }),
    });
    let target = rand_t([2, 3, 4, 4], r);
    let mask = GridTensor::from_fn([2, 1, 4, 4], |_| f64::from(u8::from(r.gen_bool(0.7))));
    out.push(Case {
        op: "masked_loss",
        inputs: vec![("pred", rand_t([2, 3, 4, 4], r))],
        build: Box::new(move |t, v| t.masked_loss(v[0], &target, &mask, &[1.0, 1.0, 0.5])),
    });
    out
}

/// Checks every case with respect to every input for each seed.
pub fn run_suite(seeds: &[u64], tol: f64) -> Result<SuiteReport> {
    let t0 = Instant::now();
    let mut results = Vec::new();
    for &seed in seeds {
        for case in cases(seed) {
            let mut probe = Tape::new();
            let vars: Vec<Var> = case.inputs.iter().map(|(_, x)| probe.constant(x.clone())).collect();
            let y = (case.build)(&mut probe, &vars)?;
            let proj = GridTensor::uniform(probe.shape(y), 1.0, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
            for (i, (name, x)) in case.inputs.iter().enumerate() {
                let f = |t: &mut Tape, leaf: Var| -> Result<Var> {
                    let vars: Vec<Var> = case
                        .inputs
                        .iter()
                        .enumerate()
                        .map(|(j, (_, v))| if j == i { leaf } else { t.constant(v.clone()) })
                        .collect();
                    let y = (case.build)(t, &vars)?;
                    let p = t.constant(proj.clone());
                    let weighted = t.mul(y, p)?;
                    Ok(t.sum(weighted))
                };
                let err = grad_check(f, x, GRADCHECK_EPS)?;
                results.push(CheckResult {
                    op: case.op,
                    input: name,
                    seed,
                    max_rel_err: err,
                    passed: err < tol,
                });
            }
        }
    }
    Ok(SuiteReport {
        results,
        seconds: t0.elapsed().as_secs_f64(),
    })
}
