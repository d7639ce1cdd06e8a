//! Command-line front end: `generate | train | evaluate | gradcheck |
//! wam-export`.
//!
//! Every command is a function of a resolved [`RunConfig`] to output files.
//! Each flag `--<key>` mirrors a key of [`KEYS`], and `--config <path>` loads
//! a key=value file underneath them. Every run writes the resolved config
//! beside its output.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::{ContextKind, ErrorKind};
use clap::{Arg, ArgAction, Command};

use crate::config::{RunConfig, KEYS};
use crate::data::{build_samples, sigd, split_dataset, GridStack, NormSpec, Sample};
use crate::error::{Error, Result};
use crate::eval::{evaluate, export_wam_maps, write_metrics, write_wam_maps, MetricsRecord, RegionMask};
use crate::gradsuite::{run_suite, SuiteReport};
use crate::models::{checkpoint, Forecaster, LinRegModel, ModelKind, ModelState, NeuralForecaster, Persistence};
use crate::synth::gen_world;
use crate::train::{RunFiles, Trainer};

pub const SUBCOMMANDS: [(&str, &str); 5] = [
    ("generate", "write a synthetic world as a SIGD stack"),
    ("train", "train a neural model; writes last.hsun, best.hsun and history.tsv"),
    ("evaluate", "score a model on a SIGD stack; writes a metrics table"),
    ("gradcheck", "finite-difference check of every op kind, CBAM, WAM and the loss"),
    ("wam-export", "write the WAM weight grids of a his_unet checkpoint"),
];

/// Sidecar holding the resolved configuration of a run.
pub const ECHO_NAME: &str = "run.config";

fn echo_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join(ECHO_NAME)
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".config");
        PathBuf::from(s)
    }
}

fn out_or(cfg: &RunConfig, default: &str) -> Result<PathBuf> {
    Ok(PathBuf::from(cfg.path("out")?.unwrap_or(default)))
}

fn require<'a>(cfg: &'a RunConfig, key: &str, cmd: &str) -> Result<&'a str> {
    cfg.path(key)?.ok_or_else(|| Error::ConfigValue {
        key: key.to_string(),
        reason: format!("{cmd} needs a path"),
    })
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d)?;
    }
    Ok(())
}

/// Generates the configured world. Returns the files written.
pub fn cmd_generate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let world = gen_world(&cfg.world()?)?;
    let out = out_or(cfg, "world.sigd")?;
    create_parent(&out)?;
    sigd::write_stack(&out, &world)?;
    let echo = echo_path(&out, false);
    cfg.write_echo(&echo)?;
    Ok(vec![out, echo])
}

/// Samples of the `data` stack, its normalization and the train/validation
/// split.
pub struct Dataset {
    pub stack: GridStack,
    pub norm: NormSpec,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

impl Dataset {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let stack = sigd::read_stack(require(cfg, "data", "this command")?)?;
        Self::from_stack(cfg, stack)
    }

    pub fn from_stack(cfg: &RunConfig, stack: GridStack) -> Result<Self> {
        let norm = cfg.norm(stack.height, stack.width)?;
        let samples = build_samples(&stack, &norm)?;
        let (train, val) = split_dataset(samples, cfg.get("train_ratio")?, cfg.get("split_seed")?)?;
        Ok(Dataset { stack, norm, train, val })
    }

    /// The subset named by `eval_set`.
    pub fn eval_set(&self, cfg: &RunConfig) -> Result<Vec<&Sample>> {
        Ok(match cfg.raw("eval_set")? {
            "val" => self.val.iter().collect(),
            "train" => self.train.iter().collect(),
            "all" => self.train.iter().chain(&self.val).collect(),
            other => {
                return Err(Error::ConfigValue {
                    key: "eval_set".into(),
                    reason: format!("'{other}' is not one of val, train, all"),
                })
            }
        })
    }

    /// Land where the `land` grid of day 0 is set or invalid.
    pub fn land(&self) -> Vec<bool> {
        let hw = self.stack.height * self.stack.width;
        match self.stack.get(0, "land") {
            Some(g) => (0..hw).map(|k| !g.valid[k] || g.values[k] > 0.5).collect(),
            None => vec![false; hw],
        }
    }
}

fn check_grid(state: &ModelState, stack: &GridStack) -> Result<()> {
    let s = &state.spec;
    if (s.height, s.width) != (stack.height, stack.width) {
        return Err(Error::GridMismatch {
            what: "checkpoint",
            expected: [stack.height, stack.width],
            got: [s.height, s.width],
        });
    }
    Ok(())
}

/// Trains a neural model on the training split. With `resume = true` the
/// run continues from `<out>/last.hsun` for `epochs` more epochs.
pub fn cmd_train(cfg: &RunConfig, mut on_epoch: impl FnMut(&crate::train::EpochRecord)) -> Result<Vec<PathBuf>> {
    let ds = Dataset::load(cfg)?;
    let spec = cfg.model_spec(ds.stack.height, ds.stack.width)?;
    if !spec.kind.is_neural() {
        return Err(Error::Model(format!(
            "{} is not trained by gradient descent; use evaluate",
            spec.kind
        )));
    }
    let out = out_or(cfg, "run")?;
    std::fs::create_dir_all(&out)?;
    let files = RunFiles::in_dir(&out);
    let mut tcfg = cfg.train()?;
    let mut trainer = if cfg.get::<bool>("resume")? {
        let prior = checkpoint::load(&files.last)?;
        if prior.state.spec != spec {
            return Err(Error::Model(format!(
                "{} was written for a different model spec",
                files.last.display()
            )));
        }
        let done = prior.extras.get("epoch").map_or(0, |t| t.data()[0] as usize);
        tcfg.epochs += done;
        Trainer::resume(&files, tcfg)?
    } else {
        Trainer::new(ModelState::init(spec)?, tcfg)?
    };
    let train: Vec<&Sample> = ds.train.iter().collect();
    let val: Vec<&Sample> = ds.val.iter().collect();
    trainer.fit(&train, &val, Some(&files), &mut on_epoch)?;
    let echo = echo_path(&out, true);
    cfg.write_echo(&echo)?;
    Ok(vec![files.last, files.best, files.history, echo])
}

/// The forecaster named by `model`: persistence, linreg fitted on the
/// training split, or a neural model loaded from `checkpoint`.
pub fn build_model(cfg: &RunConfig, ds: &Dataset) -> Result<Box<dyn Forecaster>> {
    let kind = cfg.model_kind()?;
    Ok(match kind {
        ModelKind::Persistence => Box::new(Persistence),
        ModelKind::LinReg => Box::new(LinRegModel::fit(&ds.train)?),
        _ => {
            let ck = checkpoint::load(require(cfg, "checkpoint", "evaluate")?)?;
            if ck.state.spec.kind != kind {
                return Err(Error::Model(format!(
                    "checkpoint holds {}, but model = {kind}",
                    ck.state.spec.kind
                )));
            }
            check_grid(&ck.state, &ds.stack)?;
            Box::new(OwnedNeural {
                state: ck.state,
                precision: cfg.get("precision")?,
            })
        }
    })
}

struct OwnedNeural {
    state: ModelState,
    precision: crate::autograd::Precision,
}

impl Forecaster for OwnedNeural {
    fn name(&self) -> String {
        self.state.spec.kind.name().to_string()
    }

    fn predict(&self, input: &crate::tensor::GridTensor) -> Result<crate::tensor::GridTensor> {
        NeuralForecaster {
            state: &self.state,
            precision: self.precision,
        }
        .predict(input)
    }
}

/// Region labels from `regions`, or the synthetic partition of the ocean.
pub fn region_mask(cfg: &RunConfig, ds: &Dataset) -> Result<RegionMask> {
    let m = match cfg.path("regions")? {
        Some(p) => RegionMask::from_stack(&sigd::read_stack(p)?)?,
        None => RegionMask::synthetic(ds.stack.height, ds.stack.width, &ds.land()),
    };
    if (m.height, m.width) != (ds.stack.height, ds.stack.width) {
        return Err(Error::GridMismatch {
            what: "region raster",
            expected: [ds.stack.height, ds.stack.width],
            got: [m.height, m.width],
        });
    }
    Ok(m)
}

/// Metrics of the configured model on `eval_set`, without writing files.
pub fn evaluate_config(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<MetricsRecord>> {
    let model = build_model(cfg, ds)?;
    let regions = region_mask(cfg, ds)?;
    evaluate(model.as_ref(), &ds.eval_set(cfg)?, &ds.norm, Some(&regions), cfg.get("batch_size")?)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let ds = Dataset::load(cfg)?;
    let records = evaluate_config(cfg, &ds)?;
    let out = out_or(cfg, "metrics.tsv")?;
    create_parent(&out)?;
    write_metrics(&out, &records)?;
    let echo = echo_path(&out, false);
    cfg.write_echo(&echo)?;
    Ok(vec![out, echo])
}

/// Runs the gradient suite over seeds `0..gradcheck_seeds`. The report is
/// written even when a check fails; the failure is then returned.
pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<(SuiteReport, Vec<PathBuf>)> {
    let n: u64 = cfg.get("gradcheck_seeds")?;
    let tol: f64 = cfg.get("gradcheck_tol")?;
    let seeds: Vec<u64> = (0..n).collect();
    let report = run_suite(&seeds, tol)?;
    let out = out_or(cfg, "gradcheck.tsv")?;
    create_parent(&out)?;
    std::fs::write(&out, report.to_tsv())?;
    let echo = echo_path(&out, false);
    cfg.write_echo(&echo)?;
    if !report.passed() {
        return Err(Error::GradCheck {
            failed: report.results.iter().filter(|r| !r.passed).count(),
            total: report.results.len(),
            worst: report.worst(),
        });
    }
    Ok((report, vec![out, echo]))
}

pub fn cmd_wam_export(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let ck = checkpoint::load(require(cfg, "checkpoint", "wam-export")?)?;
    let maps = export_wam_maps(&ck.state)?;
    let out = out_or(cfg, "wam")?;
    let mut paths = write_wam_maps(&out, &maps, cfg.get("start_date")?)?;
    let echo = echo_path(&out, true);
    cfg.write_echo(&echo)?;
    paths.push(echo);
    Ok(paths)
}

/// The clap command tree: one `--<key>` flag per configuration key on every
/// subcommand.
pub fn command() -> Command {
    let mut root = Command::new("hisunet")
        .about("Multi-task sea-ice concentration and drift forecasting")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in SUBCOMMANDS {
        let mut sub = Command::new(name).about(about).arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .help("key = value file applied under the flags"),
        );
        for k in KEYS {
            let mut arg = Arg::new(k.name)
                .long(k.name)
                .value_name("VALUE")
                .help(format!("{} [default: {}]", k.help, k.default))
                .action(ArgAction::Set);
            if k.default == "false" {
                arg = arg.num_args(0..=1).default_missing_value("true");
            }
            sub = sub.arg(arg);
        }
        root = root.subcommand(sub);
    }
    root
}

/// Parses `args` (program name first) and runs the subcommand. Progress goes
/// to stderr; the paths written go to stdout.
pub fn run<I, T>(args: I) -> Result<Vec<PathBuf>>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().try_get_matches_from(args).map_err(clap_error)?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let overrides: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|k| sub.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect();
    let cfg = RunConfig::resolve(sub.get_one::<String>("config").map(Path::new), &overrides)?;
    match name {
        "generate" => cmd_generate(&cfg),
        "train" => cmd_train(&cfg, |r| {
            eprintln!(
                "epoch {} train_loss={:.6e} val_loss={:.6e} {:.1}s",
                r.epoch, r.train_loss, r.val_loss, r.wall_seconds
            )
        }),
        "evaluate" => cmd_evaluate(&cfg),
        "gradcheck" => {
            let (rep, paths) = cmd_gradcheck(&cfg)?;
            eprintln!(
                "gradcheck: {} checks passed, worst {:.3e}, {:.1}s",
                rep.results.len(),
                rep.worst(),
                rep.seconds
            );
            Ok(paths)
        }
        "wam-export" => cmd_wam_export(&cfg),
        _ => unreachable!("clap rejects unknown subcommands"),
    }
}

fn clap_error(e: clap::Error) -> Error {
    let msg = e.to_string();
    let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
    match e.kind() {
        ErrorKind::UnknownArgument => {
            let arg = e
                .get(ContextKind::InvalidArg)
                .map_or(first, |v| v.to_string().trim_start_matches('-').to_string());
            Error::UnknownConfigKey(arg)
        }
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            Error::Usage { text: msg, help: true }
        }
        _ => Error::Usage { text: first, help: false },
    }
}

/// One-line, machine-parsable rendering of an error.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("error kind={} msg={}", e.kind(), msg)
}

/// Entry point of the binary: returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(Error::Usage { text, help: true }) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            match e {
                Error::Usage { .. } | Error::UnknownConfigKey(_) => 2,
                _ => 1,
            }
        }
    }
}
