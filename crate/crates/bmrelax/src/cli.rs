//! Command-line surface: `train`, `eval`, and the four diagnostic
//! experiments, with every option settable by flag or by a TOML config file
//! (flags win). Exit codes: 0 success, 1 runtime failure, 2 usage error.
//!
//! The config file mirrors the long flag names as kebab-case keys, e.g.
//!
//! ```toml
//! seed = 7
//! dataset = "synthetic"
//! dx = 16
//! smoothing = "power"
//! beta = 30.0
//! updates = 2000
//! ```
//!
//! Datasets: `synthetic` (mode prototypes + bit-flip noise, the default),
//! `mnist` (IDX files in `--data-dir` or `$BMRELAX_DATA_DIR`, binarized by
//! threshold-free Bernoulli draws), and `binary` (whitespace 0/1 rows from
//! `--data-file`). Stochastic commands require a seed — from the flag or
//! the file — and are bit-reproducible given one.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::Deserialize;

use crate::checkpoint;
use crate::data::{binarize_static, load_binary_rows, load_idx_images, make_synthetic, SyntheticSpec};
use crate::diag::{
    grad_variance_experiment, inverse_cdf_curves, mf_kl_trace, pa_vs_pcd_report,
    write_grad_variance_csv, write_invcdf_csv, write_mf_kl_csv, write_pa_vs_pcd_csv,
};
use crate::error::Error;
use crate::model::{discrete_eval_dataset, train, Arch, ModelConfig, PriorSpec, TrainConfig};
use crate::rbm::RBM;
use crate::rng::{self, purpose};
use crate::samplers::{ais_log_partition, AisConfig, SamplerConfig};
use crate::smoothing::SmoothingKind;

/// Error surface of one command run, split by exit code.
#[derive(Debug)]
enum CmdError {
    /// Bad or missing options → exit 2 with a usage-style message.
    Usage(String),
    /// A real failure while doing the work → exit 1.
    Runtime(Error),
}

impl From<Error> for CmdError {
    fn from(e: Error) -> CmdError {
        CmdError::Runtime(e)
    }
}

type CmdResult<T = ()> = std::result::Result<T, CmdError>;

fn usage(msg: impl Into<String>) -> CmdError {
    CmdError::Usage(msg.into())
}

#[derive(Parser)]
#[command(
    name = "bmrelax",
    version,
    about = "Boltzmann-machine priors with smoothed binary latents: training, evaluation, diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes a metrics CSV and optional checkpoints.
    Train(TrainCmd),
    /// Evaluate a checkpoint: annealed log-partition plus discrete bound.
    Eval(EvalCmd),
    /// Gradient-variance vs corner-distance tradeoff curves.
    DiagGradvar(DiagGradvarCmd),
    /// Exact mean-field KL per sweep on random machines.
    DiagMfkl(DiagMfklCmd),
    /// Deterministic inverse-CDF transition curves.
    DiagInvcdf(DiagInvcdfCmd),
    /// Twin PCD-vs-PA trainings with a per-(sampler, K) eval report.
    DiagPaVsPcd(DiagPaVsPcdCmd),
}

/// Options shared by the training-shaped commands; every field mirrors a
/// config-file key and stays `None` unless given, so file values can fill in.
#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// TOML config file; explicit flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (required for stochastic commands).
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset: synthetic | mnist | binary.
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding MNIST IDX files (or set BMRELAX_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Whitespace 0/1 rows for dataset=binary.
    #[arg(long)]
    data_file: Option<PathBuf>,
    /// Synthetic data: prototype count.
    #[arg(long)]
    modes: Option<usize>,
    /// Synthetic data: visible bits.
    #[arg(long)]
    dx: Option<usize>,
    /// Synthetic data: rows.
    #[arg(long)]
    n: Option<usize>,
    /// Synthetic data: bit-flip probability.
    #[arg(long)]
    noise: Option<f64>,
    /// Prior family: exp | unexp | power | gauss | git.
    #[arg(long)]
    smoothing: Option<String>,
    /// Inverse temperature of the smoothing/prior family.
    #[arg(long)]
    beta: Option<f64>,
    /// Uniform floor of the unexp family.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Latent units on each bipartite side.
    #[arg(long)]
    d1: Option<usize>,
    #[arg(long)]
    d2: Option<usize>,
    /// Hierarchical posterior blocks (must divide D).
    #[arg(long)]
    groups: Option<usize>,
    /// Posterior conditional architecture: linear | mlp.
    #[arg(long)]
    arch: Option<String>,
    /// Hidden width of mlp networks.
    #[arg(long)]
    hidden: Option<usize>,
    /// Decoder architecture: linear | mlp.
    #[arg(long)]
    decoder_arch: Option<String>,
    /// Mean-field sweeps per prior evaluation.
    #[arg(long)]
    mf_iterations: Option<usize>,
    /// Importance samples per datum.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    updates: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    /// Fraction of updates over which the KL warm-up ramps to 1.
    #[arg(long)]
    warmup_frac: Option<f64>,
    /// Negative-phase sampler: pcd | pa.
    #[arg(long)]
    sampler: Option<String>,
    /// PCD persistent chains.
    #[arg(long)]
    chains: Option<usize>,
    /// PCD Gibbs sweeps per update.
    #[arg(long)]
    sweeps: Option<usize>,
    /// PA population size.
    #[arg(long)]
    population: Option<usize>,
    /// PA annealing temperatures per update.
    #[arg(long)]
    pa_temperatures: Option<usize>,
    /// Annealed-importance temperatures for partition estimates.
    #[arg(long)]
    ais_temperatures: Option<usize>,
    /// Annealed-importance samples for partition estimates.
    #[arg(long)]
    ais_samples: Option<usize>,
    /// Cadence of in-training log Z snapshots (0 = never).
    #[arg(long)]
    ais_every: Option<u64>,
    /// Run a final partition estimate after training.
    #[arg(long)]
    final_ais: Option<bool>,
    /// Cadence of the exact mean-field KL diagnostic (0 = never).
    #[arg(long)]
    diag_every: Option<u64>,
    /// Checkpoint path (output for train, input for eval).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Cadence of mid-run checkpoints (0 = final only).
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Metrics CSV path.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Resume training from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

/// The same keys as [`CommonOpts`], as read from a TOML file.
#[derive(Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    dataset: Option<String>,
    data_dir: Option<PathBuf>,
    data_file: Option<PathBuf>,
    modes: Option<usize>,
    dx: Option<usize>,
    n: Option<usize>,
    noise: Option<f64>,
    smoothing: Option<String>,
    beta: Option<f64>,
    epsilon: Option<f64>,
    d1: Option<usize>,
    d2: Option<usize>,
    groups: Option<usize>,
    arch: Option<String>,
    hidden: Option<usize>,
    decoder_arch: Option<String>,
    mf_iterations: Option<usize>,
    k: Option<usize>,
    batch_size: Option<usize>,
    updates: Option<u64>,
    lr: Option<f64>,
    warmup_frac: Option<f64>,
    sampler: Option<String>,
    chains: Option<usize>,
    sweeps: Option<usize>,
    population: Option<usize>,
    pa_temperatures: Option<usize>,
    ais_temperatures: Option<usize>,
    ais_samples: Option<usize>,
    ais_every: Option<u64>,
    final_ais: Option<bool>,
    diag_every: Option<u64>,
    checkpoint: Option<PathBuf>,
    checkpoint_every: Option<u64>,
    metrics: Option<PathBuf>,
    resume: Option<PathBuf>,
}

/// Flag values layered over file values; `get` applies the precedence.
struct Merged {
    opts: CommonOpts,
    file: FileConfig,
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

fn pick_opt<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}

impl Merged {
    fn new(opts: &CommonOpts) -> CmdResult<Merged> {
        let file = match &opts.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    usage(format!("cannot read config file {}: {e}", path.display()))
                })?;
                toml::from_str(&text).map_err(|e| {
                    usage(format!("bad config file {}: {e}", path.display()))
                })?
            }
            None => FileConfig::default(),
        };
        Ok(Merged {
            opts: opts.clone(),
            file,
        })
    }

    fn seed(&self) -> CmdResult<u64> {
        pick_opt(&self.opts.seed, &self.file.seed)
            .ok_or_else(|| usage("--seed is required (on the command line or in the config file)"))
    }

    fn dataset(&self, seed: u64) -> CmdResult<Array2<f64>> {
        let name = pick(&self.opts.dataset, &self.file.dataset, "synthetic".into());
        match name.as_str() {
            "synthetic" => {
                let spec = SyntheticSpec {
                    modes: pick(&self.opts.modes, &self.file.modes, 4),
                    d_x: pick(&self.opts.dx, &self.file.dx, 16),
                    noise: pick(&self.opts.noise, &self.file.noise, 0.1),
                    n: pick(&self.opts.n, &self.file.n, 2000),
                };
                Ok(make_synthetic(&spec, seed)?.data)
            }
            "mnist" => {
                let dir = pick_opt(&self.opts.data_dir, &self.file.data_dir)
                    .or_else(|| std::env::var_os("BMRELAX_DATA_DIR").map(PathBuf::from))
                    .ok_or_else(|| {
                        usage("dataset=mnist needs --data-dir or BMRELAX_DATA_DIR")
                    })?;
                let images = load_idx_images(&dir.join("train-images-idx3-ubyte"))?;
                Ok(binarize_static(&images, seed)?)
            }
            "binary" => {
                let path = pick_opt(&self.opts.data_file, &self.file.data_file)
                    .ok_or_else(|| usage("dataset=binary needs --data-file"))?;
                Ok(load_binary_rows(&path)?)
            }
            other => Err(usage(format!(
                "unknown dataset `{other}` (expected synthetic | mnist | binary)"
            ))),
        }
    }

    fn prior(&self) -> CmdResult<PriorSpec> {
        let name = pick(&self.opts.smoothing, &self.file.smoothing, "power".into());
        let beta = pick_opt(&self.opts.beta, &self.file.beta);
        let epsilon = pick(&self.opts.epsilon, &self.file.epsilon, 0.05);
        Ok(match name.as_str() {
            "exp" => PriorSpec::Overlapping(SmoothingKind::Exponential {
                beta: beta.unwrap_or(10.0),
            }),
            "unexp" => PriorSpec::Overlapping(SmoothingKind::UniformExp {
                beta: beta.unwrap_or(20.0),
                epsilon,
            }),
            "power" => PriorSpec::Overlapping(SmoothingKind::PowerFunction {
                beta: beta.unwrap_or(30.0),
            }),
            "gauss" => PriorSpec::Overlapping(SmoothingKind::Gaussian {
                beta: beta.unwrap_or(30.0),
            }),
            "git" => PriorSpec::Git {
                beta: beta.unwrap_or(20.0),
            },
            other => {
                return Err(usage(format!(
                    "unknown smoothing `{other}` (expected exp | unexp | power | gauss | git)"
                )))
            }
        })
    }

    fn arch_of(&self, flag: &Option<String>, file: &Option<String>) -> CmdResult<Arch> {
        let name = pick(flag, file, "mlp".into());
        match name.as_str() {
            "linear" => Ok(Arch::Linear),
            "mlp" => Ok(Arch::Mlp {
                hidden: pick(&self.opts.hidden, &self.file.hidden, 200),
            }),
            other => Err(usage(format!(
                "unknown architecture `{other}` (expected linear | mlp)"
            ))),
        }
    }

    fn model(&self, d_x: usize) -> CmdResult<ModelConfig> {
        let config = ModelConfig {
            d_x,
            d1: pick(&self.opts.d1, &self.file.d1, 8),
            d2: pick(&self.opts.d2, &self.file.d2, 8),
            groups: pick(&self.opts.groups, &self.file.groups, 2),
            arch: self.arch_of(&self.opts.arch, &self.file.arch)?,
            decoder_arch: self.arch_of(&self.opts.decoder_arch, &self.file.decoder_arch)?,
            prior: self.prior()?,
            mf_iterations: pick(&self.opts.mf_iterations, &self.file.mf_iterations, 5),
        };
        config.validate()?;
        Ok(config)
    }

    fn sampler(&self) -> CmdResult<SamplerConfig> {
        let name = pick(&self.opts.sampler, &self.file.sampler, "pcd".into());
        match name.as_str() {
            "pcd" => Ok(SamplerConfig::pcd(
                pick(&self.opts.chains, &self.file.chains, 100),
                pick(&self.opts.sweeps, &self.file.sweeps, 1),
            )),
            "pa" => Ok(SamplerConfig::pa(
                pick(&self.opts.population, &self.file.population, 1000),
                pick(&self.opts.pa_temperatures, &self.file.pa_temperatures, 40),
            )),
            other => Err(usage(format!(
                "unknown sampler `{other}` (expected pcd | pa)"
            ))),
        }
    }

    fn ais(&self) -> AisConfig {
        AisConfig::linear(
            pick(&self.opts.ais_temperatures, &self.file.ais_temperatures, 1000),
            pick(&self.opts.ais_samples, &self.file.ais_samples, 100),
        )
    }

    fn train_config(&self, model: ModelConfig, seed: u64) -> CmdResult<TrainConfig> {
        let mut config = TrainConfig::new(model, seed);
        config.updates = pick(&self.opts.updates, &self.file.updates, config.updates);
        config.batch_size = pick(&self.opts.batch_size, &self.file.batch_size, config.batch_size);
        config.k = pick(&self.opts.k, &self.file.k, config.k);
        config.lr = pick(&self.opts.lr, &self.file.lr, config.lr);
        config.warmup_frac = pick(&self.opts.warmup_frac, &self.file.warmup_frac, config.warmup_frac);
        config.sampler = self.sampler()?;
        config.ais = self.ais();
        config.ais_every = pick(&self.opts.ais_every, &self.file.ais_every, config.ais_every);
        config.final_ais = pick(&self.opts.final_ais, &self.file.final_ais, config.final_ais);
        config.diag_every = pick(&self.opts.diag_every, &self.file.diag_every, config.diag_every);
        config.checkpoint_every = pick(
            &self.opts.checkpoint_every,
            &self.file.checkpoint_every,
            config.checkpoint_every,
        );
        config.checkpoint_path = pick_opt(&self.opts.checkpoint, &self.file.checkpoint);
        config.metrics_path = pick_opt(&self.opts.metrics, &self.file.metrics);
        config.resume_from = pick_opt(&self.opts.resume, &self.file.resume);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct EvalCmd {
    #[command(flatten)]
    common: CommonOpts,
    /// Write the eval numbers to this CSV as metric,value rows.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagGradvarCmd {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// ρ draws per family (at least 10^4).
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Fixed mixture weight q.
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Restrict to one family (exp | unexp | power | gauss); default runs
    /// the full tradeoff grids (exponential 8..15, power 10,20,..,80).
    #[arg(long)]
    smoothing: Option<String>,
    /// Comma-separated β list for --smoothing.
    #[arg(long)]
    beta_list: Option<String>,
    /// Uniform floor for unexp.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Output CSV path.
    #[arg(long, default_value = "gradvar.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct DiagMfklCmd {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Bipartite sides of the random machine (D = d1 + d2 ≤ 20).
    #[arg(long, default_value_t = 8)]
    d1: usize,
    #[arg(long, default_value_t = 8)]
    d2: usize,
    /// Bias scale of the random machine.
    #[arg(long, default_value_t = 0.5)]
    a_scale: f64,
    /// Coupling scale of the random machine.
    #[arg(long, default_value_t = 0.5)]
    w_scale: f64,
    /// Smoothing family of the relaxation.
    #[arg(long, default_value = "power")]
    smoothing: String,
    /// Comma-separated β list.
    #[arg(long, default_value = "15,20,30,40")]
    beta_list: String,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// ζ draws per β.
    #[arg(long, default_value_t = 20)]
    n_zeta: usize,
    /// Mean-field sweeps per fit.
    #[arg(long, default_value_t = 10)]
    sweeps: usize,
    /// Output CSV path.
    #[arg(long, default_value = "mfkl.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct DiagInvcdfCmd {
    /// Fixed mixture weight q.
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Interior ρ grid points.
    #[arg(long, default_value_t = 199)]
    points: usize,
    /// Smoothing family of the curves.
    #[arg(long, default_value = "exp")]
    smoothing: String,
    /// Comma-separated β list.
    #[arg(long, default_value = "8,16,32")]
    beta_list: String,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Output CSV path.
    #[arg(long, default_value = "invcdf.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct DiagPaVsPcdCmd {
    #[command(flatten)]
    common: CommonOpts,
    /// Comma-separated training-K values, one twin pair per entry.
    #[arg(long, default_value = "1,5,25")]
    ks: String,
    /// Held-out rows evaluated (taken from the head of the dataset).
    #[arg(long, default_value_t = 200)]
    eval_rows: usize,
    /// Importance samples per evaluated row.
    #[arg(long, default_value_t = 1000)]
    eval_k: usize,
    /// Output CSV path.
    #[arg(long, default_value = "pa_vs_pcd.csv")]
    out: PathBuf,
}

fn parse_f64_list(text: &str) -> CmdResult<Vec<f64>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(
            part.parse::<f64>()
                .map_err(|_| usage(format!("`{part}` is not a number in list `{text}`")))?,
        );
    }
    if out.is_empty() {
        return Err(usage(format!("empty number list `{text}`")));
    }
    Ok(out)
}

fn parse_usize_list(text: &str) -> CmdResult<Vec<usize>> {
    parse_f64_list(text)?
        .into_iter()
        .map(|v| {
            if v.fract() == 0.0 && v >= 1.0 {
                Ok(v as usize)
            } else {
                Err(usage(format!("`{v}` is not a positive integer")))
            }
        })
        .collect()
}

fn kinds_for(name: &str, betas: &[f64], epsilon: f64) -> CmdResult<Vec<SmoothingKind>> {
    betas
        .iter()
        .map(|&beta| match name {
            "exp" => Ok(SmoothingKind::Exponential { beta }),
            "unexp" => Ok(SmoothingKind::UniformExp { beta, epsilon }),
            "power" => Ok(SmoothingKind::PowerFunction { beta }),
            "gauss" => Ok(SmoothingKind::Gaussian { beta }),
            other => Err(usage(format!(
                "unknown smoothing `{other}` (expected exp | unexp | power | gauss)"
            ))),
        })
        .collect()
}

fn cmd_train(cmd: &TrainCmd) -> CmdResult {
    let m = Merged::new(&cmd.common)?;
    let seed = m.seed()?;
    let data = m.dataset(seed)?;
    let model = m.model(data.ncols())?;
    let config = m.train_config(model, seed)?;
    let report = train(&config, &data)?;
    println!(
        "trained {} updates on {} rows (d_x={}, D={}, groups={}, prior={}, sampler={})",
        report.state.updates_done,
        data.nrows(),
        config.model.d_x,
        config.model.d(),
        config.model.groups,
        match config.model.prior {
            PriorSpec::Overlapping(kind) => format!("{}(beta={})", kind.name(), kind.beta()),
            PriorSpec::Git { beta } => format!("git(beta={beta})"),
        },
        match config.sampler.kind {
            crate::samplers::SamplerKind::Pcd => "pcd",
            crate::samplers::SamplerKind::Pa => "pa",
        },
    );
    if let Some(last) = report.rows.last() {
        println!(
            "final bound: {:.4}   gradient norm: {:.4}   skipped updates: {}",
            last.bound, last.grad_norm, report.state.nan_skips
        );
    }
    if let Some(log_z) = report.final_log_z {
        println!("log Z (annealed importance): {log_z:.4}");
    }
    if let Some(path) = &config.metrics_path {
        println!("metrics: {}", path.display());
    }
    if let Some(path) = &config.checkpoint_path {
        println!("checkpoint: {}", path.display());
    }
    Ok(())
}

fn cmd_eval(cmd: &EvalCmd) -> CmdResult {
    let m = Merged::new(&cmd.common)?;
    let seed = m.seed()?;
    let ckpt_path = pick_opt(&m.opts.checkpoint, &m.file.checkpoint)
        .ok_or_else(|| usage("eval needs --checkpoint"))?;
    let loaded = checkpoint::load_model(&ckpt_path)?;
    let state = loaded.state;
    let data = m.dataset(seed)?;
    if data.ncols() != state.config.d_x {
        return Err(CmdError::Runtime(Error::DimMismatch {
            context: "eval dataset vs checkpoint",
            expected: state.config.d_x,
            found: data.ncols(),
        }));
    }
    let k = pick(&m.opts.k, &m.file.k, 4000);
    let ais = m.ais();
    // Top of the valid index range: far above any training-loop AIS snapshot
    // index, so an eval under the training seed still gets its own stream.
    let mut arng = rng::stream(seed, purpose::AIS, (1 << 40) - 1);
    let outcome = ais_log_partition(&state.rbm, &ais, &mut arng)?;
    let eval_ll = discrete_eval_dataset(&state, &data, k, Some(outcome.log_z), seed)?;
    println!(
        "log Z = {:.4} ± {:.4}  ({} temperatures x {} samples)",
        outcome.log_z,
        outcome.std_error,
        ais.schedule.len(),
        ais.num_samples
    );
    println!(
        "discrete IW bound (K={k}): {:.4} nats/datum over {} rows",
        eval_ll,
        data.nrows()
    );
    if let Some(out) = &cmd.out {
        let text = format!(
            "metric,value\nlogz,{}\nlogz_stderr,{}\neval_ll,{}\nk,{k}\nrows,{}\n",
            outcome.log_z,
            outcome.std_error,
            eval_ll,
            data.nrows()
        );
        std::fs::write(out, text).map_err(Error::from)?;
        println!("csv: {}", out.display());
    }
    Ok(())
}

fn cmd_gradvar(cmd: &DiagGradvarCmd) -> CmdResult {
    let seed = cmd
        .seed
        .ok_or_else(|| usage("--seed is required for diag-gradvar"))?;
    let kinds = match (&cmd.smoothing, &cmd.beta_list) {
        (Some(name), Some(list)) => kinds_for(name, &parse_f64_list(list)?, cmd.epsilon)?,
        (Some(name), None) => {
            return Err(usage(format!(
                "--smoothing {name} needs --beta-list (or drop both for the default grids)"
            )))
        }
        (None, _) => {
            // The published tradeoff grids.
            let mut kinds: Vec<SmoothingKind> = (8..=15)
                .map(|b| SmoothingKind::Exponential { beta: b as f64 })
                .collect();
            kinds.extend((1..=8).map(|i| SmoothingKind::PowerFunction {
                beta: (10 * i) as f64,
            }));
            kinds
        }
    };
    let rows = grad_variance_experiment(&kinds, cmd.q, cmd.samples, seed)?;
    write_grad_variance_csv(&cmd.out, &rows)?;
    println!(
        "gradient-variance tradeoff over {} families, {} draws each at q={}",
        rows.len(),
        cmd.samples,
        cmd.q
    );
    for r in &rows {
        println!(
            "  {}(beta={}) : mean |zeta - z| = {:.4}, Var[dzeta/dq] = {:.4}",
            r.kind, r.beta, r.mean_abs_dist, r.grad_variance
        );
    }
    println!("csv: {}", cmd.out.display());
    Ok(())
}

fn cmd_mfkl(cmd: &DiagMfklCmd) -> CmdResult {
    let seed = cmd
        .seed
        .ok_or_else(|| usage("--seed is required for diag-mfkl"))?;
    let betas = parse_f64_list(&cmd.beta_list)?;
    let kinds = kinds_for(&cmd.smoothing, &betas, cmd.epsilon)?;
    let mut r = rng::stream(seed, purpose::INIT, 0);
    let rbm = RBM::random_bipartite(cmd.d1, cmd.d2, cmd.a_scale, cmd.w_scale, &mut r);
    let rows = mf_kl_trace(&rbm, &kinds, cmd.n_zeta, cmd.sweeps, seed)?;
    write_mf_kl_csv(&cmd.out, &rows)?;
    println!(
        "mean-field KL traces on a random {}x{} machine (a_scale={}, w_scale={})",
        cmd.d1, cmd.d2, cmd.a_scale, cmd.w_scale
    );
    for kind in &kinds {
        let beta = kind.beta();
        let mut finals: Vec<f64> = rows
            .iter()
            .filter(|r| r.beta == beta && r.sweep == cmd.sweeps)
            .map(|r| r.kl)
            .collect();
        finals.sort_by(f64::total_cmp);
        let median = finals[finals.len() / 2];
        println!("  beta={beta}: median KL after {} sweeps = {median:.4}", cmd.sweeps);
    }
    println!("csv: {}", cmd.out.display());
    Ok(())
}

fn cmd_invcdf(cmd: &DiagInvcdfCmd) -> CmdResult {
    let betas = parse_f64_list(&cmd.beta_list)?;
    let kinds = kinds_for(&cmd.smoothing, &betas, cmd.epsilon)?;
    let rows = inverse_cdf_curves(&kinds, cmd.q, cmd.points)?;
    write_invcdf_csv(&cmd.out, &rows)?;
    println!(
        "inverse-CDF curves at q={} over {} interior rho points",
        cmd.q, cmd.points
    );
    for kind in &kinds {
        let beta = kind.beta();
        let mid = rows
            .iter()
            .filter(|r| r.beta == beta)
            .min_by(|a, b| {
                (a.rho - 0.5).abs().total_cmp(&(b.rho - 0.5).abs())
            })
            .expect("at least one grid point");
        println!(
            "  {}(beta={beta}): dzeta/dq at rho={:.3} is {:.4}",
            kind.name(),
            mid.rho,
            mid.dzeta_dq
        );
    }
    println!("csv: {}", cmd.out.display());
    Ok(())
}

fn cmd_pa_vs_pcd(cmd: &DiagPaVsPcdCmd) -> CmdResult {
    let m = Merged::new(&cmd.common)?;
    let seed = m.seed()?;
    let data = m.dataset(seed)?;
    let model = m.model(data.ncols())?;
    let mut base = m.train_config(model, seed)?;
    base.final_ais = true;
    let ks = parse_usize_list(&cmd.ks)?;
    let eval_rows = cmd.eval_rows.min(data.nrows());
    let eval_data = data.slice(ndarray::s![0..eval_rows, ..]).to_owned();
    let pcd = SamplerConfig::pcd(
        pick(&m.opts.chains, &m.file.chains, 100),
        pick(&m.opts.sweeps, &m.file.sweeps, 1),
    );
    let pa = SamplerConfig::pa(
        pick(&m.opts.population, &m.file.population, 1000),
        pick(&m.opts.pa_temperatures, &m.file.pa_temperatures, 40),
    );
    let rows = pa_vs_pcd_report(&base, &ks, pcd, pa, &data, &eval_data, cmd.eval_k)?;
    write_pa_vs_pcd_csv(&cmd.out, &rows)?;
    println!(
        "twin trainings per K ({} updates each), discrete eval over {} rows at K={}",
        base.updates, eval_rows, cmd.eval_k
    );
    println!("  {:<8} {:>4} {:>12} {:>10}", "sampler", "K", "eval_ll", "logZ");
    for r in &rows {
        println!(
            "  {:<8} {:>4} {:>12.4} {:>10.4}",
            r.sampler, r.k, r.eval_ll, r.log_z
        );
    }
    println!("csv: {}", cmd.out.display());
    Ok(())
}

/// Parse argv and run one command; returns the process exit code.
pub fn run(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(cmd) => cmd_train(cmd),
        Command::Eval(cmd) => cmd_eval(cmd),
        Command::DiagGradvar(cmd) => cmd_gradvar(cmd),
        Command::DiagMfkl(cmd) => cmd_mfkl(cmd),
        Command::DiagInvcdf(cmd) => cmd_invcdf(cmd),
        Command::DiagPaVsPcd(cmd) => cmd_pa_vs_pcd(cmd),
    };
    match result {
        Ok(()) => 0,
        Err(CmdError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(CmdError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
