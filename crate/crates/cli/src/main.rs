mod output;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neurop_core::capacity::{self, CountKind};
use neurop_core::fixed_point::{iterate_to_fixed_point, FixedPointReport};
use neurop_core::multiscale::{self, MultiScalePlan, Strategy};
use neurop_core::operator_net::{random_dense_net, Activation, Layer, OperatorNet};
use neurop_core::parallel_bench::{self, AmdahlModel, SpeedupLimit};
use neurop_core::training::{self, AntiderivativeTask, TrainConfig};
use neurop_core::transforms::WaveletFamily;
use neurop_core::{Error, GridFunction, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use output::{fmt_f, fmt_opt, load_config, CmdResult, Failure, RunDir};

#[derive(Parser)]
#[command(name = "neurop", version, about = "Certified operator-network experiments")]
struct Cli {
    /// Seed for every random draw in the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for CSV outputs and the run manifest.
    #[arg(long, global = true, default_value = "neurop-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer Lipschitz constants and the composed bound of a net.
    Certify {
        #[arg(long)]
        net: PathBuf,
        /// Also write the net normalized to this contraction constant.
        #[arg(long)]
        q: Option<f64>,
    },
    /// Banach iteration of a (normalized) net from a seeded or given start.
    Fixpoint {
        #[arg(long)]
        net: PathBuf,
        /// Normalize to this contraction constant before iterating.
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        /// JSON array with the starting grid function.
        #[arg(long)]
        u0: Option<PathBuf>,
        /// Grid size, needed only when no layer fixes it.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Error-versus-budget curves for the three approximation strategies.
    Approx {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Linear-region counts against the depth/width lower bound.
    Regions {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Training runs on the antiderivative task, one per seed.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Amdahl speedup table.
    Amdahl {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.9, 0.95, 0.99, 1.0])]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 4.0, 8.0, 16.0, 64.0, 1024.0])]
        n: Vec<f64>,
    },
    /// Measured batched-convolution speedups and runtime scaling.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Quick run of the invariant checks; exit 0 iff all hold.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(cli: &Cli) -> CmdResult<()> {
    match &cli.command {
        Command::Certify { net, q } => certify(cli, net, *q),
        Command::Fixpoint { net, q, eps, max_iter, u0, dim } => {
            fixpoint(cli, net, *q, *eps, *max_iter, u0.as_deref(), *dim)
        }
        Command::Approx { config } => approx(cli, load_config(config.as_deref())?),
        Command::Regions { config } => regions(cli, load_config(config.as_deref())?),
        Command::Train { config } => train(cli, load_config(config.as_deref())?),
        Command::Amdahl { p, n } => amdahl(cli, p, n),
        Command::Bench { config } => bench(cli, load_config(config.as_deref())?),
        Command::Selftest => {
            let mut dir = RunDir::create(&cli.out, "selftest", cli.seed, &serde_json::json!({}))?;
            let outcome = selftest::run(&mut dir, cli.seed);
            dir.finish(&outcome)?;
            outcome
        }
    }
}

/// Runs `body` against a fresh run directory and always writes the manifest.
fn with_run_dir(
    cli: &Cli,
    name: &'static str,
    config: &impl Serialize,
    body: impl FnOnce(&mut RunDir) -> CmdResult<()>,
) -> CmdResult<()> {
    let mut dir = RunDir::create(&cli.out, name, cli.seed, config)?;
    let outcome = body(&mut dir);
    dir.finish(&outcome)?;
    outcome
}

fn read_net(path: &Path) -> CmdResult<OperatorNet> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    OperatorNet::from_json(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn layer_kind(layer: &Layer) -> &'static str {
    match layer {
        Layer::Dense { .. } => "dense",
        Layer::SpectralMultiplier { .. } => "spectral_multiplier",
        Layer::WaveletGain { .. } => "wavelet_gain",
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
        Activation::Sigmoid => "sigmoid",
        Activation::Identity => "identity",
    }
}

fn certify(cli: &Cli, net_path: &Path, q: Option<f64>) -> CmdResult<()> {
    let net = read_net(net_path)?;
    let config = serde_json::json!({ "net": net_path, "q": q });
    with_run_dir(cli, "certify", &config, |dir| {
        let cert = net.certify_lipschitz()?;
        let rows: Vec<Vec<String>> = net
            .layers()
            .iter()
            .zip(&cert.per_layer_lipschitz)
            .zip(&cert.activation_lipschitz)
            .enumerate()
            .map(|(i, ((layer, l), s))| {
                println!("layer {i}: {} {} lipschitz {l}", layer_kind(&layer.layer), activation_name(layer.activation));
                vec![i.to_string(), layer_kind(&layer.layer).into(), activation_name(layer.activation).into(), fmt_f(*l), fmt_f(*s)]
            })
            .collect();
        dir.csv("certify.csv", &["layer", "kind", "activation", "layer_lipschitz", "activation_lipschitz"], rows)?;
        println!("bound {}", cert.bound);
        let mut summary = vec![vec!["original".to_string(), fmt_f(cert.bound), cert.is_contraction().to_string()]];
        if let Some(q) = q {
            let normalized = net.normalize_to_contraction(q)?;
            let nb = normalized.certify_lipschitz()?.bound;
            println!("normalized to q={q}: bound {nb}");
            dir.file("normalized_net.json", &normalized.to_json())?;
            summary.push(vec!["normalized".to_string(), fmt_f(nb), (nb < 1.0).to_string()]);
        }
        dir.csv("certificate.csv", &["net", "bound", "is_contraction"], summary)
    })
}

fn fixpoint(cli: &Cli, net_path: &Path, q: Option<f64>, eps: f64, max_iter: usize, u0_path: Option<&Path>, dim: Option<usize>) -> CmdResult<()> {
    let mut net = read_net(net_path)?;
    if let Some(q) = q {
        net = net.normalize_to_contraction(q)?;
    }
    let u0 = match u0_path {
        Some(p) => {
            let values: Vec<f64> = load_config::<Vec<f64>>(Some(p))?;
            Vector::new(values)?
        }
        None => {
            let n = net
                .input_dim()
                .or(dim)
                .ok_or_else(|| Failure::Validation("net does not fix its grid size; pass --dim".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            Vector::from_fn(n, |_| rng.gen_range(-1.0..1.0))
        }
    };
    let config = serde_json::json!({ "net": net_path, "q": q, "eps": eps, "max_iter": max_iter, "u0": u0_path, "dim": dim });
    with_run_dir(cli, "fixpoint", &config, |dir| {
        let (report, failure) = match iterate_to_fixed_point(&net, &u0, eps, max_iter) {
            Ok(r) => (r, None),
            Err(Error::FixedPointNotConverged(r)) => {
                let msg = format!("fixed-point iteration did not converge after {} iterations", r.iterations_run);
                (*r, Some(Failure::Numerical(msg)))
            }
            Err(e) => return Err(e.into()),
        };
        write_fixpoint(dir, &report, eps)?;
        println!(
            "iterations {} predicted {} empirical q {} certified q {}",
            report.iterations_run, report.predicted_n, report.empirical_q, report.certified_q
        );
        failure.map_or(Ok(()), Err)
    })
}

fn write_fixpoint(dir: &mut RunDir, r: &FixedPointReport, eps: f64) -> CmdResult<()> {
    let e0 = r.error_trace[0];
    let trace = r
        .error_trace
        .iter()
        .enumerate()
        .map(|(n, e)| vec![n.to_string(), fmt_f(*e), fmt_f(r.certified_q.powi(n as i32) * e0)]);
    dir.csv("trace.csv", &["n", "error", "envelope"], trace)?;
    dir.csv(
        "summary.csv",
        &["iterations_run", "predicted_n", "empirical_q", "certified_q", "initial_error", "eps"],
        [vec![
            r.iterations_run.to_string(),
            r.predicted_n.to_string(),
            fmt_f(r.empirical_q),
            fmt_f(r.certified_q),
            fmt_f(e0),
            fmt_f(eps),
        ]],
    )?;
    let fp = r.fixed_point.iter().enumerate().map(|(i, v)| vec![i.to_string(), fmt_f(*v)]);
    dir.csv("fixed_point.csv", &["i", "value"], fp)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Signal {
    /// `sin 2πx` plus a Gaussian bump; a missing center is drawn from the seed.
    SmoothPlusSpike {
        center: Option<f64>,
        width_cells: f64,
        amp: f64,
    },
    /// `1 / (a − cos 2πx)`, `a > 1`.
    Analytic { a: f64 },
    /// Fourier modes with magnitude `k^{-s}` and seeded random phases.
    PowerLaw { s: f64 },
    Values { data: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ApproxConfig {
    n: usize,
    signal: Signal,
    budgets: Vec<usize>,
    family: WaveletFamily,
    strategies: Vec<Strategy>,
    fourier_cutoff: Option<usize>,
    min_detail_level: Option<usize>,
    levels: Option<usize>,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            n: 1024,
            signal: Signal::SmoothPlusSpike { center: None, width_cells: 3.0, amp: 1.0 },
            budgets: vec![8, 16, 32, 64],
            family: WaveletFamily::Daubechies4,
            strategies: vec![Strategy::FourierOnly, Strategy::WaveletOnly, Strategy::Combined],
            fourier_cutoff: None,
            min_detail_level: None,
            levels: None,
        }
    }
}

fn build_signal(cfg: &mut ApproxConfig, seed: u64) -> CmdResult<GridFunction> {
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = match &mut cfg.signal {
        Signal::SmoothPlusSpike { center, width_cells, amp } => {
            let c = *center.get_or_insert_with(|| rng.gen_range(0.0..1.0));
            multiscale::smooth_plus_spike(n, c, *width_cells, *amp)?
        }
        Signal::Analytic { a } => {
            if !(*a > 1.0) {
                return Err(Failure::Validation("analytic signal needs a > 1".into()));
            }
            let a = *a;
            multiscale::sample(n, |x| 1.0 / (a - (2.0 * std::f64::consts::PI * x).cos()))?
        }
        Signal::PowerLaw { s } => {
            let mut c = vec![0.0; n];
            for k in 1..n / 2 {
                let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                let mag = (k as f64).powf(-*s);
                c[2 * k - 1] = mag * phase.cos();
                c[2 * k] = mag * phase.sin();
            }
            Vector::new(multiscale::fourier_synthesis(&c)?)?
        }
        Signal::Values { data } => {
            if data.len() != n {
                return Err(Failure::Validation(format!("signal has {} values but n = {n}", data.len())));
            }
            Vector::new(data.clone())?
        }
    };
    Ok(f)
}

fn approx(cli: &Cli, mut cfg: ApproxConfig) -> CmdResult<()> {
    let f = build_signal(&mut cfg, cli.seed)?;
    let mut base = MultiScalePlan::full(cfg.n, 0, cfg.family);
    if let Some(c) = cfg.fourier_cutoff {
        base.fourier_cutoff = c;
    }
    if let Some(m) = cfg.min_detail_level {
        base.min_detail_level = m;
    }
    if let Some(l) = cfg.levels {
        base.levels = l;
    }
    with_run_dir(cli, "approx", &cfg, |dir| {
        let mut rows = Vec::new();
        for &strategy in &cfg.strategies {
            for (budget, r) in multiscale::error_vs_budget_curve(&f, &base, &cfg.budgets, strategy)? {
                rows.push(vec![
                    budget.to_string(),
                    strategy.name().to_string(),
                    fmt_f(r.l2_error),
                    fmt_opt(r.decay_exponent_fourier),
                    fmt_opt(r.decay_exponent_wavelet),
                    r.fourier_terms.to_string(),
                    r.wavelet_terms.to_string(),
                ]);
            }
        }
        dir.csv(
            "approx.csv",
            &["budget", "strategy", "l2_error", "decay_exponent", "decay_exponent_wavelet", "fourier_terms", "wavelet_terms"],
            rows,
        )
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Construction {
    /// Zigzag folding net on [0, 1] with a small seeded perturbation (1D only).
    Sawtooth,
    /// Lines tangent to a small circle, one hidden layer (2D only).
    TangentLines,
    /// Dense ReLU net with seeded uniform weights.
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RegionsConfig {
    input_dim: usize,
    widths: Vec<usize>,
    depths: Vec<usize>,
    seeds: u64,
    construction: Construction,
    perturbation: f64,
    domain: [f64; 2],
    grid: usize,
    max_breakpoints: usize,
}

impl Default for RegionsConfig {
    fn default() -> Self {
        RegionsConfig {
            input_dim: 1,
            widths: (1..=6).collect(),
            depths: (1..=4).collect(),
            seeds: 10,
            construction: Construction::Sawtooth,
            perturbation: 1e-6,
            domain: [0.0, 1.0],
            grid: 512,
            max_breakpoints: 1_000_000,
        }
    }
}

fn regions(cli: &Cli, cfg: RegionsConfig) -> CmdResult<()> {
    let ok = matches!(
        (cfg.input_dim, cfg.construction),
        (1, Construction::Sawtooth | Construction::Random) | (2, Construction::TangentLines | Construction::Random)
    );
    if !ok {
        return Err(Failure::Validation(format!(
            "construction {:?} is not available for input_dim {}",
            cfg.construction, cfg.input_dim
        )));
    }
    if cfg.construction == Construction::TangentLines && cfg.depths.iter().any(|&d| d != 1) {
        return Err(Failure::Validation("tangent_lines nets have depth 1".into()));
    }
    with_run_dir(cli, "regions", &cfg, |dir| {
        let [a, b] = cfg.domain;
        let mut rows = Vec::new();
        for &width in &cfg.widths {
            for &depth in &cfg.depths {
                for s in 0..cfg.seeds {
                    let seed = cli.seed.wrapping_mul(1_000_003).wrapping_add(s);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let net = match cfg.construction {
                        Construction::Sawtooth => capacity::sawtooth_net(width, depth, cfg.perturbation, &mut rng)?,
                        Construction::TangentLines => capacity::tangent_lines_net(width, 0.2, 0.05, &mut rng)?,
                        Construction::Random => {
                            let mut widths = vec![cfg.input_dim];
                            widths.extend(std::iter::repeat(width).take(depth));
                            widths.push(1);
                            random_dense_net(&widths, Activation::Relu, Activation::Identity, 1.5, 1.0, &mut rng)?
                        }
                    };
                    let count = if cfg.input_dim == 1 {
                        capacity::count_regions_1d(&net, a, b, cfg.max_breakpoints)?
                    } else {
                        capacity::count_regions_grid(&net, a, b, cfg.grid)?
                    };
                    let kind = match count.kind {
                        CountKind::Exact => "exact",
                        CountKind::LowerEstimate => "lower_estimate",
                    };
                    rows.push(vec![
                        cfg.input_dim.to_string(),
                        width.to_string(),
                        depth.to_string(),
                        seed.to_string(),
                        count.count.to_string(),
                        count.montufar_bound.map(|m| m.to_string()).unwrap_or_default(),
                        kind.to_string(),
                    ]);
                }
            }
        }
        dir.csv("regions.csv", &["input_dim", "width", "depth", "seed", "count", "montufar_bound", "kind"], rows)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Task {
    Antiderivative(AntiderivativeTask),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainCliConfig {
    task: Task,
    widths: Vec<usize>,
    epochs: usize,
    lr: f64,
    lambda_wd: f64,
    dropout_p: f64,
    batch_size: usize,
    /// Seeds to run; empty means the global `--seed` alone.
    seeds: Vec<u64>,
    renormalize_q: Option<f64>,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        TrainCliConfig {
            task: Task::Antiderivative(AntiderivativeTask::default()),
            widths: vec![64, 64, 64],
            epochs: 100,
            lr: 0.1,
            lambda_wd: 0.0,
            dropout_p: 0.0,
            batch_size: 50,
            seeds: Vec::new(),
            renormalize_q: None,
        }
    }
}

fn train(cli: &Cli, mut cfg: TrainCliConfig) -> CmdResult<()> {
    if cfg.seeds.is_empty() {
        cfg.seeds.push(cli.seed);
    }
    let Task::Antiderivative(task) = cfg.task.clone();
    task.validate()?;
    with_run_dir(cli, "train", &cfg, |dir| {
        let mut epochs = Vec::new();
        let mut summary = Vec::new();
        let mut failure = None;
        for &seed in &cfg.seeds {
            let tc = TrainConfig {
                epochs: cfg.epochs,
                learning_rate: cfg.lr,
                lambda_wd: cfg.lambda_wd,
                dropout_p: cfg.dropout_p,
                batch_size: cfg.batch_size,
                seed,
                renormalize_q: cfg.renormalize_q,
            };
            let report = match training::run_experiment(&task, &cfg.widths, &tc) {
                Ok(r) => r,
                Err(Error::TrainingDiverged { epoch, report }) => {
                    failure = Some(Failure::Numerical(format!("seed {seed}: training diverged at epoch {epoch}")));
                    *report
                }
                Err(e) => return Err(e.into()),
            };
            for (e, (tr, te)) in report.train_loss_curve.iter().zip(&report.test_loss_curve).enumerate() {
                epochs.push(vec![
                    seed.to_string(),
                    e.to_string(),
                    fmt_f(*tr),
                    fmt_f(*te),
                    fmt_opt(report.cert_bounds.get(e).copied()),
                ]);
            }
            summary.push(vec![
                seed.to_string(),
                fmt_opt(report.train_loss_curve.last().copied()),
                fmt_opt(report.test_loss_curve.last().copied()),
                fmt_f(report.final_gap),
            ]);
            println!("seed {seed}: final gap {}", report.final_gap);
            if failure.is_some() {
                break;
            }
        }
        dir.csv("train_epochs.csv", &["seed", "epoch", "train_loss", "test_loss", "cert_bound"], epochs)?;
        dir.csv("train_summary.csv", &["seed", "final_train_loss", "final_test_loss", "final_gap"], summary)?;
        failure.map_or(Ok(()), Err)
    })
}

fn amdahl(cli: &Cli, ps: &[f64], ns: &[f64]) -> CmdResult<()> {
    let config = serde_json::json!({ "p": ps, "n": ns });
    with_run_dir(cli, "amdahl", &config, |dir| {
        let mut rows = Vec::new();
        for &p in ps {
            let limit = match parallel_bench::amdahl_limit(p)? {
                SpeedupLimit::Bounded(v) => fmt_f(v),
                SpeedupLimit::Unbounded => "inf".to_string(),
            };
            for &n in ns {
                let s = parallel_bench::amdahl_speedup(&AmdahlModel::new(p, n)?);
                rows.push(vec![fmt_f(p), fmt_f(n), fmt_f(s), limit.clone()]);
            }
        }
        dir.csv("amdahl.csv", &["p", "n", "speedup", "limit"], rows)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BenchConfig {
    batch: usize,
    n: usize,
    workers: Vec<usize>,
    repeats: usize,
    /// Sizes for the direct-versus-FFT runtime study; empty skips it.
    sizes: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            batch: 512,
            n: 1 << 14,
            workers: vec![1, 2, 4],
            repeats: 5,
            sizes: (10..=14).map(|k| 1 << k).collect(),
        }
    }
}

fn bench(cli: &Cli, cfg: BenchConfig) -> CmdResult<()> {
    if !cfg.n.is_power_of_two() {
        return Err(Failure::Validation(format!("grid size {} is not a power of two", cfg.n)));
    }
    with_run_dir(cli, "bench", &cfg, |dir| {
        let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
        let batch: Vec<GridFunction> = (0..cfg.batch)
            .map(|_| Vector::from_fn(cfg.n, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let filter: Vec<f64> = (0..cfg.n).map(|i| (-(i as f64) / 64.0).exp()).collect();
        let recs = parallel_bench::bench_batched_conv(&batch, &filter, &cfg.workers, cfg.repeats)?;
        let rows = recs.iter().map(|r| {
            println!("workers {}: {:.4}s speedup {:.3} (model {:.3})", r.workers, r.wall_time, r.speedup_measured, r.speedup_predicted);
            vec![r.workers.to_string(), fmt_f(r.wall_time), fmt_f(r.speedup_measured), fmt_f(r.speedup_predicted), fmt_f(r.fitted_p)]
        });
        dir.csv("bench.csv", &["workers", "wall_time_s", "speedup_measured", "speedup_predicted", "fitted_P"], rows.collect::<Vec<_>>())?;
        if !cfg.sizes.is_empty() {
            let study = parallel_bench::scaling_study(&cfg.sizes, cfg.repeats)?;
            let rows = study.rows.iter().map(|r| vec![r.n.to_string(), fmt_f(r.t_direct), fmt_f(r.t_fft)]);
            dir.csv("scaling.csv", &["N", "t_direct_s", "t_fft_s"], rows.collect::<Vec<_>>())?;
            dir.csv("scaling_fit.csv", &["slope_direct", "slope_fft"], [vec![fmt_f(study.slope_direct), fmt_f(study.slope_fft)]])?;
            println!("log-log slopes: direct {:.3}, fft {:.3}", study.slope_direct, study.slope_fft);
        }
        Ok(())
    })
}
