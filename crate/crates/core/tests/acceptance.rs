//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails, except the measured-speedup part of
//! criterion 7 on machines with fewer than 4 hardware threads, where it is
//! reported but cannot be meaningful.

use std::f64::consts::PI;
use std::time::Instant;

use neurop_core::capacity::{arrangement_regions_2d, count_regions_1d, count_regions_grid, montufar_lower_bound, sawtooth_net, tangent_lines_net};
use neurop_core::fixed_point::{iterate_to_fixed_point, predict_iterations, verify_exponential_bound};
use neurop_core::linalg::{Mat, Vector};
use neurop_core::multiscale::{approximate, decay_exponent, error_vs_budget_curve, fourier_coefficients, fourier_mode_magnitudes, fourier_synthesis, sample, smooth_plus_spike, MultiScalePlan, Strategy};
use neurop_core::operator_net::{random_dense_net, random_spectral_layer, random_wavelet_layer, sampled_lipschitz, Activation, LayerSpec, OperatorNet};
use neurop_core::parallel_bench::{amdahl_speedup, bench_batched_conv, scaling_study, AmdahlModel};
use neurop_core::training::{data_loss, forward_with_dropout, generalization_bound, grad, loss_total, run_experiment, AntiderivativeTask, GenBoundInput, Sample, TrainConfig};
use neurop_core::transforms::{circular_conv_direct, circular_conv_fft, dft_naive, dwt, fft, idwt, max_levels, ComplexVec, WaveletFamily};
use neurop_core::GridFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

const ACTS: [Activation; 3] = [Activation::Relu, Activation::Tanh, Activation::Sigmoid];

/// Net `i` of the certification sweep: dense nets of random depth and
/// widths, and every third net on a power-of-two grid mixing dense,
/// spectral and wavelet layers.
fn sweep_net(i: usize, rng: &mut ChaCha8Rng) -> (OperatorNet, usize) {
    let act = ACTS[i % 3];
    let depth = rng.gen_range(1..=5);
    if i % 3 == 2 {
        let n = [16, 32, 64][rng.gen_range(0..3)];
        let layers = (0..depth)
            .map(|_| match rng.gen_range(0..3) {
                0 => {
                    let a = 2.0 * (3.0 / n as f64).sqrt();
                    LayerSpec::dense(Mat::from_fn(n, n, |_, _| rng.gen_range(-a..a)), Vector::from_fn(n, |_| rng.gen_range(-1.0..1.0)), act).unwrap()
                }
                1 => random_spectral_layer(n, rng.gen_range(1..=n / 2 + 1), act, rng).unwrap(),
                _ => random_wavelet_layer(rng.gen_range(1..=3), WaveletFamily::Daubechies4, act, rng).unwrap(),
            })
            .collect();
        (OperatorNet::new(layers).unwrap(), n)
    } else {
        let widths: Vec<usize> = (0..=depth).map(|_| rng.gen_range(1..=64)).collect();
        (random_dense_net(&widths, act, act, 2.0, 1.0, rng).unwrap(), widths[0])
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_slack = f64::INFINITY;
    for i in 0..50 {
        let (net, dim) = sweep_net(i, &mut rng);
        let bound = net.certify_lipschitz().map_err(|e| e.to_string())?.bound;
        let sampled = sampled_lipschitz(&net, dim, 10_000, &mut rng).map_err(|e| e.to_string())?;
        ensure!(sampled <= bound + 1e-9, "net {i}: sampled {sampled} exceeds certificate {bound}");
        worst_slack = worst_slack.min(bound - sampled);
        let normalized = net.normalize_to_contraction(0.8).map_err(|e| e.to_string())?;
        let sampled = sampled_lipschitz(&normalized, dim, 10_000, &mut rng).map_err(|e| e.to_string())?;
        ensure!(sampled <= 0.8 + 1e-9, "net {i}: normalized sampled quotient {sampled} exceeds 0.8");
    }
    Ok(format!("50 nets, smallest certificate slack {worst_slack:.3e}"))
}

fn criterion_2() -> Outcome {
    ensure!(predict_iterations(1.0, 1e-3, 0.5).map_err(|e| e.to_string())? == 10, "closed form is not 10");
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let qs = [0.5, 0.8, 0.95];
    let mut checked = 0;
    for i in 0..20 {
        let q = qs[i % 3];
        let d = rng.gen_range(4..=32);
        let h = rng.gen_range(4..=64);
        let act = ACTS[(i / 3) % 3];
        let net = random_dense_net(&[d, h, d], act, Activation::Identity, 3.0, 1.0, &mut rng)
            .and_then(|n| n.normalize_to_contraction(q))
            .map_err(|e| e.to_string())?;
        let u0 = Vector::from_fn(d, |_| rng.gen_range(-5.0..5.0));
        for eps in [1e-3, 1e-6] {
            let r = iterate_to_fixed_point(&net, &u0, eps, 1_000_000).map_err(|e| e.to_string())?;
            let e0 = r.error_trace[0];
            ensure!(verify_exponential_bound(&r, q, e0), "net {i}, eps {eps}: error trace exceeds q^n e0");
            let n = predict_iterations(e0, eps, q).map_err(|e| e.to_string())?;
            let mut u = u0.clone();
            for _ in 0..n {
                u = net.forward(&u).map_err(|e| e.to_string())?;
            }
            let err = u.distance(&r.fixed_point).unwrap();
            ensure!(err <= eps, "net {i}: error {err} after {n} predicted steps exceeds {eps}");
            checked += 1;
        }
    }
    Ok(format!("{checked} runs; q=0.5, e0=1, eps=1e-3 predicts 10"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut n = 2;
    while n <= 1024 {
        let re: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let im: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = ComplexVec::from_parts(&re, &im).unwrap();
        let fast = fft(&x).map_err(|e| e.to_string())?;
        let slow = dft_naive(&x);
        let flat = |c: &ComplexVec| c.re().into_iter().chain(c.im()).collect::<Vec<_>>();
        let e = rel_err(&flat(&fast), &flat(&slow));
        ensure!(e <= 1e-9, "N={n}: fft vs naive relative error {e}");
        let parseval = (x.norm2_sqr() - fast.norm2_sqr() / n as f64).abs() / x.norm2_sqr();
        ensure!(parseval <= 1e-9, "N={n}: Fourier Parseval defect {parseval}");

        let h: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e = rel_err(&circular_conv_fft(&re, &h).unwrap(), &circular_conv_direct(&re, &h).unwrap());
        ensure!(e <= 1e-9, "N={n}: convolution relative error {e}");

        for family in [WaveletFamily::Haar, WaveletFamily::Daubechies4] {
            let levels = max_levels(n);
            if levels == 0 {
                continue;
            }
            let d = dwt(&re, family, levels).map_err(|e| e.to_string())?;
            let back = idwt(&d).map_err(|e| e.to_string())?;
            let e = back.iter().zip(&re).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            ensure!(e <= 1e-10, "N={n} {family:?}: reconstruction error {e}");
            let energy: f64 = re.iter().map(|v| v * v).sum();
            let coeff_energy: f64 = d.flatten().iter().map(|v| v * v).sum();
            ensure!((energy - coeff_energy).abs() <= 1e-9 * energy, "N={n} {family:?}: wavelet Parseval defect");
        }
        n *= 2;
    }
    let study = scaling_study(&[1 << 10, 1 << 11, 1 << 12, 1 << 13, 1 << 14], 5).map_err(|e| e.to_string())?;
    ensure!(study.slope_direct >= 1.7, "direct slope {:.3} below 1.7", study.slope_direct);
    ensure!(study.slope_fft <= 1.4, "FFT slope {:.3} above 1.4", study.slope_fft);
    Ok(format!("oracles hold for N=2..1024; slopes direct {:.3}, fft {:.3}", study.slope_direct, study.slope_fft))
}

fn criterion_4() -> Outcome {
    let n = 1024;
    let budgets = [8, 16, 32, 64];
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for trial in 0..10 {
        let center = rng.gen_range(0.0..1.0);
        let f = smooth_plus_spike(n, center, 3.0, 1.0).unwrap();
        for &b in &budgets {
            let plan = MultiScalePlan::full(n, b, WaveletFamily::Daubechies4);
            let e = |s| approximate(&f, &plan, s).map(|(_, r)| r.l2_error).map_err(|e| e.to_string());
            let (c, fo, wo) = (e(Strategy::Combined)?, e(Strategy::FourierOnly)?, e(Strategy::WaveletOnly)?);
            ensure!(c <= fo.min(wo), "trial {trial} (center {center:.4}), budget {b}: combined {c} > min({fo}, {wo})");
        }
    }

    // Analytic periodic signals whose error stays above round-off up to
    // budget 64.
    let smooth: [(&str, fn(f64) -> f64); 2] = [
        ("1/(1.1-cos)", |x| 1.0 / (1.1 - (2.0 * PI * x).cos())),
        ("1/(1.25-cos)", |x| 1.0 / (1.25 - (2.0 * PI * x).cos())),
    ];
    for (name, g) in smooth {
        let f = sample(n, g).unwrap();
        for strategy in [Strategy::FourierOnly, Strategy::Combined] {
            let curve = error_vs_budget_curve(&f, &MultiScalePlan::full(n, 0, WaveletFamily::Daubechies4), &budgets, strategy)
                .map_err(|e| e.to_string())?;
            let logs: Vec<f64> = curve.iter().map(|(_, r)| r.l2_error.ln()).collect();
            let drops: Vec<f64> = logs.windows(2).map(|w| w[0] - w[1]).collect();
            ensure!(drops[0] > 0.0 && drops.iter().all(|d| *d >= drops[0]), "{name} {strategy:?}: log errors {logs:?} do not fall at least linearly");
        }
    }

    let mut fitted = Vec::new();
    for s in [1.0, 2.0] {
        let mut c = vec![0.0; n];
        for k in 1..n / 2 {
            let phase = rng.gen_range(0.0..2.0 * PI);
            let mag = 1.0 / (k as f64).powf(s);
            c[2 * k - 1] = mag * phase.cos();
            c[2 * k] = mag * phase.sin();
        }
        let f = fourier_synthesis(&c).unwrap();
        let mags = fourier_mode_magnitudes(&fourier_coefficients(&f).unwrap());
        let fit = decay_exponent(&mags[..n / 2]).map_err(|e| e.to_string())?;
        ensure!((fit - s).abs() <= 0.05, "planted exponent {s} recovered as {fit}");
        fitted.push(fit);
    }
    Ok(format!("dominance on 10 spikes x 4 budgets; fitted exponents {:.4}, {:.4}", fitted[0], fitted[1]))
}

fn criterion_5() -> Outcome {
    let mut configs = 0;
    for width in 1..=6 {
        for depth in 1..=4 {
            let bound = montufar_lower_bound(1, width, depth).map_err(|e| e.to_string())?;
            for seed in 0..10 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                let net = sawtooth_net(width, depth, 1e-6, &mut rng).map_err(|e| e.to_string())?;
                let c = count_regions_1d(&net, 0.0, 1.0, 1_000_000).map_err(|e| e.to_string())?;
                ensure!(c.count as u128 >= bound, "width {width}, depth {depth}, seed {seed}: {} regions < bound {bound}", c.count);
                configs += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut summary = Vec::new();
    for lines in 1..=6u64 {
        let net = tangent_lines_net(lines as usize, 0.2, 0.05, &mut rng).map_err(|e| e.to_string())?;
        let target = arrangement_regions_2d(lines);
        let mut prev = 0;
        let mut last = 0;
        for m in [16, 64, 256, 1024] {
            last = count_regions_grid(&net, -1.0, 1.0, m).map_err(|e| e.to_string())?.count;
            ensure!(last >= prev, "{lines} lines: grid estimate fell from {prev} to {last}");
            prev = last;
        }
        ensure!(last.abs_diff(target) <= 1, "{lines} lines: estimate {last} vs arrangement {target}");
        summary.push(format!("{last}/{target}"));
    }
    Ok(format!("{configs} exact counts meet the bound; 2D estimates {}", summary.join(" ")))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst = 0.0f64;
    for i in 0..10 {
        let act = [Activation::Tanh, Activation::Sigmoid][i % 2];
        let net = if i < 8 {
            random_dense_net(&[6, 9, 4], act, Activation::Identity, 1.0, 0.5, &mut rng).unwrap()
        } else {
            OperatorNet::new(vec![
                random_spectral_layer(8, 5, act, &mut rng).unwrap(),
                random_spectral_layer(8, 3, Activation::Identity, &mut rng).unwrap(),
            ])
            .unwrap()
        };
        let (din, dout) = (net.input_dim().unwrap(), net.layers().last().unwrap().output_dim().unwrap());
        let batch: Vec<Sample> = (0..4)
            .map(|_| Sample {
                input: Vector::from_fn(din, |_| rng.gen_range(-1.0..1.0)),
                target: Vector::from_fn(dout, |_| rng.gen_range(-1.0..1.0)),
            })
            .collect();
        let lambda = if i % 3 == 0 { 0.0 } else { 0.01 };
        let g = grad(&net, &batch, lambda).map_err(|e| e.to_string())?;
        let p = net.params();
        for j in 0..p.len() {
            let mut plus = p.clone();
            plus[j] += 1e-5;
            let mut minus = p.clone();
            minus[j] -= 1e-5;
            let lp = loss_total(&net.with_params(&plus).unwrap(), &batch, lambda).unwrap();
            let lm = loss_total(&net.with_params(&minus).unwrap(), &batch, lambda).unwrap();
            let fd = (lp - lm) / 2e-5;
            worst = worst.max((fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-6));
        }
    }
    ensure!(worst <= 1e-4, "finite-difference mismatch {worst}");

    // Dropout feeds the linear readout, so the expectation is exact.
    let net = random_dense_net(&[8, 16, 4], Activation::Tanh, Activation::Identity, 1.0, 0.5, &mut rng).unwrap();
    let u = Vector::from_fn(8, |_| rng.gen_range(-1.0..1.0));
    let det = net.forward(&u).unwrap();
    for p in [0.1, 0.5] {
        let draws = 100_000;
        let mut mean = vec![0.0; 4];
        for _ in 0..draws {
            let y = forward_with_dropout(&net, &u, p, &mut rng).map_err(|e| e.to_string())?;
            mean.iter_mut().zip(y.iter()).for_each(|(m, v)| *m += v / draws as f64);
        }
        let e = rel_err(&mean, det.as_slice());
        ensure!(e <= 0.01, "dropout p={p}: sample mean off by {e}");
    }

    let task = AntiderivativeTask::default();
    let base = TrainConfig { epochs: 100, learning_rate: 0.1, lambda_wd: 0.0, dropout_p: 0.0, batch_size: 50, seed: 0, renormalize_q: None };
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[9] + v[10])
    };
    let mut gaps = [Vec::new(), Vec::new(), Vec::new()];
    for seed in 0..20 {
        for (k, (lambda_wd, dropout_p)) in [(0.0, 0.0), (1e-3, 0.0), (0.0, 0.2)].into_iter().enumerate() {
            let cfg = TrainConfig { seed, lambda_wd, dropout_p, ..base.clone() };
            gaps[k].push(run_experiment(&task, &[64, 64, 64], &cfg).map_err(|e| e.to_string())?.final_gap);
        }
    }
    let [g0, gwd, gdrop] = gaps.map(median);
    ensure!(gwd < g0, "median gap with weight decay {gwd} not below baseline {g0}");
    ensure!(gdrop < g0, "median gap with dropout {gdrop} not below baseline {g0}");

    let b = generalization_bound(&GenBoundInput { lipschitz_l: 1.0, delta: 0.05, n_samples: 100, empirical_risk: 0.25 }).map_err(|e| e.to_string())?;
    ensure!((b - 0.25 - 0.12238).abs() <= 1e-4, "bound offset {}", b - 0.25);
    let _ = data_loss;
    Ok(format!("fd error {worst:.2e}; median gaps base {g0:.5}, wd {gwd:.5}, dropout {gdrop:.5}; bound offset {:.6}", b - 0.25))
}

/// Returns the pure-model outcome and the measured outcome separately.
fn criterion_7() -> (Outcome, Outcome) {
    let model = || -> Outcome {
        for n in [1.0, 2.0, 3.0, 8.0, 1000.0, 1e9] {
            let s = amdahl_speedup(&AmdahlModel::new(1.0, n).map_err(|e| e.to_string())?);
            ensure!(s == n, "P=1, N={n}: speedup {s}");
        }
        let s = amdahl_speedup(&AmdahlModel::new(0.9, 10.0).unwrap());
        ensure!((s - 5.2632).abs() <= 1e-4, "P=0.9, N=10: {s}");
        Ok(format!("P=0.9, N=10 gives {s:.6}"))
    };
    let measured = || -> Outcome {
        let n = 1 << 14;
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let batch: Vec<GridFunction> = (0..512).map(|_| Vector::from_fn(n, |_| rng.gen_range(-1.0..1.0))).collect();
        let filter: Vec<f64> = (0..n).map(|i| (-(i as f64) / 64.0).exp()).collect();
        let recs = bench_batched_conv(&batch, &filter, &[1, 2, 4], 5).map_err(|e| e.to_string())?;
        let line = recs
            .iter()
            .map(|r| format!("w={} S={:.3} pred={:.3}", r.workers, r.speedup_measured, r.speedup_predicted))
            .collect::<Vec<_>>()
            .join(", ");
        let fitted = recs[0].fitted_p;
        ensure!(recs.windows(2).all(|w| w[1].speedup_measured >= w[0].speedup_measured), "speedups not monotone: {line}");
        ensure!(fitted > 0.0 && fitted <= 1.0, "fitted P = {fitted} outside (0, 1]: {line}");
        for r in &recs {
            let rel = (r.speedup_predicted - r.speedup_measured).abs() / r.speedup_measured;
            ensure!(rel <= 0.3, "fit off by {rel:.3} at {} workers: {line}", r.workers);
        }
        Ok(format!("outputs bit-identical; fitted P {fitted:.4}; {line}"))
    };
    (model(), measured())
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut checks = 0;
    for i in 0..20 {
        let q = rng.gen_range(0.3..0.99);
        let (net, dim) = sweep_net(i, &mut rng);
        let net = net.normalize_to_contraction(q).map_err(|e| e.to_string())?;
        let (lhs, rhs) = net.stability_envelope(&Vector::zeros(dim)).map_err(|e| e.to_string())?;
        ensure!((lhs - rhs).abs() <= 1e-12, "net {i}: envelope at u=0 gives {lhs} vs {rhs}");
        for _ in 0..100 {
            let scale = 10f64.powi(rng.gen_range(-3..=3));
            let u = Vector::from_fn(dim, |_| scale * rng.gen_range(-1.0..1.0));
            let (lhs, rhs) = net.stability_envelope(&u).map_err(|e| e.to_string())?;
            ensure!(lhs <= rhs, "net {i}: {lhs} > {rhs}");
            checks += 1;
        }
    }
    Ok(format!("{checks} envelope checks"))
}

fn report(label: &str, outcome: &Outcome, secs: f64) -> bool {
    match outcome {
        Ok(msg) => println!("criterion {label}: PASS ({secs:.1}s) {msg}"),
        Err(msg) => println!("criterion {label}: FAIL ({secs:.1}s) {msg}"),
    }
    outcome.is_ok()
}

fn main() {
    let mut all_ok = true;
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("1 contraction certification", criterion_1),
        ("2 exponential convergence", criterion_2),
        ("3 transform oracles", criterion_3),
        ("4 multi-scale dominance", criterion_4),
        ("5 capacity bounds", criterion_5),
        ("6 training and regularization", criterion_6),
    ];
    for (label, run) in criteria {
        let t = Instant::now();
        let outcome = run();
        all_ok &= report(label, &outcome, t.elapsed().as_secs_f64());
    }

    let t = Instant::now();
    let (model, measured) = criterion_7();
    let secs = t.elapsed().as_secs_f64();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let combined = match (&model, &measured) {
        (Ok(a), Ok(b)) => Ok(format!("{a}; {b}")),
        (Err(e), Ok(b)) => Err(format!("{e}; {b}")),
        (Err(e), Err(b)) => Err(format!("{e}; {b}")),
        (Ok(_), Err(e)) => Err(format!("{e} [{threads} hardware thread(s) available]")),
    };
    report("7 Amdahl validation", &combined, secs);
    all_ok &= model.is_ok();
    if threads >= 4 {
        all_ok &= measured.is_ok();
    } else if measured.is_err() {
        println!("note: measured speedups need at least 4 hardware threads; not counted as a suite failure here");
    }

    let t = Instant::now();
    let outcome = criterion_8();
    all_ok &= report("8 stability envelope", &outcome, t.elapsed().as_secs_f64());

    if !all_ok {
        std::process::exit(1);
    }
}
