//! Fast versions of the invariant checks, sized to finish in a few seconds.

use neurop_core::capacity;
use neurop_core::fixed_point::iterate_to_fixed_point;
use neurop_core::multiscale::{self, MultiScalePlan, Strategy};
use neurop_core::operator_net::{random_dense_net, sampled_lipschitz, Activation};
use neurop_core::parallel_bench::{self, AmdahlModel, SpeedupLimit};
use neurop_core::training::{self, GenBoundInput, Sample};
use neurop_core::transforms::WaveletFamily;
use neurop_core::{Result, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::{CmdResult, Failure, RunDir};

type Check = (&'static str, fn(&mut ChaCha8Rng) -> Result<(bool, String)>);

const CHECKS: &[Check] = &[
    ("lipschitz_certificate_dominates", lipschitz),
    ("fixed_point_prediction", fixed_point),
    ("amdahl_closed_forms", amdahl),
    ("combined_beats_single_bases", approximation),
    ("sawtooth_meets_region_bound", regions),
    ("gradient_matches_finite_differences", gradient),
    ("generalization_bound_value", gen_bound),
];

pub fn run(dir: &mut RunDir, seed: u64) -> CmdResult<()> {
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (name, check) in CHECKS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ok, detail) = match check(&mut rng) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(*name);
        }
        rows.push(vec![name.to_string(), if ok { "pass" } else { "fail" }.to_string(), detail]);
    }
    dir.csv("selftest.csv", &["check", "status", "detail"], rows)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("failed checks: {}", failed.join(", "))))
    }
}

fn lipschitz(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    for _ in 0..5 {
        let net = random_dense_net(&[16, 24, 16], Activation::Tanh, Activation::Sigmoid, 1.5, 0.3, rng)?;
        let bound = net.certify_lipschitz()?.bound;
        let est = sampled_lipschitz(&net, 16, 200, rng)?;
        worst = worst.max(est / bound);
    }
    Ok((worst <= 1.0 + 1e-9, format!("max sampled/certified ratio {worst:.4}")))
}

fn fixed_point(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let net = random_dense_net(&[16, 16, 16], Activation::Tanh, Activation::Tanh, 1.0, 0.5, rng)?
        .normalize_to_contraction(0.8)?;
    let u0 = Vector::from_fn(16, |_| rng.gen_range(-1.0..1.0));
    let r = iterate_to_fixed_point(&net, &u0, 1e-6, 10_000)?;
    let ok = r.iterations_run <= r.predicted_n && r.empirical_q <= r.certified_q + 1e-9;
    Ok((ok, format!("ran {} of predicted {}, empirical q {:.4}", r.iterations_run, r.predicted_n, r.empirical_q)))
}

fn amdahl(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let s = parallel_bench::amdahl_speedup(&AmdahlModel::new(0.9, 1e9)?);
    let lim = parallel_bench::amdahl_limit(0.95)?;
    let full = parallel_bench::amdahl_speedup(&AmdahlModel::new(1.0, 64.0)?);
    let ok = (s - 10.0).abs() < 1e-6
        && matches!(lim, SpeedupLimit::Bounded(v) if (v - 20.0).abs() < 1e-9)
        && full == 64.0
        && parallel_bench::amdahl_limit(1.0)? == SpeedupLimit::Unbounded;
    Ok((ok, format!("S(0.9, 1e9) = {s:.9}")))
}

fn approximation(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let n = 1024;
    let f = multiscale::smooth_plus_spike(n, rng.gen_range(0.2..0.8), 3.0, 1.0)?;
    let base = MultiScalePlan::full(n, 0, WaveletFamily::Daubechies4);
    let budgets = [8, 16, 32, 64];
    let curve = |s| multiscale::error_vs_budget_curve(&f, &base, &budgets, s);
    let (fo, wo, co) = (curve(Strategy::FourierOnly)?, curve(Strategy::WaveletOnly)?, curve(Strategy::Combined)?);
    let ok = (0..budgets.len())
        .all(|i| co[i].1.l2_error <= fo[i].1.l2_error.min(wo[i].1.l2_error) * (1.0 + 1e-9) + 1e-12);
    Ok((ok, format!("budget 64: combined {:.3e}, fourier {:.3e}, wavelet {:.3e}", co[3].1.l2_error, fo[3].1.l2_error, wo[3].1.l2_error)))
}

fn regions(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = String::new();
    let mut ok = true;
    for (w, d) in [(2, 2), (3, 2), (2, 4)] {
        let net = capacity::sawtooth_net(w, d, 1e-6, rng)?;
        let c = capacity::count_regions_1d(&net, 0.0, 1.0, 1 << 20)?;
        let m = capacity::montufar_lower_bound(1, w, d)?;
        if (c.count as u128) < m {
            ok = false;
        }
        worst = format!("{worst}({w},{d}): {} >= {m} ", c.count);
    }
    Ok((ok, worst.trim_end().to_string()))
}

fn gradient(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let net = random_dense_net(&[4, 6, 3], Activation::Tanh, Activation::Identity, 1.0, 0.2, rng)?;
    let batch: Vec<Sample> = (0..5)
        .map(|_| Sample {
            input: Vector::from_fn(4, |_| rng.gen_range(-1.0..1.0)),
            target: Vector::from_fn(3, |_| rng.gen_range(-1.0..1.0)),
        })
        .collect();
    let lambda = 0.01;
    let g = training::grad(&net, &batch, lambda)?;
    let p = net.params();
    let h = 1e-6;
    let mut worst = 0.0_f64;
    for i in 0..p.len() {
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus[i] += h;
        minus[i] -= h;
        let fd = (training::loss_total(&net.with_params(&plus)?, &batch, lambda)?
            - training::loss_total(&net.with_params(&minus)?, &batch, lambda)?)
            / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8));
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.2e}")))
}

fn gen_bound(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let b = training::generalization_bound(&GenBoundInput {
        lipschitz_l: 1.0,
        delta: 0.05,
        n_samples: 100,
        empirical_risk: 0.0,
    })?;
    Ok(((b - 0.12238).abs() < 1e-4, format!("bound {b:.5}")))
}
