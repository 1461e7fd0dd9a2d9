//! Amdahl's-law model and a measured worker-pool benchmark for batched
//! FFT convolutions.
//!
//! `P` is always the parallel fraction; worker counts are called `workers`
//! or `n`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::transforms::{circular_conv_direct, circular_conv_fft};
use crate::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmdahlModel {
    pub p: f64,
    pub n: f64,
}

impl AmdahlModel {
    pub fn new(p: f64, n: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("parallel fraction {p} must lie in [0, 1]")));
        }
        if !(n >= 1.0) || !n.is_finite() {
            return Err(invalid(format!("processor count {n} must be at least 1")));
        }
        Ok(AmdahlModel { p, n })
    }
}

/// `1 / ((1 − P) + P/N)`, evaluated as `N / (N(1 − P) + P)` so that `P = 1`
/// gives exactly `N`.
pub fn amdahl_speedup(m: &AmdahlModel) -> f64 {
    m.n / (m.n * (1.0 - m.p) + m.p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedupLimit {
    Bounded(f64),
    /// A fully parallel program has no asymptotic limit.
    Unbounded,
}

/// `1 / (1 − P)` as `N → ∞`.
pub fn amdahl_limit(p: f64) -> Result<SpeedupLimit> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("parallel fraction {p} must lie in [0, 1]")));
    }
    if p == 1.0 {
        return Ok(SpeedupLimit::Unbounded);
    }
    Ok(SpeedupLimit::Bounded(1.0 / (1.0 - p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRecord {
    pub workers: usize,
    /// Median wall time over the timed repeats, seconds.
    pub wall_time: f64,
    pub speedup_measured: f64,
    pub speedup_predicted: f64,
    pub fitted_p: f64,
}

/// Least-squares fit of `P ∈ [0, 1]` to `(workers, speedup)` points: a
/// coarse grid scan followed by golden-section refinement.
pub fn fit_parallel_fraction(points: &[(usize, f64)]) -> f64 {
    let sse = |p: f64| -> f64 {
        points
            .iter()
            .map(|&(w, s)| (amdahl_speedup(&AmdahlModel { p, n: w as f64 }) - s).powi(2))
            .sum()
    };
    let steps = 1000;
    let mut best: usize = 0;
    for i in 1..=steps {
        if sse(i as f64 / steps as f64) < sse(best as f64 / steps as f64) {
            best = i;
        }
    }
    let mut lo = (best.saturating_sub(1)) as f64 / steps as f64;
    let mut hi = ((best + 1).min(steps)) as f64 / steps as f64;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if sse(a) <= sse(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mid = 0.5 * (lo + hi);
    let grid_best = best as f64 / steps as f64;
    if sse(mid) <= sse(grid_best) {
        mid
    } else {
        grid_best
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Convolves every batch item with `filter`, item `i` going to worker
/// `i mod workers`; results land in their original slots.
pub fn convolve_batch(batch: &[GridFunction], filter: &[f64], workers: usize) -> Result<Vec<Vec<f64>>> {
    if workers == 0 {
        return Err(invalid("need at least one worker"));
    }
    if workers == 1 {
        return batch.iter().map(|x| circular_conv_fft(x.as_slice(), filter)).collect();
    }
    let per_worker: Vec<Result<Vec<(usize, Vec<f64>)>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..batch.len())
                        .step_by(workers)
                        .map(|i| circular_conv_fft(batch[i].as_slice(), filter).map(|y| (i, y)))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = vec![Vec::new(); batch.len()];
    for chunk in per_worker {
        for (i, y) in chunk? {
            out[i] = y;
        }
    }
    Ok(out)
}

/// Times [`convolve_batch`] for each worker count. One untimed warm-up run
/// precedes the `repeats` timed runs at every worker count; the median is
/// reported. Outputs must be bit-identical to the single-worker run.
pub fn bench_batched_conv(
    batch: &[GridFunction],
    filter: &[f64],
    workers: &[usize],
    repeats: usize,
) -> Result<Vec<SpeedupRecord>> {
    if workers.is_empty() || workers.contains(&0) {
        return Err(invalid("worker counts must be positive"));
    }
    let max_w = *workers.iter().max().expect("nonempty");
    if batch.len() < 4 * max_w {
        return Err(invalid(format!(
            "batch of {} items is below 4 x max workers ({})",
            batch.len(),
            4 * max_w
        )));
    }
    if repeats < 5 {
        return Err(invalid("need at least 5 repeats"));
    }
    let reference = convolve_batch(batch, filter, 1)?;
    let time_for = |w: usize| -> Result<f64> {
        let warm = convolve_batch(batch, filter, w)?;
        if warm != reference {
            return Err(Error::Nondeterminism(format!("{w}-worker output differs from 1-worker output")));
        }
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let t = Instant::now();
            let out = convolve_batch(batch, filter, w)?;
            times.push(t.elapsed().as_secs_f64().max(1e-9));
            if out != reference {
                return Err(Error::Nondeterminism(format!("{w}-worker output differs from 1-worker output")));
            }
        }
        Ok(median(&mut times))
    };
    let t1 = time_for(1)?;
    let mut measured = Vec::with_capacity(workers.len());
    for &w in workers {
        let t = if w == 1 { t1 } else { time_for(w)? };
        measured.push((w, t, t1 / t));
    }
    let fitted_p = fit_parallel_fraction(&measured.iter().map(|&(w, _, s)| (w, s)).collect::<Vec<_>>());
    Ok(measured
        .into_iter()
        .map(|(w, t, s)| SpeedupRecord {
            workers: w,
            wall_time: t,
            speedup_measured: s,
            speedup_predicted: amdahl_speedup(&AmdahlModel { p: fitted_p, n: w as f64 }),
            fitted_p,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub t_direct: f64,
    pub t_fft: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    pub slope_direct: f64,
    pub slope_fft: f64,
}

/// Ordinary least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Median runtimes of direct and FFT circular convolution on deterministic
/// inputs of each size, with fitted log-log slopes.
pub fn scaling_study(sizes: &[usize], repeats: usize) -> Result<ScalingStudy> {
    if sizes.len() < 2 {
        return Err(invalid("need at least two sizes"));
    }
    if sizes.iter().any(|n| !n.is_power_of_two()) || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("sizes must be ascending powers of two"));
    }
    if repeats == 0 {
        return Err(invalid("need at least one repeat"));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1013) as f64 / 1013.0 - 0.5).collect();
        let h: Vec<f64> = (0..n).map(|i| ((i * 104_729) % 997) as f64 / 997.0 - 0.5).collect();
        let time = |f: &dyn Fn() -> Result<Vec<f64>>| -> Result<f64> {
            f()?;
            let mut ts = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let t = Instant::now();
                std::hint::black_box(f()?);
                ts.push(t.elapsed().as_secs_f64().max(1e-9));
            }
            Ok(median(&mut ts))
        };
        let t_direct = time(&|| circular_conv_direct(&x, &h))?;
        let t_fft = time(&|| circular_conv_fft(&x, &h))?;
        rows.push(ScalingRow { n, t_direct, t_fft });
    }
    let slope_direct = loglog_slope(&rows.iter().map(|r| (r.n as f64, r.t_direct)).collect::<Vec<_>>());
    let slope_fft = loglog_slope(&rows.iter().map(|r| (r.n as f64, r.t_fft)).collect::<Vec<_>>());
    Ok(ScalingStudy { rows, slope_direct, slope_fft })
}
