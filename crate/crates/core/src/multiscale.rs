//! Truncated Fourier, wavelet and combined Fourier+wavelet approximation of
//! grid functions, plus power-law fits of coefficient decay.
//!
//! Both dictionaries are used in orthonormal form, so the squared error of a
//! truncation is exactly the energy of the discarded coefficients. Errors are
//! reported in the rectangle-rule L² norm on `[0, 1)`, `‖e‖² = (1/N) Σ e_n²`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::transforms::{self, max_levels, WaveletDecomp, WaveletFamily};
use crate::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FourierOnly,
    WaveletOnly,
    Combined,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::FourierOnly => "fourier_only",
            Strategy::WaveletOnly => "wavelet_only",
            Strategy::Combined => "combined",
        }
    }
}

/// Which coefficients may be kept, and how many.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiScalePlan {
    /// Highest Fourier mode `K` eligible for retention.
    pub fourier_cutoff: usize,
    /// Finest detail level `J0` eligible for retention (1 is the finest).
    pub min_detail_level: usize,
    /// Decomposition depth `J`; the approximation band sits below level `J`.
    pub levels: usize,
    /// Total number of retained coefficients.
    pub budget: usize,
    pub family: WaveletFamily,
}

impl MultiScalePlan {
    /// Every coefficient of a length-`n` grid is eligible.
    pub fn full(n: usize, budget: usize, family: WaveletFamily) -> Self {
        Self {
            fourier_cutoff: n / 2,
            min_detail_level: 1,
            levels: max_levels(n).max(1),
            budget,
            family,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if n < 2 || !n.is_power_of_two() {
            return Err(invalid(format!("grid length {n} must be a power of two >= 2")));
        }
        if self.budget > n {
            return Err(invalid(format!(
                "budget {} exceeds grid size {n}",
                self.budget
            )));
        }
        if self.min_detail_level == 0 || self.levels < self.min_detail_level {
            return Err(invalid("wavelet level range must satisfy 1 <= J0 <= J"));
        }
        if self.levels > max_levels(n) {
            return Err(invalid(format!(
                "{} wavelet levels exceed the depth of a length-{n} grid",
                self.levels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub l2_error: f64,
    /// Energy of the discarded coefficients; equals `l2_error²`.
    pub discarded_energy: f64,
    pub fourier_terms: usize,
    pub wavelet_terms: usize,
    /// Fitted `s` in `|c_k| ~ C / k^s`, when enough modes are above the noise floor.
    pub decay_exponent_fourier: Option<f64>,
    /// Fitted `α` in `max_m |d_{j,m}| ~ C 2^{-jα}` over resolution levels.
    pub decay_exponent_wavelet: Option<f64>,
}

/// Real orthonormal Fourier coefficients of `f`.
///
/// Layout: `[DC, cos_1, sin_1, cos_2, sin_2, ..., Nyquist]`, `N` entries.
pub fn fourier_coefficients(f: &[f64]) -> Result<Vec<f64>> {
    let n = f.len();
    if n < 2 {
        return Err(invalid("Fourier coefficients need at least two samples"));
    }
    let x = transforms::fft(&transforms::ComplexVec::from_real(f))?.0;
    let inv = 1.0 / (n as f64).sqrt();
    let pair = (2.0 / n as f64).sqrt();
    let mut out = Vec::with_capacity(n);
    out.push(x[0].re * inv);
    for xk in &x[1..n / 2] {
        out.push(pair * xk.re);
        out.push(-pair * xk.im);
    }
    out.push(x[n / 2].re * inv);
    Ok(out)
}

/// Inverse of [`fourier_coefficients`].
pub fn fourier_synthesis(coeffs: &[f64]) -> Result<Vec<f64>> {
    let n = coeffs.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(invalid("coefficient count must be a power of two >= 2"));
    }
    let root_n = (n as f64).sqrt();
    let half = (n as f64 / 2.0).sqrt();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    x[0] = Complex64::new(coeffs[0] * root_n, 0.0);
    for k in 1..n / 2 {
        let c = Complex64::new(half * coeffs[2 * k - 1], -half * coeffs[2 * k]);
        x[k] = c;
        x[n - k] = c.conj();
    }
    x[n / 2] = Complex64::new(coeffs[n - 1] * root_n, 0.0);
    transforms::fft_in_place(&mut x, true)?;
    Ok(x.into_iter().map(|c| c.re).collect())
}

/// Fourier mode number of entry `i` in the [`fourier_coefficients`] layout.
pub fn fourier_mode(i: usize, n: usize) -> usize {
    if i == 0 {
        0
    } else if i == n - 1 {
        n / 2
    } else {
        i.div_ceil(2)
    }
}

/// Per-mode magnitudes `|c_k|`, `k = 0..=N/2`.
pub fn fourier_mode_magnitudes(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let mut mags = vec![0.0; n / 2 + 1];
    for (i, c) in coeffs.iter().enumerate() {
        mags[fourier_mode(i, n)] += c * c;
    }
    mags.into_iter().map(f64::sqrt).collect()
}

/// Detail level (1 = finest) of each entry of [`WaveletDecomp::flatten`];
/// `None` marks the approximation band.
fn wavelet_levels_of(n: usize, levels: usize) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(n);
    for j in 1..=levels {
        out.extend(std::iter::repeat(Some(j)).take(n >> j));
    }
    out.extend(std::iter::repeat(None).take(n >> levels));
    out
}

/// Indices of the `k` largest-magnitude eligible coefficients (ties by index).
fn top_indices(coeffs: &[f64], eligible: &[bool], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..coeffs.len()).filter(|&i| eligible[i]).collect();
    idx.sort_by(|&a, &b| {
        coeffs[b]
            .abs()
            .total_cmp(&coeffs[a].abs())
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Keeps `keep` entries of `coeffs`, zeroing the rest; returns the kept
/// vector and the energy of what was dropped.
fn truncate(coeffs: &[f64], keep: &[usize]) -> (Vec<f64>, f64) {
    let mut kept = vec![0.0; coeffs.len()];
    for &i in keep {
        kept[i] = coeffs[i];
    }
    let dropped = coeffs
        .iter()
        .zip(&kept)
        .map(|(c, k)| if *k == 0.0 { c * c } else { 0.0 })
        .sum();
    (kept, dropped)
}

struct Dictionaries {
    fourier_eligible: Vec<bool>,
    wavelet_eligible: Vec<bool>,
}

impl Dictionaries {
    fn new(n: usize, plan: &MultiScalePlan) -> Self {
        let fourier_eligible = (0..n).map(|i| fourier_mode(i, n) <= plan.fourier_cutoff).collect();
        let wavelet_eligible = wavelet_levels_of(n, plan.levels)
            .into_iter()
            .map(|lvl| lvl.map_or(true, |j| j >= plan.min_detail_level))
            .collect();
        Self {
            fourier_eligible,
            wavelet_eligible,
        }
    }
}

fn fourier_part(f: &[f64], dict: &Dictionaries, k: usize) -> Result<(Vec<f64>, f64)> {
    let coeffs = fourier_coefficients(f)?;
    let keep = top_indices(&coeffs, &dict.fourier_eligible, k);
    let (kept, dropped) = truncate(&coeffs, &keep);
    Ok((fourier_synthesis(&kept)?, dropped))
}

fn wavelet_part(
    f: &[f64],
    plan: &MultiScalePlan,
    dict: &Dictionaries,
    k: usize,
) -> Result<(Vec<f64>, f64)> {
    let n = f.len();
    let coeffs = transforms::dwt(f, plan.family, plan.levels)?.flatten();
    let keep = top_indices(&coeffs, &dict.wavelet_eligible, k);
    let (kept, dropped) = truncate(&coeffs, &keep);
    let decomp = WaveletDecomp::from_flat(plan.family, plan.levels, n, &kept)?;
    Ok((transforms::idwt(&decomp)?, dropped))
}

fn wavelet_decay_exponent(f: &[f64], plan: &MultiScalePlan) -> Option<f64> {
    let d = transforms::dwt(f, plan.family, plan.levels).ok()?;
    // Resolution index r = J - j + 1 grows toward finer scales.
    let points: Vec<(f64, f64)> = d
        .details
        .iter()
        .enumerate()
        .filter_map(|(j, level)| {
            let m = level.iter().fold(0.0f64, |a, c| a.max(c.abs()));
            (m > 1e-13).then(|| ((plan.levels - j) as f64, m.log2()))
        })
        .collect();
    if points.len() < 3 {
        return None;
    }
    Some(-least_squares_slope(&points))
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Approximates `f` with at most `plan.budget` coefficients.
///
/// `Combined` keeps the largest Fourier coefficients of `f`, then the
/// largest wavelet coefficients of the residual. The split between the two
/// dictionaries is the one with the smallest error, so the result is never
/// worse than either single dictionary at the same budget.
pub fn approximate(
    f: &GridFunction,
    plan: &MultiScalePlan,
    strategy: Strategy,
) -> Result<(GridFunction, ApproxReport)> {
    let x = f.as_slice();
    let n = x.len();
    plan.validate(n)?;
    let dict = Dictionaries::new(n, plan);
    let b = plan.budget;

    let (recon, dropped, fourier_terms) = match strategy {
        Strategy::FourierOnly => {
            let (r, d) = fourier_part(x, &dict, b)?;
            (r, d, b.min(count(&dict.fourier_eligible)))
        }
        Strategy::WaveletOnly => {
            let (r, d) = wavelet_part(x, plan, &dict, b)?;
            (r, d, 0)
        }
        Strategy::Combined => {
            let max_fourier = b.min(count(&dict.fourier_eligible));
            let mut best: Option<(f64, Vec<f64>, f64, usize)> = None;
            for kf in 0..=max_fourier {
                let (fp, _) = fourier_part(x, &dict, kf)?;
                let resid: Vec<f64> = x.iter().zip(&fp).map(|(a, c)| a - c).collect();
                let (wp, dropped) = wavelet_part(&resid, plan, &dict, b - kf)?;
                let recon: Vec<f64> = fp.iter().zip(&wp).map(|(a, c)| a + c).collect();
                let err = sq_error(x, &recon);
                if best.as_ref().map_or(true, |(e, ..)| err < *e) {
                    best = Some((err, recon, dropped, kf));
                }
            }
            let (_, recon, dropped, kf) = best.expect("split search visits kf = 0");
            (recon, dropped, kf)
        }
    };

    let sq_err = sq_error(x, &recon);
    let wavelet_terms = match strategy {
        Strategy::FourierOnly => 0,
        _ => (b - fourier_terms).min(count(&dict.wavelet_eligible)),
    };
    let mags = fourier_mode_magnitudes(&fourier_coefficients(x)?);
    let report = ApproxReport {
        l2_error: (sq_err / n as f64).sqrt(),
        discarded_energy: dropped / n as f64,
        fourier_terms,
        wavelet_terms,
        decay_exponent_fourier: decay_exponent(&mags).ok(),
        decay_exponent_wavelet: wavelet_decay_exponent(x, plan),
    };
    Ok((GridFunction::new(recon)?, report))
}

fn sq_error(x: &[f64], recon: &[f64]) -> f64 {
    x.iter().zip(recon).map(|(a, r)| (a - r) * (a - r)).sum()
}

fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&b| b).count()
}

/// Fits `|c_k| ~ C / k^s` and returns `s`.
///
/// `magnitudes[k]` is the magnitude of mode `k`. The DC entry (`k = 0`) is
/// excluded, as are entries at or below the numerical floor
/// (`1e-13 · max`). At least 8 usable modes are required.
pub fn decay_exponent(magnitudes: &[f64]) -> Result<f64> {
    let peak = magnitudes.iter().skip(1).fold(0.0f64, |a, m| a.max(m.abs()));
    if peak == 0.0 {
        return Err(Error::UndefinedExponent("all coefficients are zero".into()));
    }
    let floor = peak * 1e-13;
    let points: Vec<(f64, f64)> = magnitudes
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, m)| m.abs() > floor)
        .map(|(k, m)| ((k as f64).ln(), m.abs().ln()))
        .collect();
    if points.len() < 8 {
        return Err(invalid(format!(
            "decay fit needs at least 8 nonzero magnitudes, got {}",
            points.len()
        )));
    }
    Ok(-least_squares_slope(&points))
}

/// Approximation error at each budget (ascending), using `base` for
/// everything but the budget.
pub fn error_vs_budget_curve(
    f: &GridFunction,
    base: &MultiScalePlan,
    budgets: &[usize],
    strategy: Strategy,
) -> Result<Vec<(usize, ApproxReport)>> {
    if budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("budgets must be ascending"));
    }
    budgets
        .iter()
        .map(|&budget| {
            let plan = MultiScalePlan {
                budget,
                ..base.clone()
            };
            approximate(f, &plan, strategy).map(|(_, r)| (budget, r))
        })
        .collect()
}

/// Samples `g` on the uniform grid `x_n = n / N`.
pub fn sample(n: usize, g: impl Fn(f64) -> f64) -> Result<GridFunction> {
    GridFunction::new((0..n).map(|i| g(i as f64 / n as f64)).collect())
}

/// `sin(2πx) + amp · exp(-((x - center)/width)²/2)`, with `width` in grid cells.
pub fn smooth_plus_spike(n: usize, center: f64, width_cells: f64, amp: f64) -> Result<GridFunction> {
    let w = width_cells / n as f64;
    sample(n, |x| {
        // Periodic distance to the spike center.
        let mut d = (x - center).abs();
        d = d.min(1.0 - d);
        (2.0 * std::f64::consts::PI * x).sin() + amp * (-(d / w).powi(2) / 2.0).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn fourier_coefficients_are_orthonormal() {
        let n = 16;
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let c = fourier_coefficients(&e).unwrap();
            let energy: f64 = c.iter().map(|v| v * v).sum();
            assert!((energy - 1.0).abs() < 1e-12);
            let back = fourier_synthesis(&c).unwrap();
            for (a, b) in back.iter().zip(&e) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mode_layout() {
        let n = 8;
        let modes: Vec<usize> = (0..n).map(|i| fourier_mode(i, n)).collect();
        assert_eq!(modes, vec![0, 1, 1, 2, 2, 3, 3, 4]);
    }

    #[test]
    fn pure_sinusoid_is_exact_with_low_cutoff() {
        let f = sample(64, |x| (2.0 * PI * x).sin()).unwrap();
        let plan = MultiScalePlan {
            fourier_cutoff: 1,
            ..MultiScalePlan::full(64, 3, WaveletFamily::Haar)
        };
        let (_, r) = approximate(&f, &plan, Strategy::FourierOnly).unwrap();
        assert!(r.l2_error <= 1e-10, "{}", r.l2_error);
    }

    #[test]
    fn haar_step_is_exact_with_wavelets() {
        let f = sample(64, |x| if x < 0.25 { 1.0 } else { -0.5 }).unwrap();
        let plan = MultiScalePlan::full(64, 64, WaveletFamily::Haar);
        let (_, r) = approximate(&f, &plan, Strategy::WaveletOnly).unwrap();
        assert!(r.l2_error <= 1e-10);
        // A dyadic step needs only a handful of Haar terms.
        let plan = MultiScalePlan::full(64, 3, WaveletFamily::Haar);
        let (_, r) = approximate(&f, &plan, Strategy::WaveletOnly).unwrap();
        assert!(r.l2_error <= 1e-10);
    }

    #[test]
    fn budget_larger_than_grid_rejected() {
        let f = sample(16, |x| x).unwrap();
        let plan = MultiScalePlan::full(16, 17, WaveletFamily::Haar);
        assert!(matches!(
            approximate(&f, &plan, Strategy::Combined),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn combined_beats_both_on_spike_at_budget_32() {
        let n = 1024;
        let f = smooth_plus_spike(n, 0.37, 4.0, 1.0).unwrap();
        let plan = MultiScalePlan::full(n, 32, WaveletFamily::Haar);
        let e = |s| approximate(&f, &plan, s).unwrap().1.l2_error;
        let (c, fo, wo) = (e(Strategy::Combined), e(Strategy::FourierOnly), e(Strategy::WaveletOnly));

        // Independent single-dictionary oracles: sort all squared coefficients
        // (naive DFT / explicit filter bank) and sum the tail.
        let tail = |mut sq: Vec<f64>| {
            sq.sort_by(|a, b| b.total_cmp(a));
            (sq[32..].iter().sum::<f64>() / n as f64).sqrt()
        };
        let x = crate::transforms::dft_naive(&crate::transforms::ComplexVec::from_real(f.as_slice())).0;
        let mut fsq = vec![x[0].norm_sqr() / n as f64, x[n / 2].norm_sqr() / n as f64];
        for xk in &x[1..n / 2] {
            fsq.push(2.0 * xk.re * xk.re / n as f64);
            fsq.push(2.0 * xk.im * xk.im / n as f64);
        }
        let wsq: Vec<f64> = crate::transforms::dwt(f.as_slice(), WaveletFamily::Haar, 10)
            .unwrap()
            .flatten()
            .iter()
            .map(|c| c * c)
            .collect();
        assert!((tail(fsq) - fo).abs() < 1e-9);
        assert!((tail(wsq) - wo).abs() < 1e-9);
        assert!(c < fo && c < wo, "combined {c}, fourier {fo}, wavelet {wo}");
    }

    #[test]
    fn parseval_error_identity() {
        let f = smooth_plus_spike(256, 0.6, 3.0, 0.8).unwrap();
        for strategy in [Strategy::FourierOnly, Strategy::WaveletOnly, Strategy::Combined] {
            for budget in [1, 5, 16, 40] {
                let plan = MultiScalePlan::full(256, budget, WaveletFamily::Daubechies4);
                let (_, r) = approximate(&f, &plan, strategy).unwrap();
                let e2 = r.l2_error * r.l2_error;
                assert!((e2 - r.discarded_energy).abs() <= 1e-9 * e2.max(1e-300));
            }
        }
    }

    #[test]
    fn decay_exponent_planted_power_laws() {
        let one: Vec<f64> = (0..200).map(|k| if k == 0 { 5.0 } else { 1.0 / k as f64 }).collect();
        let two: Vec<f64> = (0..200).map(|k| if k == 0 { 5.0 } else { 1.0 / (k * k) as f64 }).collect();
        assert!((decay_exponent(&one).unwrap() - 1.0).abs() < 1e-6);
        assert!((decay_exponent(&two).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn decay_exponent_errors() {
        assert!(matches!(decay_exponent(&[0.0; 20]), Err(Error::UndefinedExponent(_))));
        assert!(matches!(decay_exponent(&[1.0; 5]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn c1_signal_spectrum_decays_fast() {
        // Second antiderivative of a zero-mean sawtooth: C¹ and periodic.
        let n = 1024;
        let f = sample(n, |x| x * x * x / 6.0 - x * x / 4.0 + x / 12.0).unwrap();
        let mags = fourier_mode_magnitudes(&fourier_coefficients(f.as_slice()).unwrap());
        let s = decay_exponent(&mags[..=64]).unwrap();
        assert!(s >= 1.5, "{s}");
    }

    #[test]
    fn error_curve_analytic_signal_decreases_at_least_linearly() {
        let n = 256;
        let f = sample(n, |x| 1.0 / (1.5 - (2.0 * PI * x).cos())).unwrap();
        let base = MultiScalePlan::full(n, 0, WaveletFamily::Haar);
        let curve = error_vs_budget_curve(&f, &base, &[4, 8, 16, 32], Strategy::FourierOnly).unwrap();
        let logs: Vec<f64> = curve.iter().map(|(_, r)| r.l2_error.ln()).collect();
        let drops: Vec<f64> = logs.windows(2).map(|w| w[0] - w[1]).collect();
        assert!(drops.iter().all(|d| *d > 0.0), "{logs:?}");
        assert!(drops.windows(2).all(|w| w[1] >= w[0]), "{drops:?}");
    }

    #[test]
    fn full_budget_reconstructs() {
        let f = smooth_plus_spike(128, 0.2, 2.0, 1.0).unwrap();
        for strategy in [Strategy::FourierOnly, Strategy::WaveletOnly, Strategy::Combined] {
            let plan = MultiScalePlan::full(128, 128, WaveletFamily::Daubechies4);
            let (_, r) = approximate(&f, &plan, strategy).unwrap();
            assert!(r.l2_error <= 1e-9);
        }
    }

    #[test]
    fn combined_dominates_fourier_on_step_plus_smooth() {
        let n = 256;
        let f = sample(n, |x| (2.0 * PI * x).cos() + if x > 0.5 { 0.7 } else { 0.0 }).unwrap();
        let base = MultiScalePlan::full(n, 0, WaveletFamily::Haar);
        let budgets = [8, 16, 32, 64, 128];
        let c = error_vs_budget_curve(&f, &base, &budgets, Strategy::Combined).unwrap();
        let fo = error_vs_budget_curve(&f, &base, &budgets, Strategy::FourierOnly).unwrap();
        for ((_, a), (_, b)) in c.iter().zip(&fo) {
            assert!(a.l2_error <= b.l2_error + 1e-12);
        }
    }

    #[test]
    fn curve_rejects_descending_budgets() {
        let f = sample(16, |x| x).unwrap();
        let base = MultiScalePlan::full(16, 0, WaveletFamily::Haar);
        assert!(error_vs_budget_curve(&f, &base, &[4, 2], Strategy::Combined).is_err());
    }

    #[test]
    fn error_monotone_in_budget() {
        let f = smooth_plus_spike(128, 0.8, 2.5, 1.5).unwrap();
        let base = MultiScalePlan::full(128, 0, WaveletFamily::Daubechies4);
        let budgets: Vec<usize> = (0..=128).step_by(4).collect();
        for strategy in [Strategy::FourierOnly, Strategy::WaveletOnly, Strategy::Combined] {
            let curve = error_vs_budget_curve(&f, &base, &budgets, strategy).unwrap();
            for w in curve.windows(2) {
                assert!(w[1].1.l2_error <= w[0].1.l2_error + 1e-14);
            }
        }
    }
}
