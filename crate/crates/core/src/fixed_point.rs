//! Banach fixed-point iteration of certified contractions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator_net::OperatorNet;
use crate::GridFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    /// Applications of the map until the stopping rule held.
    pub iterations_run: usize,
    /// `‖u_n − u*‖₂` for `n = 0..=iterations_run`.
    pub error_trace: Vec<f64>,
    /// Largest one-step error ratio above the round-off plateau.
    pub empirical_q: f64,
    /// Iterations predicted from the certificate and the initial error.
    pub predicted_n: usize,
    /// Certified contraction constant used for the stopping rule.
    pub certified_q: f64,
    pub fixed_point: GridFunction,
}

/// Smallest `n` with `q^n · initial_error ≤ eps`, i.e.
/// `⌈ln(initial_error / eps) / ln(1/q)⌉`.
pub fn predict_iterations(initial_error: f64, eps: f64, q: f64) -> Result<usize> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("contraction constant q = {q} must lie in (0, 1)")));
    }
    if !(eps > 0.0) || !(initial_error >= 0.0) {
        return Err(invalid("eps must be positive and initial_error non-negative"));
    }
    if initial_error <= eps {
        return Ok(0);
    }
    let n = (initial_error / eps).ln() / (1.0 / q).ln();
    // Absorb round-off so exact integer ratios are not bumped up by one.
    Ok((n - 1e-9).ceil().max(0.0) as usize)
}

/// Iterates `u ← G(u)` until `‖u_{n+1} − u_n‖ ≤ eps (1−q)/q`, which bounds
/// the true error by `eps`.
///
/// After stopping, the iteration continues until round-off to pin down the
/// fixed point used for the error trace.
pub fn iterate_to_fixed_point(
    net: &OperatorNet,
    u0: &GridFunction,
    eps: f64,
    max_iter: usize,
) -> Result<FixedPointReport> {
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    let q = net.certify_lipschitz()?.bound;
    if q >= 1.0 {
        return Err(Error::ContractViolation(format!(
            "certified bound {q} is not a contraction"
        )));
    }
    let threshold = if q == 0.0 { f64::INFINITY } else { eps * (1.0 - q) / q };

    let mut iterates = vec![u0.clone()];
    let mut converged = false;
    while iterates.len() <= max_iter {
        let prev = iterates.last().expect("nonempty");
        let next = net.forward(prev)?;
        let step = next.distance(prev)?;
        iterates.push(next);
        if step <= threshold {
            converged = true;
            break;
        }
    }
    let iterations_run = iterates.len() - 1;

    let fixed_point = polish(net, iterates.last().expect("nonempty"), 10 * iterations_run + 100)?;
    let error_trace = iterates
        .iter()
        .map(|u| u.distance(&fixed_point))
        .collect::<Result<Vec<_>>>()?;
    let empirical_q = empirical_ratio(&error_trace, fixed_point.norm2());
    let predicted_n = if q == 0.0 {
        usize::from(error_trace[0] > eps)
    } else {
        predict_iterations(error_trace[0], eps, q)?
    };
    let report = FixedPointReport {
        iterations_run,
        error_trace,
        empirical_q,
        predicted_n,
        certified_q: q,
        fixed_point,
    };
    if converged {
        Ok(report)
    } else {
        Err(Error::FixedPointNotConverged(Box::new(report)))
    }
}

/// Keeps iterating until the step stalls at round-off or `extra` runs out.
fn polish(net: &OperatorNet, start: &GridFunction, extra: usize) -> Result<GridFunction> {
    let mut u = start.clone();
    let mut last_step = f64::INFINITY;
    for _ in 0..extra {
        let next = net.forward(&u)?;
        let step = next.distance(&u)?;
        u = next;
        let floor = 1e-15 * u.norm2().max(1e-300);
        // Past this point steps no longer shrink geometrically.
        if step == 0.0 || (step >= last_step && step <= 1e3 * floor) {
            break;
        }
        last_step = step;
    }
    Ok(u)
}

fn empirical_ratio(trace: &[f64], fixed_norm: f64) -> f64 {
    let plateau = 1e-12 * fixed_norm.max(trace[0]);
    trace
        .windows(2)
        .filter(|w| w[0] > plateau && w[1] > plateau)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max)
}

/// True iff `error_trace[n] ≤ q^n · initial_error + 1e-9` for every `n`.
pub fn verify_exponential_bound(report: &FixedPointReport, q: f64, initial_error: f64) -> bool {
    report
        .error_trace
        .iter()
        .enumerate()
        .all(|(n, e)| *e <= q.powi(n as i32) * initial_error + 1e-9)
}
