//! Linear-region counting for small ReLU networks.
//!
//! In one input dimension regions are counted exactly by propagating the
//! sorted set of breakpoints layer by layer. In two dimensions the count is
//! a lower estimate: the number of distinct activation patterns seen on a
//! sample grid.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat, Vector};
use crate::operator_net::{Activation, Layer, LayerSpec, OperatorNet};

/// Breakpoints closer than this are treated as one.
const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountKind {
    Exact,
    LowerEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCount {
    pub kind: CountKind,
    pub count: u64,
    /// `⌊(n/n₀)^{n₀} n^{(L−1)n₀}⌋` for the narrowest hidden width `n`, when `n ≥ n₀`.
    pub montufar_bound: Option<u128>,
    pub input_dim: usize,
    pub widths: Vec<usize>,
}

/// `⌊(n/n₀)^{n₀} · n^{(L−1)n₀}⌋ = ⌊n^{L n₀} / n₀^{n₀}⌋`, computed exactly.
pub fn montufar_lower_bound(input_dim: usize, width: usize, depth: usize) -> Result<u128> {
    if input_dim == 0 || depth == 0 {
        return Err(invalid("input dimension and depth must be at least 1"));
    }
    if width < input_dim {
        return Err(invalid(format!(
            "bound requires width >= input dimension ({width} < {input_dim})"
        )));
    }
    let overflow = || Error::ResourceLimit("region bound overflows 128 bits".into());
    let exp = u32::try_from(depth * input_dim).map_err(|_| overflow())?;
    let num = (width as u128).checked_pow(exp).ok_or_else(overflow)?;
    let den = (input_dim as u128)
        .checked_pow(u32::try_from(input_dim).map_err(|_| overflow())?)
        .ok_or_else(overflow)?;
    Ok(num / den)
}

/// Widths of the hidden (ReLU) layers, after checking the net is a dense
/// ReLU net with the expected input dimension.
fn relu_widths(net: &OperatorNet, input_dim: usize) -> Result<Vec<usize>> {
    if net.input_dim() != Some(input_dim) {
        return Err(invalid(format!("region counting here needs input dimension {input_dim}")));
    }
    let mut widths = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        if !matches!(layer.layer, Layer::Dense { .. }) {
            return Err(invalid(format!("layer {i} is not dense")));
        }
        match layer.activation {
            Activation::Relu => widths.push(layer.output_dim().expect("dense")),
            Activation::Identity => {}
            other => return Err(invalid(format!("layer {i} uses {other:?}, expected ReLU or identity"))),
        }
    }
    Ok(widths)
}

fn bound_for(input_dim: usize, widths: &[usize]) -> Option<u128> {
    let n = *widths.iter().min()?;
    montufar_lower_bound(input_dim, n, widths.len()).ok()
}

/// Pre-activations of layer `k` at input `x`, evaluating the prefix directly.
fn prefix_preactivation(net: &OperatorNet, k: usize, x: &[f64]) -> Result<Vec<f64>> {
    let mut h = x.to_vec();
    for layer in &net.layers()[..k] {
        h = layer.preactivation(&h)?;
        h.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
    }
    net.layers()[k].preactivation(&h)
}

/// Exact number of activation regions of a scalar-input ReLU net on `[a, b]`.
///
/// Every ReLU neuron whose pre-activation changes sign strictly inside an
/// interval contributes a breakpoint there; since the prefix is affine on
/// each interval, the crossing is found by linear interpolation.
pub fn count_regions_1d(net: &OperatorNet, a: f64, b: f64, max_breakpoints: usize) -> Result<RegionCount> {
    if !(a < b) {
        return Err(invalid("domain must satisfy a < b"));
    }
    let widths = relu_widths(net, 1)?;
    let mut points = vec![a, b];
    for (k, layer) in net.layers().iter().enumerate() {
        if layer.activation != Activation::Relu {
            continue;
        }
        let z: Vec<Vec<f64>> = points
            .iter()
            .map(|&x| prefix_preactivation(net, k, &[x]))
            .collect::<Result<_>>()?;
        let mut added = Vec::new();
        for i in 0..points.len() - 1 {
            let (x0, x1) = (points[i], points[i + 1]);
            for (z0, z1) in z[i].iter().zip(&z[i + 1]) {
                if (*z0 < 0.0 && *z1 > 0.0) || (*z0 > 0.0 && *z1 < 0.0) {
                    let t = z0 / (z0 - z1);
                    added.push(x0 + t * (x1 - x0));
                }
            }
        }
        points.extend(added);
        points.sort_by(f64::total_cmp);
        points.dedup_by(|next, kept| (*next - *kept).abs() <= MERGE_TOL);
        if points.len() > max_breakpoints {
            return Err(Error::ResourceLimit(format!(
                "breakpoint count {} exceeds cap {max_breakpoints}",
                points.len()
            )));
        }
    }
    Ok(RegionCount {
        kind: CountKind::Exact,
        count: (points.len() - 1) as u64,
        montufar_bound: bound_for(1, &widths),
        input_dim: 1,
        widths,
    })
}

/// Distinct activation patterns over the `m × m` grid
/// `(a + (b−a) i/m, a + (b−a) j/m)`, `0 ≤ i, j < m`.
///
/// The grid for `m` is contained in the grid for `2m`, so the estimate
/// never decreases under doubling.
pub fn count_regions_grid(net: &OperatorNet, a: f64, b: f64, m: usize) -> Result<RegionCount> {
    if !(a < b) || m == 0 {
        return Err(invalid("need a < b and a positive grid size"));
    }
    let widths = relu_widths(net, 2)?;
    let mut patterns: HashSet<Vec<u64>> = HashSet::new();
    let total: usize = widths.iter().sum();
    for i in 0..m {
        for j in 0..m {
            let x = [a + (b - a) * i as f64 / m as f64, a + (b - a) * j as f64 / m as f64];
            let mut bits = vec![0u64; total.div_ceil(64).max(1)];
            let mut bit = 0;
            let mut h = x.to_vec();
            for layer in net.layers() {
                let z = layer.preactivation(&h)?;
                if layer.activation == Activation::Relu {
                    for v in &z {
                        if *v > 0.0 {
                            bits[bit / 64] |= 1 << (bit % 64);
                        }
                        bit += 1;
                    }
                }
                h = z.into_iter().map(|v| layer.activation.apply(v)).collect();
            }
            patterns.insert(bits);
        }
    }
    Ok(RegionCount {
        kind: CountKind::LowerEstimate,
        count: patterns.len() as u64,
        montufar_bound: bound_for(2, &widths),
        input_dim: 2,
        widths,
    })
}

/// Scalar-input ReLU net whose every hidden layer folds `[0, 1]` onto itself
/// `width` times (a zigzag with `width` linear pieces), so the composition
/// has `width^depth` linear pieces on `[0, 1]`. A final identity layer sums
/// the last zigzag.
///
/// Each weight and bias is then multiplied by `1 + δ` with `δ` uniform in
/// `[-perturbation, perturbation]`.
pub fn sawtooth_net<R: Rng>(width: usize, depth: usize, perturbation: f64, rng: &mut R) -> Result<OperatorNet> {
    if width == 0 || depth == 0 {
        return Err(invalid("width and depth must be positive"));
    }
    let n = width as f64;
    // zigzag(t) = Σ_j c_j relu(t − j/n): slopes alternate +n, −n.
    let coef: Vec<f64> = (0..width)
        .map(|j| if j == 0 { n } else if j % 2 == 1 { -2.0 * n } else { 2.0 * n })
        .collect();
    let mut jitter = |v: f64| {
        if perturbation > 0.0 {
            v * (1.0 + rng.gen_range(-perturbation..=perturbation))
        } else {
            v
        }
    };
    let mut layers = Vec::with_capacity(depth + 1);
    for l in 0..depth {
        let cols = if l == 0 { 1 } else { width };
        let w = Mat::from_fn(width, cols, |_, c| if l == 0 { 1.0 } else { coef[c] });
        let w = Mat::from_fn(width, cols, |r, c| jitter(w.get(r, c)));
        let bias = Vector::from_fn(width, |j| jitter(-(j as f64) / n));
        layers.push(LayerSpec::dense(w, bias, Activation::Relu)?);
    }
    let readout = Mat::from_fn(1, width, |_, c| jitter(coef[c]));
    layers.push(LayerSpec::dense(readout, Vector::zeros(1), Activation::Identity)?);
    OperatorNet::new(layers)
}

/// One hidden ReLU layer on 2D input whose `n` lines are tangent to a circle
/// of radius `r` at angles spread over `[0, π)` (plus `jitter` radians of
/// noise), so all pairwise intersections fall inside `[-1, 1]²` for small `n`.
pub fn tangent_lines_net<R: Rng>(n: usize, r: f64, jitter: f64, rng: &mut R) -> Result<OperatorNet> {
    if n == 0 {
        return Err(invalid("need at least one neuron"));
    }
    let angles: Vec<f64> = (0..n)
        .map(|j| {
            let noise = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
            std::f64::consts::PI * (j as f64 + 0.5) / n as f64 + noise
        })
        .collect();
    let w = Mat::from_fn(n, 2, |j, c| if c == 0 { angles[j].cos() } else { angles[j].sin() });
    let bias = Vector::from_fn(n, |_| -r);
    let readout = Mat::from_fn(1, n, |_, _| 1.0);
    OperatorNet::new(vec![
        LayerSpec::dense(w, bias, Activation::Relu)?,
        LayerSpec::dense(readout, Vector::zeros(1), Activation::Identity)?,
    ])
}

/// `1 + n + C(n, 2)`: regions cut from the plane by `n` lines in general position.
pub fn arrangement_regions_2d(n: u64) -> u64 {
    1 + n + n * n.saturating_sub(1) / 2
}
