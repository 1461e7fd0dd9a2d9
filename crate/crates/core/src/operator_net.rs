//! Layered operator networks `G = σ_N ∘ f_N ∘ ... ∘ σ_1 ∘ f_1`, their
//! composed Lipschitz certificates, and contraction enforcement by clipping
//! each layer's operator norm to `q^{1/N}`.
//!
//! Three layer kinds are supported:
//!
//! * `Dense`: `x ↦ W x + b`, Lipschitz constant `‖W‖₂`.
//! * `SpectralMultiplier`: `x ↦ W x + F⁻¹(R · F x)` on a periodic grid, with
//!   the low-mode filter `R` extended by conjugate symmetry so outputs stay
//!   real. Modes beyond the filter length are dropped. Certified with the
//!   triangle-inequality bound `‖W‖₂ + max_k |R_k|`.
//! * `WaveletGain`: scales each band of an orthonormal DWT by a gain, so its
//!   Lipschitz constant is exactly `max |gain|`.
//!
//! Biases never enter a Lipschitz constant and are left alone by
//! normalization.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat, Vector, CERT_MAX_ITER, CERT_TOL};
use crate::transforms::{self, WaveletDecomp, WaveletFamily};
use crate::GridFunction;

/// Relative slack under which a layer already meets its normalization cap.
const CAP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Relu | Activation::Tanh | Activation::Identity => 1.0,
            Activation::Sigmoid => 0.25,
        }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z` (ReLU uses 0 at the kink).
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense {
        weight: Mat,
        bias: Vector,
    },
    SpectralMultiplier {
        /// `R_k` for modes `k = 0..filter.len()`; imaginary parts of the DC
        /// and Nyquist entries are ignored.
        filter: Vec<Complex64>,
        /// Pointwise linear term, `N × N`.
        weight: Mat,
    },
    WaveletGain {
        family: WaveletFamily,
        /// Gain of detail level `j` (finest first); the last gain also
        /// scales the approximation band.
        gains: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub layer: Layer,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(weight: Mat, bias: Vector, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(invalid(format!(
                "dense bias has {} entries, weight has {} rows",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Self {
            layer: Layer::Dense { weight, bias },
            activation,
        })
    }

    pub fn spectral(filter: Vec<Complex64>, weight: Mat, activation: Activation) -> Result<Self> {
        let n = weight.rows();
        if weight.cols() != n || n < 2 || !n.is_power_of_two() {
            return Err(invalid(
                "spectral multiplier weight must be square with power-of-two size >= 2",
            ));
        }
        if filter.is_empty() || filter.len() > n / 2 + 1 {
            return Err(invalid(format!(
                "spectral filter length {} must be in 1..={}",
                filter.len(),
                n / 2 + 1
            )));
        }
        if filter.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(invalid("spectral filter entries must be finite"));
        }
        Ok(Self {
            layer: Layer::SpectralMultiplier { filter, weight },
            activation,
        })
    }

    pub fn wavelet_gain(family: WaveletFamily, gains: Vec<f64>, activation: Activation) -> Result<Self> {
        if gains.is_empty() || gains.iter().any(|g| !g.is_finite()) {
            return Err(invalid("wavelet gains must be nonempty and finite"));
        }
        Ok(Self {
            layer: Layer::WaveletGain { family, gains },
            activation,
        })
    }

    /// Fixed input width, or `None` for layers that accept any admissible length.
    pub fn input_dim(&self) -> Option<usize> {
        match &self.layer {
            Layer::Dense { weight, .. } => Some(weight.cols()),
            Layer::SpectralMultiplier { weight, .. } => Some(weight.cols()),
            Layer::WaveletGain { .. } => None,
        }
    }

    pub fn output_dim(&self) -> Option<usize> {
        match &self.layer {
            Layer::Dense { weight, .. } => Some(weight.rows()),
            Layer::SpectralMultiplier { weight, .. } => Some(weight.rows()),
            Layer::WaveletGain { .. } => None,
        }
    }

    fn accepts(&self, n: usize) -> bool {
        match &self.layer {
            Layer::WaveletGain { gains, .. } => {
                n.is_power_of_two() && gains.len() <= transforms::max_levels(n)
            }
            _ => self.input_dim() == Some(n),
        }
    }

    /// Certified Lipschitz constant of the affine part.
    pub fn lipschitz(&self) -> Result<f64> {
        match &self.layer {
            Layer::Dense { weight, .. } => operator_norm(weight),
            Layer::SpectralMultiplier { filter, weight } => {
                let rmax = filter.iter().map(|c| c.norm()).fold(0.0, f64::max);
                Ok(operator_norm(weight)? + rmax)
            }
            Layer::WaveletGain { gains, .. } => Ok(gains.iter().map(|g| g.abs()).fold(0.0, f64::max)),
        }
    }

    fn scaled(&self, c: f64) -> LayerSpec {
        let layer = match &self.layer {
            Layer::Dense { weight, bias } => Layer::Dense {
                weight: weight.scale(c),
                bias: bias.clone(),
            },
            Layer::SpectralMultiplier { filter, weight } => Layer::SpectralMultiplier {
                filter: filter.iter().map(|r| r * c).collect(),
                weight: weight.scale(c),
            },
            Layer::WaveletGain { family, gains } => Layer::WaveletGain {
                family: *family,
                gains: gains.iter().map(|g| g * c).collect(),
            },
        };
        LayerSpec {
            layer,
            activation: self.activation,
        }
    }

    /// Affine part `f_i(x)`, before the activation.
    pub(crate) fn preactivation(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.layer {
            Layer::Dense { weight, bias } => {
                let mut z = weight.apply(x);
                z.iter_mut().zip(bias.iter()).for_each(|(a, b)| *a += b);
                Ok(z)
            }
            Layer::SpectralMultiplier { filter, weight } => {
                let mut z = weight.apply(x);
                let conv = spectral_conv(x, filter, false)?;
                z.iter_mut().zip(&conv).for_each(|(a, b)| *a += b);
                Ok(z)
            }
            Layer::WaveletGain { family, gains } => wavelet_gain_apply(x, *family, gains),
        }
    }

    fn param_count(&self) -> usize {
        match &self.layer {
            Layer::Dense { weight, bias } => weight.as_slice().len() + bias.len(),
            Layer::SpectralMultiplier { filter, weight } => weight.as_slice().len() + 2 * filter.len(),
            Layer::WaveletGain { gains, .. } => gains.len(),
        }
    }

    fn push_params(&self, out: &mut Vec<f64>) {
        match &self.layer {
            Layer::Dense { weight, bias } => {
                out.extend_from_slice(weight.as_slice());
                out.extend_from_slice(bias.as_slice());
            }
            Layer::SpectralMultiplier { filter, weight } => {
                out.extend_from_slice(weight.as_slice());
                for r in filter {
                    out.push(r.re);
                    out.push(r.im);
                }
            }
            Layer::WaveletGain { gains, .. } => out.extend_from_slice(gains),
        }
    }

    fn push_weight_mask(&self, out: &mut Vec<bool>) {
        match &self.layer {
            Layer::Dense { weight, bias } => {
                out.extend(std::iter::repeat(true).take(weight.as_slice().len()));
                out.extend(std::iter::repeat(false).take(bias.len()));
            }
            Layer::SpectralMultiplier { filter, weight } => {
                out.extend(std::iter::repeat(true).take(weight.as_slice().len()));
                out.extend(std::iter::repeat(false).take(2 * filter.len()));
            }
            Layer::WaveletGain { gains, .. } => out.extend(std::iter::repeat(false).take(gains.len())),
        }
    }

    fn load_params(&mut self, src: &[f64]) -> Result<()> {
        match &mut self.layer {
            Layer::Dense { weight, bias } => {
                let nw = weight.as_slice().len();
                weight.as_mut_slice().copy_from_slice(&src[..nw]);
                *bias = Vector::new(src[nw..].to_vec())?;
            }
            Layer::SpectralMultiplier { filter, weight } => {
                let nw = weight.as_slice().len();
                weight.as_mut_slice().copy_from_slice(&src[..nw]);
                for (r, pair) in filter.iter_mut().zip(src[nw..].chunks_exact(2)) {
                    *r = Complex64::new(pair[0], pair[1]);
                }
            }
            Layer::WaveletGain { gains, .. } => gains.copy_from_slice(src),
        }
        Ok(())
    }

    /// Backpropagates `g_z = ∂L/∂z` through the affine part given its input
    /// `x`; appends parameter gradients to `grads` and returns `∂L/∂x`.
    pub(crate) fn backward(&self, x: &[f64], g_z: &[f64], grads: &mut Vec<f64>) -> Result<Vec<f64>> {
        match &self.layer {
            Layer::Dense { weight, .. } => {
                push_outer(grads, g_z, x);
                grads.extend_from_slice(g_z);
                Ok(weight.apply_transpose(g_z))
            }
            Layer::SpectralMultiplier { filter, weight } => {
                push_outer(grads, g_z, x);
                let n = x.len();
                let mut u = transforms::ComplexVec::from_real(x).0;
                let mut g = transforms::ComplexVec::from_real(g_z).0;
                transforms::fft_in_place(&mut u, false)?;
                transforms::fft_in_place(&mut g, false)?;
                for k in 0..filter.len() {
                    let p = u[k] * g[k].conj();
                    if k == 0 || 2 * k == n {
                        grads.push(p.re / n as f64);
                        grads.push(0.0);
                    } else {
                        grads.push(2.0 * p.re / n as f64);
                        grads.push(-2.0 * p.im / n as f64);
                    }
                }
                let mut gx = weight.apply_transpose(g_z);
                let adj = spectral_conv(g_z, filter, true)?;
                gx.iter_mut().zip(&adj).for_each(|(a, b)| *a += b);
                Ok(gx)
            }
            Layer::WaveletGain { family, gains } => {
                let levels = gains.len();
                let cx = transforms::dwt(x, *family, levels)?;
                let cg = transforms::dwt(g_z, *family, levels)?;
                for j in 0..levels {
                    let mut acc = crate::linalg::dot(&cx.details[j], &cg.details[j]);
                    if j == levels - 1 {
                        acc += crate::linalg::dot(&cx.approx, &cg.approx);
                    }
                    grads.push(acc);
                }
                wavelet_gain_apply(g_z, *family, gains)
            }
        }
    }
}

fn push_outer(out: &mut Vec<f64>, a: &[f64], b: &[f64]) {
    for ai in a {
        out.extend(b.iter().map(|bj| ai * bj));
    }
}

fn operator_norm(m: &Mat) -> Result<f64> {
    if m.is_zero() {
        return Ok(0.0);
    }
    m.spectral_norm(CERT_TOL, CERT_MAX_ITER)
}

/// Real part of `F⁻¹(R · F x)`, with `R` extended to negative modes by
/// conjugate symmetry. With `adjoint`, applies `conj(R)` instead.
fn spectral_conv(x: &[f64], filter: &[Complex64], adjoint: bool) -> Result<Vec<f64>> {
    let n = x.len();
    let mut u = transforms::ComplexVec::from_real(x).0;
    transforms::fft_in_place(&mut u, false)?;
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for (k, r) in filter.iter().enumerate() {
        if k == 0 || 2 * k == n {
            v[k] = u[k] * r.re;
        } else {
            let r = if adjoint { r.conj() } else { *r };
            v[k] = u[k] * r;
            v[n - k] = u[n - k] * r.conj();
        }
    }
    transforms::fft_in_place(&mut v, true)?;
    Ok(v.into_iter().map(|c| c.re).collect())
}

fn wavelet_gain_apply(x: &[f64], family: WaveletFamily, gains: &[f64]) -> Result<Vec<f64>> {
    let levels = gains.len();
    let mut d: WaveletDecomp = transforms::dwt(x, family, levels)?;
    for (level, g) in d.details.iter_mut().zip(gains) {
        level.iter_mut().for_each(|c| *c *= g);
    }
    let last = gains[levels - 1];
    d.approx.iter_mut().for_each(|c| *c *= last);
    transforms::idwt(&d)
}

/// Composed Lipschitz bound `L ≤ (∏ L_i) · ∏ L_σi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub per_layer_lipschitz: Vec<f64>,
    pub activation_lipschitz: Vec<f64>,
    pub bound: f64,
    pub target_q: Option<f64>,
}

impl ContractionCertificate {
    pub fn from_parts(per_layer: Vec<f64>, activation: Vec<f64>, target_q: Option<f64>) -> Self {
        let bound = Self::product(&per_layer, &activation);
        Self {
            per_layer_lipschitz: per_layer,
            activation_lipschitz: activation,
            bound,
            target_q,
        }
    }

    fn product(per_layer: &[f64], activation: &[f64]) -> f64 {
        per_layer.iter().product::<f64>() * activation.iter().product::<f64>()
    }

    pub fn recompute_bound(&self) -> f64 {
        Self::product(&self.per_layer_lipschitz, &self.activation_lipschitz)
    }

    pub fn is_contraction(&self) -> bool {
        self.bound < 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorNet {
    layers: Vec<LayerSpec>,
}

impl OperatorNet {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("an operator net needs at least one layer"));
        }
        let mut dim: Option<usize> = None;
        for (i, layer) in layers.iter().enumerate() {
            if let Some(d) = dim {
                if !layer.accepts(d) {
                    return Err(invalid(format!(
                        "layer {i} cannot accept input of width {d}"
                    )));
                }
            }
            dim = layer.output_dim().or(dim);
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Input width, if some layer pins it.
    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(LayerSpec::input_dim)
    }

    pub(crate) fn check_input(&self, n: usize) -> Result<()> {
        let mut d = n;
        for (i, layer) in self.layers.iter().enumerate() {
            if !layer.accepts(d) {
                return Err(invalid(format!(
                    "layer {i} cannot accept input of width {d}"
                )));
            }
            d = layer.output_dim().unwrap_or(d);
        }
        Ok(())
    }

    pub fn forward(&self, u: &GridFunction) -> Result<GridFunction> {
        self.check_input(u.len())?;
        let mut x = u.as_slice().to_vec();
        for layer in &self.layers {
            x = layer.preactivation(&x)?;
            x.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
        }
        GridFunction::new(x)
    }

    pub fn certify_lipschitz(&self) -> Result<ContractionCertificate> {
        let per_layer = self
            .layers
            .iter()
            .map(LayerSpec::lipschitz)
            .collect::<Result<Vec<_>>>()?;
        let activation = self.layers.iter().map(|l| l.activation.lipschitz()).collect();
        Ok(ContractionCertificate::from_parts(per_layer, activation, None))
    }

    /// Clips every layer to the per-layer cap `q^{1/N}`, leaving layers that
    /// already meet it untouched. The result certifies at most `q` (up to
    /// power-iteration tolerance).
    pub fn normalize_to_contraction(&self, q: f64) -> Result<OperatorNet> {
        if !(q > 0.0 && q < 1.0) {
            return Err(invalid(format!("contraction target q = {q} must lie in (0, 1)")));
        }
        if let Some(l) = self.layers.iter().find(|l| l.activation.lipschitz() > 1.0) {
            return Err(Error::ContractViolation(format!(
                "activation {:?} has Lipschitz constant above 1",
                l.activation
            )));
        }
        let cap = q.powf(1.0 / self.layers.len() as f64);
        let layers = self
            .layers
            .iter()
            .map(|layer| {
                let l = layer.lipschitz()?;
                Ok(if l > cap * (1.0 + CAP_SLACK) {
                    layer.scaled(cap / l)
                } else {
                    layer.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OperatorNet { layers })
    }

    /// `(‖G(u)‖, L‖u‖ + ‖G(0)‖)` for the certified bound `L`.
    pub fn stability_envelope(&self, u: &GridFunction) -> Result<(f64, f64)> {
        let cert = self.certify_lipschitz()?;
        let lhs = self.forward(u)?.norm2();
        let g0 = self.forward(&GridFunction::zeros(u.len()))?.norm2();
        Ok((lhs, cert.bound * u.norm2() + g0))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// All parameters, layer by layer: weights row-major, then biases or
    /// `(re, im)` filter pairs or gains.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            layer.push_params(&mut out);
        }
        out
    }

    /// Marks the entries of [`OperatorNet::params`] that belong to weight matrices.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            layer.push_weight_mask(&mut out);
        }
        out
    }

    pub fn with_params(&self, params: &[f64]) -> Result<OperatorNet> {
        if params.len() != self.param_count() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("parameters must be finite"));
        }
        let mut net = self.clone();
        let mut offset = 0;
        for layer in &mut net.layers {
            let k = layer.param_count();
            layer.load_params(&params[offset..offset + k])?;
            offset += k;
        }
        Ok(net)
    }

    /// Sum of squared Frobenius norms of all weight matrices.
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| match &l.layer {
                Layer::Dense { weight, .. } | Layer::SpectralMultiplier { weight, .. } => {
                    weight.frobenius_norm().powi(2)
                }
                Layer::WaveletGain { .. } => 0.0,
            })
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NetDocument::from(self)).expect("net documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetDocument = serde_json::from_str(text).map_err(|e| {
            invalid(format!("net document line {} column {}: {e}", e.line(), e.column()))
        })?;
        doc.try_into()
    }
}

/// Dense net with the given layer widths. Weights are uniform with variance
/// `gain² / fan_in`, biases uniform in `[-bias_scale, bias_scale]`.
pub fn random_dense_net<R: Rng>(
    widths: &[usize],
    hidden: Activation,
    last: Activation,
    gain: f64,
    bias_scale: f64,
    rng: &mut R,
) -> Result<OperatorNet> {
    if widths.len() < 2 {
        return Err(invalid("need at least input and output widths"));
    }
    let depth = widths.len() - 1;
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let a = gain * (3.0 / w[0] as f64).sqrt();
            let weight = Mat::from_fn(w[1], w[0], |_, _| rng.gen_range(-a..=a));
            let bias = Vector::from_fn(w[1], |_| {
                if bias_scale > 0.0 {
                    rng.gen_range(-bias_scale..=bias_scale)
                } else {
                    0.0
                }
            });
            let act = if i + 1 == depth { last } else { hidden };
            LayerSpec::dense(weight, bias, act)
        })
        .collect::<Result<Vec<_>>>()?;
    OperatorNet::new(layers)
}

/// Spectral-multiplier layer on an `n`-point grid with `modes` random
/// low-mode filter entries and a random pointwise weight.
pub fn random_spectral_layer<R: Rng>(
    n: usize,
    modes: usize,
    activation: Activation,
    rng: &mut R,
) -> Result<LayerSpec> {
    let a = (3.0 / n as f64).sqrt();
    let weight = Mat::from_fn(n, n, |_, _| rng.gen_range(-a..=a));
    let filter = (0..modes)
        .map(|_| Complex64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
        .collect();
    LayerSpec::spectral(filter, weight, activation)
}

pub fn random_wavelet_layer<R: Rng>(
    levels: usize,
    family: WaveletFamily,
    activation: Activation,
    rng: &mut R,
) -> Result<LayerSpec> {
    let gains = (0..levels).map(|_| rng.gen_range(-1.5..=1.5)).collect();
    LayerSpec::wavelet_gain(family, gains, activation)
}

const NET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetDocument {
    version: u32,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
enum LayerDoc {
    Dense {
        rows: usize,
        cols: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    },
    SpectralMultiplier {
        n: usize,
        filter_re: Vec<f64>,
        filter_im: Vec<f64>,
        weight: Vec<f64>,
        activation: Activation,
    },
    WaveletGain {
        family: WaveletFamily,
        gains: Vec<f64>,
        activation: Activation,
    },
}

impl From<&OperatorNet> for NetDocument {
    fn from(net: &OperatorNet) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match &l.layer {
                Layer::Dense { weight, bias } => LayerDoc::Dense {
                    rows: weight.rows(),
                    cols: weight.cols(),
                    weight: weight.as_slice().to_vec(),
                    bias: bias.as_slice().to_vec(),
                    activation: l.activation,
                },
                Layer::SpectralMultiplier { filter, weight } => LayerDoc::SpectralMultiplier {
                    n: weight.rows(),
                    filter_re: filter.iter().map(|c| c.re).collect(),
                    filter_im: filter.iter().map(|c| c.im).collect(),
                    weight: weight.as_slice().to_vec(),
                    activation: l.activation,
                },
                Layer::WaveletGain { family, gains } => LayerDoc::WaveletGain {
                    family: *family,
                    gains: gains.clone(),
                    activation: l.activation,
                },
            })
            .collect();
        NetDocument {
            version: NET_FORMAT_VERSION,
            layers,
        }
    }
}

impl TryFrom<NetDocument> for OperatorNet {
    type Error = Error;

    fn try_from(doc: NetDocument) -> Result<Self> {
        if doc.version != NET_FORMAT_VERSION {
            return Err(invalid(format!(
                "unsupported net format version {} (expected {NET_FORMAT_VERSION})",
                doc.version
            )));
        }
        let layers = doc
            .layers
            .into_iter()
            .map(|l| match l {
                LayerDoc::Dense {
                    rows,
                    cols,
                    weight,
                    bias,
                    activation,
                } => LayerSpec::dense(Mat::new(rows, cols, weight)?, Vector::new(bias)?, activation),
                LayerDoc::SpectralMultiplier {
                    n,
                    filter_re,
                    filter_im,
                    weight,
                    activation,
                } => {
                    let filter = transforms::ComplexVec::from_parts(&filter_re, &filter_im)?.0;
                    LayerSpec::spectral(filter, Mat::new(n, n, weight)?, activation)
                }
                LayerDoc::WaveletGain {
                    family,
                    gains,
                    activation,
                } => LayerSpec::wavelet_gain(family, gains, activation),
            })
            .collect::<Result<Vec<_>>>()?;
        OperatorNet::new(layers)
    }
}

/// Largest `‖G(u) - G(v)‖ / ‖u - v‖` over random pairs, half of them far
/// apart and half nearby perturbations.
pub fn sampled_lipschitz<R: Rng>(net: &OperatorNet, dim: usize, pairs: usize, rng: &mut R) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..pairs {
        let u = Vector::from_fn(dim, |_| rng.gen_range(-2.0..2.0));
        let scale = if i % 2 == 0 { 1.0 } else { 1e-3 };
        let v = Vector::from_fn(dim, |k| u[k] + scale * rng.gen_range(-1.0..1.0));
        let du = u.distance(&v)?;
        if du == 0.0 {
            continue;
        }
        let dg = net.forward(&u)?.distance(&net.forward(&v)?)?;
        worst = worst.max(dg / du);
    }
    Ok(worst)
}
