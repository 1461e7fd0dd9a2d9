//! Gradient-descent training with weight decay and inverted dropout, the
//! Lipschitz generalization bound, and the antiderivative overfitting task.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator_net::{random_dense_net, Activation, OperatorNet};
use crate::GridFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub lambda_wd: f64,
    #[serde(default)]
    pub dropout_p: f64,
    /// Mini-batch size; 0 means full batch.
    #[serde(default)]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub renormalize_q: Option<f64>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs must be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid("learning_rate must be positive"));
        }
        if !(self.lambda_wd >= 0.0) || !self.lambda_wd.is_finite() {
            return Err(invalid("lambda_wd must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(invalid("dropout_p must lie in [0, 1)"));
        }
        if let Some(q) = self.renormalize_q {
            if !(q > 0.0 && q < 1.0) {
                return Err(invalid("renormalize_q must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenBoundInput {
    pub lipschitz_l: f64,
    pub delta: f64,
    pub n_samples: usize,
    pub empirical_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Data MSE on the training set after each epoch, dropout off.
    pub train_loss_curve: Vec<f64>,
    pub test_loss_curve: Vec<f64>,
    /// Last test loss minus last train loss.
    pub final_gap: f64,
    /// Certified bound after each epoch; empty unless renormalizing.
    pub cert_bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: GridFunction,
    pub target: GridFunction,
}

fn check_batch(net: &OperatorNet, batch: &[Sample]) -> Result<()> {
    if batch.is_empty() {
        return Err(invalid("batch must be nonempty"));
    }
    let out_dim = net.layers().last().and_then(|l| l.output_dim());
    for s in batch {
        if out_dim.is_some_and(|d| d != s.target.len()) {
            return Err(invalid("target length does not match net output"));
        }
    }
    Ok(())
}

/// Mean of squared residuals over every entry of every sample.
pub fn data_loss(net: &OperatorNet, batch: &[Sample]) -> Result<f64> {
    check_batch(net, batch)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in batch {
        let y = net.forward(&s.input)?;
        sum += y.iter().zip(s.target.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += y.len();
    }
    Ok(sum / count as f64)
}

/// `data_loss + λ Σ ‖W_i‖_F²`, biases, filters and gains excluded.
pub fn loss_total(net: &OperatorNet, batch: &[Sample], lambda_wd: f64) -> Result<f64> {
    Ok(data_loss(net, batch)? + lambda_wd * net.weight_sq_norm())
}

/// Gradient of [`loss_total`] in the layout of [`OperatorNet::params`].
pub fn grad(net: &OperatorNet, batch: &[Sample], lambda_wd: f64) -> Result<Vec<f64>> {
    grad_impl(net, batch, lambda_wd, None)
}

struct Dropout<'a> {
    p: f64,
    rng: &'a mut ChaCha8Rng,
}

fn grad_impl(net: &OperatorNet, batch: &[Sample], lambda_wd: f64, mut dropout: Option<Dropout<'_>>) -> Result<Vec<f64>> {
    check_batch(net, batch)?;
    let layers = net.layers();
    let depth = layers.len();
    let out_len: usize = batch.iter().map(|s| s.target.len()).sum();
    let mut total = vec![0.0; net.param_count()];

    for s in batch {
        // Forward pass, keeping each layer's input, pre-activation and
        // dropout scale.
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth);
        let mut scales: Vec<Option<Vec<f64>>> = Vec::with_capacity(depth);
        let mut h = s.input.as_slice().to_vec();
        for (l, layer) in layers.iter().enumerate() {
            let z = layer.preactivation(&h)?;
            let mut out: Vec<f64> = z.iter().map(|v| layer.activation.apply(*v)).collect();
            let scale = match dropout.as_mut() {
                Some(d) if l + 1 < depth && d.p > 0.0 => {
                    let (dropped, mask) = apply_dropout(&out, d.p, d.rng)?;
                    out = dropped;
                    Some(mask.iter().map(|&m| if m { 1.0 / (1.0 - d.p) } else { 0.0 }).collect())
                }
                _ => None,
            };
            inputs.push(std::mem::replace(&mut h, out));
            pre.push(z);
            scales.push(scale);
        }

        let mut g: Vec<f64> = h
            .iter()
            .zip(s.target.iter())
            .map(|(y, t)| 2.0 * (y - t) / out_len as f64)
            .collect();
        let mut per_layer: Vec<Vec<f64>> = vec![Vec::new(); depth];
        for l in (0..depth).rev() {
            if let Some(scale) = &scales[l] {
                g.iter_mut().zip(scale).for_each(|(a, b)| *a *= b);
            }
            let act = layers[l].activation;
            g.iter_mut().zip(&pre[l]).for_each(|(a, z)| *a *= act.derivative(*z));
            g = layers[l].backward(&inputs[l], &g, &mut per_layer[l])?;
        }
        for (t, v) in total.iter_mut().zip(per_layer.iter().flatten()) {
            *t += v;
        }
    }

    if lambda_wd > 0.0 {
        for ((t, p), is_w) in total.iter_mut().zip(net.params()).zip(net.weight_mask()) {
            if is_w {
                *t += 2.0 * lambda_wd * p;
            }
        }
    }
    Ok(total)
}

/// Inverted dropout in training mode: keeps each entry with probability
/// `1 − p` and rescales kept entries by `1/(1 − p)`, so `E[h̃] = h`.
/// At test time no dropout is applied.
pub fn apply_dropout<R: Rng>(h: &[f64], p: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<bool>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(invalid("dropout probability must lie in [0, 1)"));
    }
    if p == 0.0 {
        return Ok((h.to_vec(), vec![true; h.len()]));
    }
    let keep = 1.0 - p;
    let mask: Vec<bool> = h.iter().map(|_| rng.gen::<f64>() < keep).collect();
    let out = h
        .iter()
        .zip(&mask)
        .map(|(v, &m)| if m { v / keep } else { 0.0 })
        .collect();
    Ok((out, mask))
}

/// Training-mode forward pass: inverted dropout on every hidden activation,
/// none on the output layer.
pub fn forward_with_dropout<R: Rng>(net: &OperatorNet, u: &GridFunction, p: f64, rng: &mut R) -> Result<GridFunction> {
    net.check_input(u.len())?;
    let depth = net.depth();
    let mut h = u.as_slice().to_vec();
    for (l, layer) in net.layers().iter().enumerate() {
        h = layer.preactivation(&h)?.into_iter().map(|z| layer.activation.apply(z)).collect();
        if l + 1 < depth {
            h = apply_dropout(&h, p, rng)?.0;
        }
    }
    Ok(GridFunction::from_vec_unchecked(h))
}

/// `empirical_risk + L · sqrt(ln(1/δ) / (2N))`.
pub fn generalization_bound(input: &GenBoundInput) -> Result<f64> {
    let GenBoundInput { lipschitz_l, delta, n_samples, empirical_risk } = *input;
    if !(lipschitz_l >= 0.0) || !lipschitz_l.is_finite() {
        return Err(invalid("Lipschitz constant must be non-negative"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta must lie in (0, 1)"));
    }
    if n_samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    if !empirical_risk.is_finite() {
        return Err(invalid("empirical risk must be finite"));
    }
    Ok(empirical_risk + lipschitz_l * ((1.0 / delta).ln() / (2.0 * n_samples as f64)).sqrt())
}

/// Learn `f ↦ F` with `F' = f` and `F` of zero mean, on the periodic grid
/// `x_i = 2π i / grid`. Inputs are `Σ_{k=1}^{max_mode} a_k cos kx + b_k sin kx`
/// with standard normal `a_k, b_k`; the exact target is
/// `Σ (a_k sin kx − b_k cos kx) / k`. Training targets get i.i.d. Gaussian
/// noise of standard deviation `label_noise`; test targets are noisy too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AntiderivativeTask {
    pub grid: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub max_mode: usize,
    pub label_noise: f64,
}

impl Default for AntiderivativeTask {
    fn default() -> Self {
        AntiderivativeTask { grid: 64, n_train: 200, n_test: 200, max_mode: 4, label_noise: 0.3 }
    }
}

impl AntiderivativeTask {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 4 || self.n_train == 0 || self.n_test == 0 || self.max_mode == 0 {
            return Err(invalid("task needs grid >= 4 and positive sample and mode counts"));
        }
        if 2 * self.max_mode >= self.grid {
            return Err(invalid("max_mode must be below the grid Nyquist mode"));
        }
        if !(self.label_noise >= 0.0) || !self.label_noise.is_finite() {
            return Err(invalid("label_noise must be non-negative"));
        }
        Ok(())
    }

    /// Train and test sets; both are drawn from one generator seeded by `seed`.
    pub fn generate(&self, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = |rng: &mut ChaCha8Rng| -> f64 {
            // Box-Muller; u1 is kept away from zero.
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
        };
        let n = self.grid;
        let draw = |rng: &mut ChaCha8Rng| -> Sample {
            let coef: Vec<(f64, f64)> = (0..self.max_mode).map(|_| (normal(rng), normal(rng))).collect();
            let mut f = vec![0.0; n];
            let mut big_f = vec![0.0; n];
            for i in 0..n {
                let x = 2.0 * PI * i as f64 / n as f64;
                for (k, (a, b)) in coef.iter().enumerate() {
                    let k = (k + 1) as f64;
                    f[i] += a * (k * x).cos() + b * (k * x).sin();
                    big_f[i] += (a * (k * x).sin() - b * (k * x).cos()) / k;
                }
            }
            for v in &mut big_f {
                *v += self.label_noise * normal(rng);
            }
            Sample {
                input: GridFunction::from_vec_unchecked(f),
                target: GridFunction::from_vec_unchecked(big_f),
            }
        };
        let train = (0..self.n_train).map(|_| draw(&mut rng)).collect();
        let test = (0..self.n_test).map(|_| draw(&mut rng)).collect();
        Ok((train, test))
    }
}

/// Gradient descent with a fixed step from `net`. Each epoch shuffles the
/// training set into mini-batches; with `renormalize_q` the contraction
/// projection is re-applied after every update.
pub fn train(net: &OperatorNet, train_set: &[Sample], test_set: &[Sample], cfg: &TrainConfig) -> Result<(OperatorNet, TrainReport)> {
    cfg.validate()?;
    check_batch(net, train_set)?;
    check_batch(net, test_set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_d07a);
    let mut net = match cfg.renormalize_q {
        Some(q) => net.normalize_to_contraction(q)?,
        None => net.clone(),
    };
    let batch_size = if cfg.batch_size == 0 { train_set.len() } else { cfg.batch_size.min(train_set.len()) };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        train_loss_curve: Vec::with_capacity(cfg.epochs),
        test_loss_curve: Vec::with_capacity(cfg.epochs),
        final_gap: f64::NAN,
        cert_bounds: Vec::new(),
    };
    let diverged = |epoch: usize, mut report: TrainReport| {
        report.final_gap = match (report.test_loss_curve.last(), report.train_loss_curve.last()) {
            (Some(t), Some(r)) => t - r,
            _ => f64::NAN,
        };
        Err(Error::TrainingDiverged { epoch, report: Box::new(report) })
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let dropout = (cfg.dropout_p > 0.0).then(|| Dropout { p: cfg.dropout_p, rng: &mut rng });
            let g = grad_impl(&net, &batch, cfg.lambda_wd, dropout)?;
            let params: Vec<f64> = net
                .params()
                .iter()
                .zip(&g)
                .map(|(p, d)| p - cfg.learning_rate * d)
                .collect();
            if params.iter().any(|p| !p.is_finite()) {
                return diverged(epoch, report);
            }
            net = net.with_params(&params)?;
            if let Some(q) = cfg.renormalize_q {
                net = net.normalize_to_contraction(q)?;
            }
        }
        let tr = data_loss(&net, train_set)?;
        let te = data_loss(&net, test_set)?;
        if !tr.is_finite() || !te.is_finite() {
            return diverged(epoch, report);
        }
        report.train_loss_curve.push(tr);
        report.test_loss_curve.push(te);
        if cfg.renormalize_q.is_some() {
            report.cert_bounds.push(net.certify_lipschitz()?.bound);
        }
    }
    report.final_gap = report.test_loss_curve[cfg.epochs - 1] - report.train_loss_curve[cfg.epochs - 1];
    Ok((net, report))
}

/// Generates the task data and a fresh net from `cfg.seed`, then trains.
/// `widths` runs from the grid size through the hidden widths back to the
/// grid size; hidden layers use tanh and the output layer is linear.
pub fn run_experiment(task: &AntiderivativeTask, widths: &[usize], cfg: &TrainConfig) -> Result<TrainReport> {
    if widths.first() != Some(&task.grid) || widths.last() != Some(&task.grid) {
        return Err(invalid("net widths must start and end at the task grid size"));
    }
    let (train_set, test_set) = task.generate(cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1));
    let net = random_dense_net(widths, Activation::Tanh, Activation::Identity, 1.0, 0.1, &mut rng)?;
    train(&net, &train_set, &test_set, cfg).map(|(_, r)| r)
}
