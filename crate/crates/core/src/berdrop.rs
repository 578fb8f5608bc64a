//! Bernoulli mask optimization over one hidden layer.
//!
//! Each unit of layer `l` gets a keep probability `theta[i]`. A mask
//! `m ~ Ber(theta)` multiplies the layer's post-activation at the query and
//! the tail of the network regenerates the output from the masked vector.
//! The objective is
//!
//! ```text
//! L(theta) = || f_{L:l+1}(f_{l:1}(z0) * m) - G(z0) ||_2 + lambda * sum(theta)
//! ```
//!
//! minimized by projected gradient descent with a straight-through estimate
//! (`dm/dtheta = 1`). Units with `theta* > p` form the keep-set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Network;

/// Moving-average window used for convergence and loss smoothing.
pub const SMOOTHING_WINDOW: usize = 20;

/// Consecutive iterations the moving average must stay within tolerance.
/// Sampled losses are noisy, so a single small change means little.
pub const CONVERGENCE_PATIENCE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub layer_index: usize,
    pub theta: Vec<f64>,
}

impl MaskParams {
    pub fn uniform(layer_index: usize, width: usize, value: f64) -> Self {
        MaskParams {
            layer_index,
            theta: vec![value.clamp(0.0, 1.0); width],
        }
    }

    pub fn l1(&self) -> f64 {
        self.theta.iter().sum()
    }

    /// Hard mask `1(theta > p)`.
    pub fn threshold(&self, p: f64) -> Vec<f64> {
        self.theta
            .iter()
            .map(|&t| if t > p { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn keep_set(&self, p: f64) -> Vec<usize> {
        self.theta
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > p)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerOptConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub samples_per_step: usize,
    pub threshold_p: f64,
    pub seed: u64,
    pub convergence_tol: f64,
}

impl Default for BerOptConfig {
    fn default() -> Self {
        BerOptConfig {
            lambda: 0.01,
            learning_rate: 0.05,
            max_iters: 500,
            samples_per_step: 8,
            threshold_p: 0.5,
            seed: 0,
            convergence_tol: 1e-5,
        }
    }
}

impl BerOptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config("beropt.lambda", "must be finite and >= 0"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("beropt.learning_rate", "must be finite and > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("beropt.max_iters", "must be >= 1"));
        }
        if self.samples_per_step == 0 {
            return Err(Error::config("beropt.samples_per_step", "must be >= 1"));
        }
        if !(self.threshold_p > 0.0 && self.threshold_p < 1.0) {
            return Err(Error::config("beropt.threshold_p", "must lie strictly inside (0, 1)"));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol >= 0.0) {
            return Err(Error::config("beropt.convergence_tol", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerOptResult {
    pub theta_star: MaskParams,
    pub keep_set: Vec<usize>,
    /// Mean Monte-Carlo loss of each iteration, before its update.
    pub loss_trace: Vec<f64>,
    /// `||G_masked(z0) - G(z0)||_2` under the thresholded hard mask.
    pub distortion: f64,
    pub iterations: usize,
    /// False when `max_iters` was exhausted before the moving average settled.
    pub converged: bool,
}

impl BerOptResult {
    pub fn initial_smoothed_loss(&self) -> f64 {
        let n = self.loss_trace.len().min(SMOOTHING_WINDOW);
        self.loss_trace[..n].iter().sum::<f64>() / n as f64
    }

    pub fn final_smoothed_loss(&self) -> f64 {
        let n = self.loss_trace.len().min(SMOOTHING_WINDOW);
        self.loss_trace[self.loss_trace.len() - n..].iter().sum::<f64>() / n as f64
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("loss trace is never empty")
    }

    pub fn record(&self) -> BerOptRecord {
        BerOptRecord {
            layer_index: self.theta_star.layer_index,
            theta_star: self.theta_star.theta.clone(),
            keep_set: self.keep_set.clone(),
            final_loss: self.final_loss(),
            distortion: self.distortion,
            iterations: self.iterations,
            converged: self.converged,
        }
    }

    /// `iteration,loss` rows.
    pub fn loss_trace_csv(&self) -> String {
        let mut out = String::from("iteration,loss\n");
        for (i, l) in self.loss_trace.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

/// On-disk summary of a BerOpt run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerOptRecord {
    pub layer_index: usize,
    pub theta_star: Vec<f64>,
    pub keep_set: Vec<usize>,
    pub final_loss: f64,
    pub distortion: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Query-specific pieces of the objective, computed once per run.
#[derive(Debug, Clone)]
pub struct MaskObjective<'a> {
    net: &'a Network,
    layer: usize,
    hidden: Vec<f64>,
    target: Vec<f64>,
    lambda: f64,
}

impl<'a> MaskObjective<'a> {
    pub fn new(net: &'a Network, z0: &[f64], l: usize, lambda: f64) -> Result<Self> {
        let hidden = net.forward_to(z0, l)?.post_activation;
        let target = net.forward_from(&hidden, l)?;
        Ok(MaskObjective {
            net,
            layer: l,
            hidden,
            target,
            lambda,
        })
    }

    pub fn width(&self) -> usize {
        self.hidden.len()
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    fn check_mask(&self, mask: &[f64]) -> Result<()> {
        if mask.len() != self.width() {
            return Err(Error::Dimension {
                what: "mask",
                expected: self.width(),
                found: mask.len(),
            });
        }
        Ok(())
    }

    fn masked_hidden(&self, mask: &[f64]) -> Vec<f64> {
        self.hidden.iter().zip(mask).map(|(h, m)| h * m).collect()
    }

    pub fn masked_output(&self, mask: &[f64]) -> Result<Vec<f64>> {
        self.check_mask(mask)?;
        Ok(self.net.forward_from(&self.masked_hidden(mask), self.layer)?)
    }

    pub fn distortion(&self, mask: &[f64]) -> Result<f64> {
        let out = self.masked_output(mask)?;
        Ok(l2_distance(&out, &self.target))
    }

    pub fn loss(&self, theta: &[f64], mask: &[f64]) -> Result<f64> {
        Ok(self.distortion(mask)? + self.lambda * theta.iter().sum::<f64>())
    }

    /// Loss at `mask` and its gradient in `theta` with `dm/dtheta = 1`.
    ///
    /// The distortion term is the gradient of `||f(h0 * m) - x0||` in `m`;
    /// where the residual vanishes the subgradient 0 is used.
    pub fn straight_through(&self, theta: &[f64], mask: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_mask(mask)?;
        let h = self.masked_hidden(mask);
        let out = self.net.forward_from(&h, self.layer)?;
        let residual: Vec<f64> = out.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        let norm = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
        let loss = norm + self.lambda * theta.iter().sum::<f64>();
        let mut grad = vec![self.lambda; self.width()];
        if norm > 0.0 {
            let unit: Vec<f64> = residual.iter().map(|r| r / norm).collect();
            let gh = self.net.backprop_to_hidden(&h, self.layer, &unit)?;
            for ((g, gh), h0) in grad.iter_mut().zip(&gh).zip(&self.hidden) {
                *g += gh * h0;
            }
        }
        Ok((loss, grad))
    }

    /// Mean loss and gradient over `samples` masks drawn from `Ber(theta)`.
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        samples: usize,
        rng: &mut R,
    ) -> Result<(f64, Vec<f64>)> {
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.width()];
        let mut mask = vec![0.0; self.width()];
        for _ in 0..samples {
            sample_mask(theta, &mut mask, rng);
            let (l, g) = self.straight_through(theta, &mask)?;
            loss += l;
            for (acc, gi) in grad.iter_mut().zip(&g) {
                *acc += gi;
            }
        }
        let n = samples as f64;
        for g in &mut grad {
            *g /= n;
        }
        Ok((loss / n, grad))
    }
}

fn sample_mask<R: Rng + ?Sized>(theta: &[f64], mask: &mut [f64], rng: &mut R) {
    for (m, &t) in mask.iter_mut().zip(theta) {
        // One uniform draw per unit regardless of theta keeps streams aligned.
        let u: f64 = rng.random();
        *m = if u < t { 1.0 } else { 0.0 };
    }
}

pub(crate) fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `f_{L:l+1}(f_{l:1}(z0) * mask)`.
pub fn masked_forward(net: &Network, z0: &[f64], l: usize, mask: &[f64]) -> Result<Vec<f64>> {
    MaskObjective::new(net, z0, l, 0.0)?.masked_output(mask)
}

/// Distortion of the masked output plus `lambda * ||theta||_1`.
pub fn beropt_loss(
    net: &Network,
    z0: &[f64],
    l: usize,
    theta: &MaskParams,
    mask: &[f64],
    lambda: f64,
) -> Result<f64> {
    if theta.theta.len() != net.layer_dim(l) {
        return Err(Error::Dimension {
            what: "theta",
            expected: net.layer_dim(l),
            found: theta.theta.len(),
        });
    }
    MaskObjective::new(net, z0, l, lambda)?.loss(&theta.theta, mask)
}

/// Projected descent update: `clamp(theta - lr * grad, 0, 1)`.
pub fn apply_gradient(theta: &mut MaskParams, grad: &[f64], learning_rate: f64) {
    for (t, g) in theta.theta.iter_mut().zip(grad) {
        *t = (*t - learning_rate * g).clamp(0.0, 1.0);
    }
}

/// One BerOpt iteration. Returns the mean sampled loss before the update.
pub fn gradient_step<R: Rng + ?Sized>(
    net: &Network,
    z0: &[f64],
    l: usize,
    theta: &mut MaskParams,
    cfg: &BerOptConfig,
    rng: &mut R,
) -> Result<f64> {
    let objective = MaskObjective::new(net, z0, l, cfg.lambda)?;
    if theta.theta.len() != objective.width() {
        return Err(Error::Dimension {
            what: "theta",
            expected: objective.width(),
            found: theta.theta.len(),
        });
    }
    let (loss, grad) = objective.estimate(&theta.theta, cfg.samples_per_step, rng)?;
    apply_gradient(theta, &grad, cfg.learning_rate);
    Ok(loss)
}

/// Runs mask optimization for query `z0` at layer `l`.
pub fn beropt(net: &Network, z0: &[f64], l: usize, cfg: &BerOptConfig) -> Result<BerOptResult> {
    cfg.validate()?;
    let objective = MaskObjective::new(net, z0, l, cfg.lambda)?;
    let mut theta = MaskParams::uniform(l, objective.width(), 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    let mut settled = 0;

    for _ in 0..cfg.max_iters {
        let (loss, grad) = objective.estimate(&theta.theta, cfg.samples_per_step, &mut rng)?;
        trace.push(loss);
        apply_gradient(&mut theta, &grad, cfg.learning_rate);

        let n = trace.len();
        if n >= 2 * SMOOTHING_WINDOW {
            let w = SMOOTHING_WINDOW;
            let recent = trace[n - w..].iter().sum::<f64>();
            let before = trace[n - 2 * w..n - w].iter().sum::<f64>();
            if ((recent - before) / w as f64).abs() < cfg.convergence_tol {
                settled += 1;
                if settled >= CONVERGENCE_PATIENCE {
                    converged = true;
                    break;
                }
            } else {
                settled = 0;
            }
        }
    }

    let keep_set = theta.keep_set(cfg.threshold_p);
    let distortion = objective.distortion(&theta.threshold(cfg.threshold_p))?;
    Ok(BerOptResult {
        iterations: trace.len(),
        theta_star: theta,
        keep_set,
        loss_trace: trace,
        distortion,
        converged,
    })
}
