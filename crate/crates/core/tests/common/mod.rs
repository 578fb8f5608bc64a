#![allow(dead_code)]

use gbas_core::{ActivationKind, Layer, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SMOOTH: [ActivationKind; 4] = [
    ActivationKind::Tanh,
    ActivationKind::Sigmoid,
    ActivationKind::Identity,
    ActivationKind::Tanh,
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Dense net with `dims = [latent, d1, ..]`, weights in [-1, 1] scaled by
/// `1/sqrt(in)`, biases in [-0.5, 0.5].
pub fn random_net(rng: &mut impl Rng, dims: &[usize], acts: &[ActivationKind]) -> Network {
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let scale = 1.0 / (w[0] as f64).sqrt();
            let weight = (0..w[0] * w[1])
                .map(|_| rng.random_range(-1.0..1.0) * scale * 1.5)
                .collect();
            let bias = uniform_vec(rng, w[1], -0.5, 0.5);
            Layer::new(w[0], w[1], acts[k % acts.len()], weight, bias)
        })
        .collect();
    Network::new(dims[0], layers).unwrap()
}

/// Random dims for a net with a 1..=4 layer stack.
pub fn random_dims(rng: &mut impl Rng, latent: usize) -> Vec<usize> {
    let depth = rng.random_range(1..=4);
    let mut dims = vec![latent];
    dims.extend((0..depth).map(|_| rng.random_range(1..=9)));
    dims
}

/// Independent dense evaluation of one layer: returns `(W x + b, act(W x + b))`.
pub fn oracle_layer(layer: &Layer, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pre = Vec::with_capacity(layer.out_dim);
    for i in 0..layer.out_dim {
        let mut s = 0.0;
        for (j, xj) in x.iter().enumerate() {
            s += layer.weight[i * layer.in_dim + j] * xj;
        }
        pre.push(s + layer.bias[i]);
    }
    let post = pre
        .iter()
        .map(|&v| match layer.activation {
            ActivationKind::Relu => v.max(0.0),
            ActivationKind::LeakyRelu { slope } => {
                if v >= 0.0 {
                    v
                } else {
                    slope * v
                }
            }
            ActivationKind::Tanh => v.tanh(),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            ActivationKind::Identity => v,
        })
        .collect();
    (pre, post)
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
