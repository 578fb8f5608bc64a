//! Small generators and discriminators for desk-scale experiments.
//!
//! * `RandomMlp` draws every weight from `N(0, 2 / in_dim)` and every bias
//!   from `N(0, 0.01)`.
//! * `Handcrafted2D` is a fixed `2 -> 8 -> 16 -> 64` generator whose output
//!   is an 8x8 plaid image (see [`handcrafted_2d`]).
//! * `Trained2DMnistLike` keeps two seeded random hidden layers and fits the
//!   output layer by ridge regression so that each angular sector of the
//!   latent plane renders a different 8x8 glyph.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ActivationKind, Layer, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    RandomMlp,
    Trained2dMnistLike,
    Handcrafted2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModelSpec {
    pub kind: ToyKind,
    /// Layer widths including the input, e.g. `[2, 8, 4]`. Ignored by
    /// `Handcrafted2d`; `Trained2dMnistLike` requires a 64-wide output.
    #[serde(default)]
    pub dims: Vec<usize>,
    /// Hidden-layer activation. The output layer uses `output_activation`.
    pub activation: ActivationKind,
    #[serde(default = "default_output_activation")]
    pub output_activation: ActivationKind,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_activation() -> ActivationKind {
    ActivationKind::Identity
}

impl ToyModelSpec {
    pub fn random_mlp(dims: &[usize], activation: ActivationKind, seed: u64) -> Self {
        ToyModelSpec {
            kind: ToyKind::RandomMlp,
            dims: dims.to_vec(),
            activation,
            output_activation: ActivationKind::Identity,
            seed,
        }
    }

    pub fn handcrafted_2d() -> Self {
        ToyModelSpec {
            kind: ToyKind::Handcrafted2d,
            dims: vec![2, 8, 16, 64],
            activation: ActivationKind::Tanh,
            output_activation: ActivationKind::Sigmoid,
            seed: 0,
        }
    }

    pub fn trained_2d_mnist_like(seed: u64) -> Self {
        ToyModelSpec {
            kind: ToyKind::Trained2dMnistLike,
            dims: vec![2, 16, 32, 64],
            activation: ActivationKind::Tanh,
            output_activation: ActivationKind::Identity,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kind == ToyKind::Handcrafted2d {
            return Ok(());
        }
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(Error::config(
                "toy.dims",
                "need at least an input and an output width, all positive",
            ));
        }
        if self.kind == ToyKind::Trained2dMnistLike
            && (self.dims[0] != 2 || *self.dims.last().unwrap() != 64 || self.dims.len() < 3)
        {
            return Err(Error::config(
                "toy.dims",
                "trained_2d_mnist_like needs a 2-D input, at least one hidden layer and 64 outputs",
            ));
        }
        Ok(())
    }
}

pub fn make_toy_model(spec: &ToyModelSpec) -> Result<Network> {
    spec.validate()?;
    match spec.kind {
        ToyKind::RandomMlp => random_mlp(spec),
        ToyKind::Handcrafted2d => handcrafted_2d(),
        ToyKind::Trained2dMnistLike => trained_2d_mnist_like(spec),
    }
}

/// Builds the model and writes it as a weight file.
pub fn write_toy_model(spec: &ToyModelSpec, path: &Path) -> Result<Network> {
    let net = make_toy_model(spec)?;
    net.save(path)?;
    Ok(net)
}

fn gaussian_layer(
    rng: &mut ChaCha8Rng,
    in_dim: usize,
    out_dim: usize,
    activation: ActivationKind,
) -> Layer {
    let w = Normal::new(0.0, (2.0 / in_dim as f64).sqrt()).expect("valid std");
    let b = Normal::new(0.0, 0.1).expect("valid std");
    let weight = (0..in_dim * out_dim).map(|_| w.sample(rng)).collect();
    let bias = (0..out_dim).map(|_| b.sample(rng)).collect();
    Layer::new(in_dim, out_dim, activation, weight, bias)
}

fn random_mlp(spec: &ToyModelSpec) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.dims.len() - 1;
    let layers = (0..n)
        .map(|k| {
            let act = if k + 1 == n {
                spec.output_activation
            } else {
                spec.activation
            };
            gaussian_layer(&mut rng, spec.dims[k], spec.dims[k + 1], act)
        })
        .collect();
    Ok(Network::new(spec.dims[0], layers)?)
}

/// Fixed `2 -> 8 -> 16 -> 64` plaid generator.
///
/// Layer 1 (tanh, gain 3): unit `k` is the line with normal angle
/// `k * pi / 8 + 0.2` at signed offset `OFFSETS[k]` from the origin.
///
/// Layer 2 (tanh): unit `j` reads layer-1 units `j % 8` and
/// `(3 j + 1) % 8` with weight `+/-1.5` and bias `0.5 * cos(j)`.
///
/// Output (sigmoid): pixel `(r, c)` sums `2 * h2[r]` (row strokes, layer-2
/// units 0..8) and `2 * h2[8 + c]` (column strokes, units 8..16), minus 0.5.
pub fn handcrafted_2d() -> Result<Network> {
    const OFFSETS: [f64; 8] = [0.5, -1.0, 1.5, -0.5, 1.0, -1.5, 0.25, -0.75];
    const GAIN: f64 = 3.0;

    let mut w1 = Vec::with_capacity(16);
    let mut b1 = Vec::with_capacity(8);
    for (k, off) in OFFSETS.iter().enumerate() {
        let angle = k as f64 * PI / 8.0 + 0.2;
        w1.push(GAIN * angle.cos());
        w1.push(GAIN * angle.sin());
        b1.push(-GAIN * off);
    }

    let mut w2 = vec![0.0; 16 * 8];
    let mut b2 = vec![0.0; 16];
    for j in 0..16 {
        let a = j % 8;
        let b = (3 * j + 1) % 8;
        let sa = if j % 2 == 0 { 1.5 } else { -1.5 };
        let sb = if j % 3 == 0 { -1.5 } else { 1.5 };
        w2[j * 8 + a] += sa;
        w2[j * 8 + b] += sb;
        b2[j] = 0.5 * (j as f64).cos();
    }

    let mut w3 = vec![0.0; 64 * 16];
    let b3 = vec![-0.5; 64];
    for r in 0..8 {
        for c in 0..8 {
            let p = r * 8 + c;
            w3[p * 16 + r] = 2.0;
            w3[p * 16 + 8 + c] = 2.0;
        }
    }

    let net = Network::new(
        2,
        vec![
            Layer::new(2, 8, ActivationKind::Tanh, w1, b1),
            Layer::new(8, 16, ActivationKind::Tanh, w2, b2),
            Layer::new(16, 64, ActivationKind::Sigmoid, w3, b3),
        ],
    )?;
    Ok(net.with_output_shape(8, 8)?)
}

/// Five 8x8 glyphs, one row per byte (MSB = left pixel).
const GLYPHS: [[u8; 8]; 5] = [
    [0x3C, 0x66, 0x66, 0x66, 0x66, 0x66, 0x3C, 0x00], // 0
    [0x18, 0x38, 0x18, 0x18, 0x18, 0x18, 0x7E, 0x00], // 1
    [0x3C, 0x66, 0x06, 0x0C, 0x30, 0x60, 0x7E, 0x00], // 2
    [0x3C, 0x66, 0x06, 0x1C, 0x06, 0x66, 0x3C, 0x00], // 3
    [0x0C, 0x1C, 0x3C, 0x6C, 0x7E, 0x0C, 0x0C, 0x00], // 4
];

fn glyph_pixels(g: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(64);
    for row in GLYPHS[g] {
        for c in 0..8 {
            out.push(if row & (0x80 >> c) != 0 { 1.0 } else { 0.0 });
        }
    }
    out
}

/// Target image for a latent point: the glyph of its angular sector, with
/// ink intensity growing with the radius.
fn mnist_like_target(z: &[f64]) -> Vec<f64> {
    let angle = z[1].atan2(z[0]) + PI;
    let sector = ((angle / (2.0 * PI) * 5.0) as usize).min(4);
    let intensity = 0.4 + 0.6 * (z[0].hypot(z[1]) / 3.0).min(1.0);
    glyph_pixels(sector).into_iter().map(|p| p * intensity).collect()
}

fn trained_2d_mnist_like(spec: &ToyModelSpec) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.dims.len() - 1;
    let mut layers: Vec<Layer> = (0..n - 1)
        .map(|k| {
            let mut layer = gaussian_layer(&mut rng, spec.dims[k], spec.dims[k + 1], spec.activation);
            if k == 0 {
                // Spread first-layer boundaries over the training box.
                for w in &mut layer.weight {
                    *w *= 1.5;
                }
                for b in &mut layer.bias {
                    *b *= 15.0;
                }
            }
            layer
        })
        .collect();
    let hidden = Network::new(2, layers.clone())?;
    let width = *spec.dims.get(n - 1).unwrap();

    // Ridge regression of the targets on the last hidden features over a
    // 41x41 grid covering [-3, 3]^2.
    const GRID: usize = 41;
    let rows = GRID * GRID;
    let mut features = DMatrix::<f64>::zeros(rows, width + 1);
    let mut targets = DMatrix::<f64>::zeros(rows, 64);
    for i in 0..GRID {
        for j in 0..GRID {
            let z = [
                -3.0 + 6.0 * i as f64 / (GRID - 1) as f64,
                -3.0 + 6.0 * j as f64 / (GRID - 1) as f64,
            ];
            let r = i * GRID + j;
            let h = hidden.generate(&z)?;
            for (c, v) in h.iter().enumerate() {
                features[(r, c)] = *v;
            }
            features[(r, width)] = 1.0;
            for (c, v) in mnist_like_target(&z).iter().enumerate() {
                targets[(r, c)] = *v;
            }
        }
    }
    let ridge = 10.0;
    let mut gram = features.transpose() * &features;
    for d in 0..=width {
        gram[(d, d)] += ridge;
    }
    let rhs = features.transpose() * &targets;
    let chol = gram.cholesky().ok_or_else(|| Error::Format {
        what: "ridge fit".into(),
        reason: "normal equations are not positive definite".into(),
    })?;
    let coef = chol.solve(&rhs); // (width + 1) x 64

    let mut weight = Vec::with_capacity(64 * width);
    let mut bias = Vec::with_capacity(64);
    for p in 0..64 {
        let col: DVector<f64> = coef.column(p).into_owned();
        weight.extend(col.iter().take(width));
        bias.push(col[width]);
    }
    layers.push(Layer::new(width, 64, spec.output_activation, weight, bias));
    Ok(Network::new(2, layers)?.with_output_shape(8, 8)?)
}

/// Random discriminator `input -> widths...` with the given activation on
/// every layer.
pub fn random_discriminator(
    input_dim: usize,
    widths: &[usize],
    activation: ActivationKind,
    seed: u64,
) -> Result<Network> {
    let mut dims = vec![input_dim];
    dims.extend_from_slice(widths);
    let spec = ToyModelSpec {
        kind: ToyKind::RandomMlp,
        dims,
        activation,
        output_activation: activation,
        seed,
    };
    make_toy_model(&spec)
}
