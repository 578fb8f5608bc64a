//! Dense feedforward engine.
//!
//! A [`Network`] is an ordered stack of affine layers, each followed by an
//! elementwise nonlinearity. Layers are indexed from 1 (the first hidden
//! layer) to `L` (the output layer); index 0 denotes the latent input.
//!
//! The engine exposes the split evaluation the rest of the crate relies on:
//! `forward_to` evaluates the head `f_{l:1}` and returns both the
//! pre-activation and post-activation of layer `l`, `forward_from` evaluates
//! the tail `f_{L:l+1}` from a post-activation, and `backprop_to_hidden`
//! pulls an output-space covector back through that tail.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::NetError;

/// Elementwise nonlinearity applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
    Sigmoid,
    Identity,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            ActivationKind::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation. Piecewise-linear
    /// activations take the right-hand derivative at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            ActivationKind::Identity => 1.0,
        }
    }

    /// True for activations with a continuous derivative everywhere.
    pub fn is_smooth(self) -> bool {
        matches!(
            self,
            ActivationKind::Tanh | ActivationKind::Sigmoid | ActivationKind::Identity
        )
    }
}

/// One affine map plus nonlinearity. `weight` is row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: ActivationKind,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: ActivationKind,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Self {
        Layer {
            in_dim,
            out_dim,
            activation,
            weight,
            bias,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weight[i * self.in_dim..(i + 1) * self.in_dim]
    }

    /// `W x + b`.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        (0..self.out_dim)
            .map(|i| {
                let mut acc = self.bias[i];
                for (w, v) in self.row(i).iter().zip(x) {
                    acc += w * v;
                }
                acc
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut pre = self.affine(x);
        for v in &mut pre {
            *v = self.activation.apply(*v);
        }
        pre
    }

    /// `W^T g`.
    fn transpose_mul(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_dim];
        for (i, gi) in g.iter().enumerate() {
            if *gi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += w * gi;
            }
        }
        out
    }

    fn validate(&self, index: usize) -> Result<(), NetError> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(NetError::Invalid {
                layer: index,
                field: "in_dim/out_dim",
                reason: "dimensions must be positive".into(),
            });
        }
        if self.weight.len() != self.in_dim * self.out_dim {
            return Err(NetError::Invalid {
                layer: index,
                field: "weight",
                reason: format!(
                    "expected {} entries ({} x {}), found {}",
                    self.in_dim * self.out_dim,
                    self.out_dim,
                    self.in_dim,
                    self.weight.len()
                ),
            });
        }
        if self.bias.len() != self.out_dim {
            return Err(NetError::Invalid {
                layer: index,
                field: "bias",
                reason: format!(
                    "expected {} entries, found {}",
                    self.out_dim,
                    self.bias.len()
                ),
            });
        }
        if let ActivationKind::LeakyRelu { slope } = self.activation {
            if !(slope.is_finite() && slope > 0.0 && slope < 1.0) {
                return Err(NetError::Invalid {
                    layer: index,
                    field: "activation.slope",
                    reason: format!("leaky relu slope must lie in (0, 1), found {slope}"),
                });
            }
        }
        if let Some(pos) = self.weight.iter().position(|w| !w.is_finite()) {
            return Err(NetError::NonFinite {
                layer: index,
                field: "weight",
                position: pos,
            });
        }
        if let Some(pos) = self.bias.iter().position(|b| !b.is_finite()) {
            return Err(NetError::NonFinite {
                layer: index,
                field: "bias",
                position: pos,
            });
        }
        Ok(())
    }
}

/// Pre- and post-activation values of one layer for a given latent input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivation {
    pub layer_index: usize,
    pub pre_activation: Vec<f64>,
    pub post_activation: Vec<f64>,
}

/// Serialized form; `Network` is only built through validation.
#[derive(Serialize, Deserialize)]
struct NetworkFile {
    latent_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_shape: Option<[usize; 2]>,
    layers: Vec<Layer>,
}

/// A validated dense feedforward network. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    latent_dim: usize,
    layers: Vec<Layer>,
    output_shape: Option<[usize; 2]>,
}

impl Network {
    pub fn new(latent_dim: usize, layers: Vec<Layer>) -> Result<Self, NetError> {
        if latent_dim == 0 {
            return Err(NetError::Invalid {
                layer: 0,
                field: "latent_dim",
                reason: "latent dimension must be positive".into(),
            });
        }
        if layers.is_empty() {
            return Err(NetError::Invalid {
                layer: 0,
                field: "layers",
                reason: "network has no layers".into(),
            });
        }
        let mut prev_out = latent_dim;
        for (k, layer) in layers.iter().enumerate() {
            let index = k + 1;
            layer.validate(index)?;
            if layer.in_dim != prev_out {
                return Err(NetError::DimensionChain {
                    prev_layer: k,
                    prev_out,
                    layer: index,
                    in_dim: layer.in_dim,
                });
            }
            prev_out = layer.out_dim;
        }
        Ok(Network {
            latent_dim,
            layers,
            output_shape: None,
        })
    }

    /// Declares an image shape `(height, width)` for the output vector.
    pub fn with_output_shape(mut self, height: usize, width: usize) -> Result<Self, NetError> {
        if height * width != self.output_dim() {
            return Err(NetError::Invalid {
                layer: self.depth(),
                field: "output_shape",
                reason: format!(
                    "{height} x {width} does not match output dimension {}",
                    self.output_dim()
                ),
            });
        }
        self.output_shape = Some([height, width]);
        Ok(self)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// `D_l` for `l` in `1..=L`; `D_0` is the latent dimension.
    pub fn layer_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.latent_dim
        } else {
            self.layers[l - 1].out_dim
        }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.out_dim).collect()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn output_shape(&self) -> Option<[usize; 2]> {
        self.output_shape
    }

    pub fn check_layer(&self, l: usize) -> Result<(), NetError> {
        if l == 0 || l > self.depth() {
            return Err(NetError::LayerIndex {
                index: l,
                depth: self.depth(),
            });
        }
        Ok(())
    }

    fn check_input(&self, what: &'static str, v: &[f64], expected: usize) -> Result<(), NetError> {
        if v.len() != expected {
            return Err(NetError::InputDimension {
                what,
                expected,
                found: v.len(),
            });
        }
        if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
            return Err(NetError::NonFiniteInput { what, position: pos });
        }
        Ok(())
    }

    /// Full forward pass `G(z)`.
    pub fn generate(&self, z: &[f64]) -> Result<Vec<f64>, NetError> {
        self.check_input("latent vector", z, self.latent_dim)?;
        Ok(self.run_layers(z.to_vec(), 0, self.depth()))
    }

    /// Evaluates layers `from+1..=to` starting at a post-activation of layer `from`.
    fn run_layers(&self, mut x: Vec<f64>, from: usize, to: usize) -> Vec<f64> {
        for layer in &self.layers[from..to] {
            x = layer.forward(&x);
        }
        x
    }

    /// Head evaluation `f_{l:1}(z)` with the pre-activation of layer `l` retained.
    pub fn forward_to(&self, z: &[f64], l: usize) -> Result<LayerActivation, NetError> {
        self.check_layer(l)?;
        self.check_input("latent vector", z, self.latent_dim)?;
        let x = self.run_layers(z.to_vec(), 0, l - 1);
        let layer = &self.layers[l - 1];
        let pre = layer.affine(&x);
        let post = pre.iter().map(|&v| layer.activation.apply(v)).collect();
        Ok(LayerActivation {
            layer_index: l,
            pre_activation: pre,
            post_activation: post,
        })
    }

    /// Pre-activation of layer `l` only.
    pub fn pre_activation(&self, z: &[f64], l: usize) -> Result<Vec<f64>, NetError> {
        Ok(self.forward_to(z, l)?.pre_activation)
    }

    /// Pre- and post-activations of every layer for input `z`.
    pub fn trace(&self, z: &[f64]) -> Result<Vec<LayerActivation>, NetError> {
        self.check_input("latent vector", z, self.latent_dim)?;
        let mut x = z.to_vec();
        let mut out = Vec::with_capacity(self.depth());
        for (k, layer) in self.layers.iter().enumerate() {
            let pre = layer.affine(&x);
            x = pre.iter().map(|&v| layer.activation.apply(v)).collect();
            out.push(LayerActivation {
                layer_index: k + 1,
                pre_activation: pre,
                post_activation: x.clone(),
            });
        }
        Ok(out)
    }

    /// Tail evaluation `f_{L:l+1}(h)` for a post-activation `h` of layer `l`
    /// (`l = 0` means `h` is a latent vector).
    pub fn forward_from(&self, h: &[f64], l: usize) -> Result<Vec<f64>, NetError> {
        if l > self.depth() {
            return Err(NetError::LayerIndex {
                index: l,
                depth: self.depth(),
            });
        }
        self.check_input("hidden vector", h, self.layer_dim(l))?;
        Ok(self.run_layers(h.to_vec(), l, self.depth()))
    }

    /// Gradient of `output_grad . f_{L:l+1}(h)` with respect to `h`.
    pub fn backprop_to_hidden(
        &self,
        h: &[f64],
        l: usize,
        output_grad: &[f64],
    ) -> Result<Vec<f64>, NetError> {
        if l > self.depth() {
            return Err(NetError::LayerIndex {
                index: l,
                depth: self.depth(),
            });
        }
        self.check_input("hidden vector", h, self.layer_dim(l))?;
        self.check_input("output gradient", output_grad, self.output_dim())?;

        // Keep pre-activations of the tail for the backward sweep.
        let mut pres: Vec<Vec<f64>> = Vec::with_capacity(self.depth() - l);
        let mut x = h.to_vec();
        for layer in &self.layers[l..] {
            let pre = layer.affine(&x);
            x = pre.iter().map(|&v| layer.activation.apply(v)).collect();
            pres.push(pre);
        }

        let mut g = output_grad.to_vec();
        for (layer, pre) in self.layers[l..].iter().zip(pres.iter()).rev() {
            for (gi, p) in g.iter_mut().zip(pre) {
                *gi *= layer.activation.derivative(*p);
            }
            g = layer.transpose_mul(&g);
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        let file = NetworkFile {
            latent_dim: self.latent_dim,
            output_shape: self.output_shape,
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&file).expect("network serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let file: NetworkFile = serde_json::from_str(text)?;
        let net = Network::new(file.latent_dim, file.layers)?;
        match file.output_shape {
            Some([h, w]) => net.with_output_shape(h, w),
            None => Ok(net),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| NetError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Reads and validates a weight file.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network, NetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Network::from_json(&text)
}
