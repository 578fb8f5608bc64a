//! Generative-boundary aware sampling for small dense generators.
//!
//! Pipeline: pick the unit boundaries of a hidden layer that matter for a
//! query's output ([`berdrop`]), grow a random tree inside the region those
//! boundaries enclose ([`explorer`]), and compare the harvested samples with
//! epsilon-ball samples ([`baselines`]) under output-spread and
//! discriminator-similarity metrics ([`metrics`]).

pub mod baselines;
pub mod berdrop;
pub mod config;
pub mod error;
pub mod explorer;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod regions;
pub mod toy;

pub use error::{Error, NetError, Result};
pub use net::{load_network, ActivationKind, Layer, LayerActivation, Network};
