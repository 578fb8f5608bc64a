//! Activation-sign geometry.
//!
//! The `i`-th generative boundary of layer `l` is the zero set of the
//! pre-activation of unit `i` as a function of the latent vector. A
//! [`HalfspaceIndicator`] picks a closed side of some of those boundaries
//! (`+1`, `-1`) or leaves a unit unconstrained (`0`); the generative region
//! is the intersection of the selected halfspaces.
//!
//! Signs are exact: `sign(x) == 0` only for `x == 0.0`, and membership uses
//! `entry * pre_activation >= 0` with no tolerance band.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Network;

#[inline]
pub fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Sign of every pre-activation unit of layer `l` at `z`.
pub fn sign_pattern(net: &Network, z: &[f64], l: usize) -> Result<Vec<i8>> {
    Ok(net
        .pre_activation(z, l)?
        .into_iter()
        .map(sign)
        .collect())
}

/// Set of unit indices a sign comparison is restricted to.
#[derive(Debug, Clone, Copy)]
pub enum Support<'a> {
    All,
    Units(&'a [usize]),
}

/// A choice of side per generative boundary of one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalfspaceIndicator {
    pub layer_index: usize,
    pub entries: Vec<i8>,
}

impl HalfspaceIndicator {
    pub fn new(layer_index: usize, entries: Vec<i8>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|e| !(-1..=1).contains(*e)) {
            return Err(Error::config(
                "indicator.entries",
                format!("entry {bad} is not in {{-1, 0, +1}}"),
            ));
        }
        Ok(HalfspaceIndicator {
            layer_index,
            entries,
        })
    }

    pub fn unconstrained(layer_index: usize, width: usize) -> Self {
        HalfspaceIndicator {
            layer_index,
            entries: vec![0; width],
        }
    }

    /// Units whose boundary participates in the region.
    pub fn support(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| **e != 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.entries.len()
    }

    /// First unit whose halfspace excludes the given pre-activation, if any.
    pub fn first_violation(&self, pre_activation: &[f64]) -> Option<usize> {
        self.entries
            .iter()
            .zip(pre_activation)
            .position(|(&e, &p)| e != 0 && f64::from(e) * p < 0.0)
    }
}

/// Membership oracle for one generative region of a network.
#[derive(Debug, Clone)]
pub struct RegionSpec<'a> {
    network: &'a Network,
    indicator: HalfspaceIndicator,
}

impl<'a> RegionSpec<'a> {
    pub fn new(network: &'a Network, indicator: HalfspaceIndicator) -> Result<Self> {
        network.check_layer(indicator.layer_index)?;
        let width = network.layer_dim(indicator.layer_index);
        if indicator.width() != width {
            return Err(Error::Dimension {
                what: "halfspace indicator",
                expected: width,
                found: indicator.width(),
            });
        }
        Ok(RegionSpec { network, indicator })
    }

    pub fn network(&self) -> &'a Network {
        self.network
    }

    pub fn indicator(&self) -> &HalfspaceIndicator {
        &self.indicator
    }

    pub fn layer_index(&self) -> usize {
        self.indicator.layer_index
    }

    pub fn contains(&self, z: &[f64]) -> Result<bool> {
        Ok(self.violation(z)?.is_none())
    }

    /// First kept unit whose halfspace excludes `z`.
    pub fn violation(&self, z: &[f64]) -> Result<Option<usize>> {
        if self.indicator.entries.iter().all(|e| *e == 0) {
            // Still validates z.
            self.network.forward_to(z, self.indicator.layer_index)?;
            return Ok(None);
        }
        let pre = self.network.pre_activation(z, self.indicator.layer_index)?;
        Ok(self.indicator.first_violation(&pre))
    }
}

/// Free-function form of [`RegionSpec::contains`].
pub fn contains(region: &RegionSpec<'_>, z: &[f64]) -> Result<bool> {
    region.contains(z)
}

/// Relaxed neural-representation sharing: the sign patterns of `z1` and `z2`
/// at layer `l` agree on every unit of `support`.
pub fn shares_nrs(
    net: &Network,
    z1: &[f64],
    z2: &[f64],
    l: usize,
    support: Support<'_>,
) -> Result<bool> {
    let s1 = sign_pattern(net, z1, l)?;
    let s2 = sign_pattern(net, z2, l)?;
    match support {
        Support::All => Ok(s1 == s2),
        Support::Units(units) => {
            for &k in units {
                if k >= s1.len() {
                    return Err(Error::UnitIndex {
                        index: k,
                        width: s1.len(),
                    });
                }
                if s1[k] != s2[k] {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// Indicator keeping the query's signs on `keep` and zero elsewhere.
pub fn indicator_from_query(
    net: &Network,
    z0: &[f64],
    l: usize,
    keep: &[usize],
) -> Result<HalfspaceIndicator> {
    let signs = sign_pattern(net, z0, l)?;
    let mut entries = vec![0i8; signs.len()];
    for &k in keep {
        if k >= signs.len() {
            return Err(Error::UnitIndex {
                index: k,
                width: signs.len(),
            });
        }
        entries[k] = signs[k];
    }
    Ok(HalfspaceIndicator {
        layer_index: l,
        entries,
    })
}
