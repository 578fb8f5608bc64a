//! Epsilon-ball baselines.
//!
//! The L2 radius is calibrated from an exploration run: with `z_avg` the
//! mean of the accepted samples, `eps_l2` is the midpoint of the smallest
//! and largest distance from `z_avg` to a rejected sample. The L-infinity
//! radius is then chosen so both balls have the same volume. Balls are
//! centred on the query, not on `z_avg`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsCalibration {
    pub z_avg: Vec<f64>,
    pub eps_l2: f64,
    pub eps_linf: f64,
}

/// `ln` of the volume of the L2 ball of radius `eps` in `dim` dimensions.
pub fn ln_l2_ball_volume(eps: f64, dim: usize) -> f64 {
    let d = dim as f64;
    0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d + 1.0) + d * eps.ln()
}

/// `ln` of the volume of the L-infinity ball (cube) of half-width `r`.
pub fn ln_linf_ball_volume(r: f64, dim: usize) -> f64 {
    dim as f64 * (2.0 * r).ln()
}

/// Cube half-width with the same volume as the L2 ball of radius `eps_l2`.
pub fn matched_linf_radius(eps_l2: f64, dim: usize) -> f64 {
    let ln_unit = ln_l2_ball_volume(1.0, dim);
    eps_l2 * (ln_unit / dim as f64).exp() / 2.0
}

pub fn calibrate(accepted: &[Vec<f64>], rejected: &[Vec<f64>]) -> Result<EpsCalibration> {
    let first = accepted.first().ok_or(Error::Empty("accepted samples"))?;
    if rejected.is_empty() {
        return Err(Error::Empty("rejected samples"));
    }
    let dim = first.len();
    if dim == 0 {
        return Err(Error::Empty("latent vector"));
    }
    for p in accepted.iter().chain(rejected) {
        if p.len() != dim {
            return Err(Error::Dimension {
                what: "sample",
                expected: dim,
                found: p.len(),
            });
        }
    }

    let mut z_avg = vec![0.0; dim];
    for p in accepted {
        for (a, v) in z_avg.iter_mut().zip(p) {
            *a += v;
        }
    }
    let n = accepted.len() as f64;
    for a in &mut z_avg {
        *a /= n;
    }

    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for r in rejected {
        let d = crate::berdrop::l2_distance(&z_avg, r);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let eps_l2 = 0.5 * (hi + lo);
    if !(eps_l2 > 0.0 && eps_l2.is_finite()) {
        return Err(Error::Format {
            what: "calibration".into(),
            reason: format!("degenerate epsilon {eps_l2}"),
        });
    }
    Ok(EpsCalibration {
        eps_linf: matched_linf_radius(eps_l2, dim),
        z_avg,
        eps_l2,
    })
}

/// Shrinks `offset` until `norm(center + offset - center) <= bound` holds
/// in floating point.
fn place_within(center: &[f64], offset: &mut [f64], bound: f64, norm: fn(&[f64]) -> f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = center.iter().zip(offset.iter()).map(|(c, o)| c + o).collect();
        let diff: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
        if norm(&diff) <= bound {
            return x;
        }
        for o in offset.iter_mut() {
            *o *= 1.0 - 1e-12;
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `n` points uniform in the closed L2 ball of radius `eps` around `center`.
pub fn sample_l2_ball(center: &[f64], eps: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let dim = center.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut dir = vec![0.0; dim];
    while out.len() < n {
        for d in dir.iter_mut() {
            *d = rng.sample(StandardNormal);
        }
        let norm = l2(&dir);
        let u: f64 = rng.random();
        if norm == 0.0 {
            continue;
        }
        let radius = eps * u.powf(1.0 / dim as f64);
        let mut offset: Vec<f64> = dir.iter().map(|d| d / norm * radius).collect();
        out.push(place_within(center, &mut offset, eps, l2));
    }
    out
}

/// `n` points uniform in the cube of half-width `r` around `center`.
pub fn sample_linf_ball(center: &[f64], r: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut offset: Vec<f64> = center.iter().map(|_| rng.random_range(-r..=r)).collect();
            place_within(center, &mut offset, r, linf)
        })
        .collect()
}
