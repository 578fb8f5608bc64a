mod common;

use common::*;
use gbas_core::baselines::{
    calibrate, ln_l2_ball_volume, ln_linf_ball_volume, matched_linf_radius, sample_l2_ball,
    sample_linf_ball,
};
use gbas_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use std::f64::consts::PI;

/// Unit-ball volume by the recursion V(d) = V(d-2) * 2 pi / d.
fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

#[test]
fn l2_volume_matches_recursion() {
    for d in [1usize, 2, 3, 5, 10, 17, 64] {
        for eps in [0.1, 1.0, 2.5] {
            let expect = unit_ball_volume(d).ln() + d as f64 * f64::ln(eps);
            let got = ln_l2_ball_volume(eps, d);
            assert!((got - expect).abs() <= 1e-10 * expect.abs().max(1.0), "d={d} eps={eps}: {got} vs {expect}");
        }
    }
    // Closed forms.
    assert!((ln_l2_ball_volume(1.0, 2) - PI.ln()).abs() < 1e-12);
    assert!((ln_l2_ball_volume(1.0, 5) - (8.0 * PI * PI / 15.0).ln()).abs() < 1e-12);
}

#[test]
fn matched_cube_has_equal_volume() {
    for d in [2usize, 5, 10, 64] {
        let eps = 0.8;
        let r = matched_linf_radius(eps, d);
        let lhs = ln_linf_ball_volume(r, d);
        let rhs = ln_l2_ball_volume(eps, d);
        assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "d={d}");
        // In low dimension the cube is smaller than the ball's bounding box
        // but larger than its inscribed cube.
        assert!(r < eps && r > eps / (d as f64).sqrt(), "d={d} r={r}");
    }
    assert!((matched_linf_radius(1.0, 2) - PI.sqrt() / 2.0).abs() < 1e-15);
}

#[test]
fn calibration_on_a_hand_built_set() {
    let accepted = vec![vec![0.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![1.0, 3.0, -3.0]];
    // Mean is (1, 1, -1); distances 1 and 5.
    let rejected = vec![vec![1.0, 2.0, -1.0], vec![1.0, 1.0, 4.0], vec![1.0, 1.0, -3.0]];
    let cal = calibrate(&accepted, &rejected).unwrap();
    assert_eq!(cal.z_avg, vec![1.0, 1.0, -1.0]);
    assert_eq!(cal.eps_l2, 3.0);
    assert_eq!(cal.eps_linf, matched_linf_radius(3.0, 3));
}

#[test]
fn calibration_ignores_sample_order() {
    let mut rng = rng(41);
    let accepted: Vec<Vec<f64>> = (0..50).map(|_| uniform_vec(&mut rng, 4, -1.0, 1.0)).collect();
    let rejected: Vec<Vec<f64>> = (0..30).map(|_| uniform_vec(&mut rng, 4, -3.0, 3.0)).collect();
    let base = calibrate(&accepted, &rejected).unwrap();
    for _ in 0..10 {
        let mut a = accepted.clone();
        let mut r = rejected.clone();
        a.shuffle(&mut rng);
        r.shuffle(&mut rng);
        let cal = calibrate(&a, &r).unwrap();
        assert!((cal.eps_l2 - base.eps_l2).abs() < 1e-12);
        assert!(l2(&cal.z_avg, &base.z_avg) < 1e-12);
    }
}

#[test]
fn calibration_errors() {
    let p = vec![vec![0.0, 0.0]];
    assert!(matches!(calibrate(&[], &p), Err(Error::Empty(_))));
    assert!(matches!(calibrate(&p, &[]), Err(Error::Empty(_))));
    assert!(calibrate(&p, &[vec![1.0]]).is_err());
    // All rejected samples at the mean: zero radius.
    assert!(calibrate(&p, &p).is_err());
}

#[test]
fn l2_samples_have_the_uniform_radius_law() {
    for d in [2usize, 5] {
        let center = vec![0.3; d];
        let eps = 1.7;
        let n = 40_000;
        let pts = sample_l2_ball(&center, eps, n, 11);
        let radii: Vec<f64> = pts.iter().map(|p| l2(p, &center)).collect();
        assert!(radii.iter().all(|&r| r <= eps));
        // E|x| = eps d / (d + 1) for the uniform ball.
        let mean = radii.iter().sum::<f64>() / n as f64;
        let expect = eps * d as f64 / (d as f64 + 1.0);
        assert!((mean - expect).abs() < 0.01 * expect, "d={d}: {mean} vs {expect}");
        // Inner half-radius ball holds 2^-d of the mass.
        let inner = radii.iter().filter(|&&r| r <= eps / 2.0).count() as f64 / n as f64;
        let p = 0.5f64.powi(d as i32);
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((inner - p).abs() < 5.0 * sd, "d={d}: {inner} vs {p}");
    }
}

fn chi_square(counts: &[usize], expected: f64) -> f64 {
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

#[test]
fn l2_directions_are_uniform_in_the_plane() {
    let n = 36_000;
    let pts = sample_l2_ball(&[0.0, 0.0], 1.0, n, 12);
    let bins = 36;
    let mut counts = vec![0usize; bins];
    for p in &pts {
        let a = p[1].atan2(p[0]) + PI;
        counts[((a / (2.0 * PI) * bins as f64) as usize).min(bins - 1)] += 1;
    }
    // 35 degrees of freedom: the 0.999 quantile is about 66.6.
    let stat = chi_square(&counts, (n / bins) as f64);
    assert!(stat < 66.6, "chi-square {stat}");
}

#[test]
fn linf_samples_are_uniform_per_coordinate() {
    let center = [1.0, -2.0, 0.5];
    let r = 0.6;
    let n = 30_000;
    let pts = sample_linf_ball(&center, r, n, 13);
    let bins = 20;
    for d in 0..3 {
        let mut counts = vec![0usize; bins];
        for p in &pts {
            let off = p[d] - center[d];
            assert!(off.abs() <= r);
            counts[(((off + r) / (2.0 * r) * bins as f64) as usize).min(bins - 1)] += 1;
        }
        // 19 degrees of freedom: the 0.999 quantile is about 43.8.
        let stat = chi_square(&counts, (n / bins) as f64);
        assert!(stat < 43.8, "coord {d}: chi-square {stat}");
    }
}

#[test]
fn monte_carlo_volume_ratio() {
    // Equal volumes: uniform draws from the bounding box land in the ball
    // and in the matched cube equally often.
    for d in [2usize, 5] {
        let eps = 1.0;
        let r = matched_linf_radius(eps, d);
        let n = 400_000;
        let in_ball = sample_linf_ball(&vec![0.0; d], eps, n, 14 + d as u64)
            .iter()
            .filter(|p| norm(p) <= eps)
            .count() as f64;
        let in_cube = sample_linf_ball(&vec![0.0; d], eps, n, 14 + d as u64)
            .iter()
            .filter(|p| p.iter().all(|x| x.abs() <= r))
            .count() as f64;
        assert!((in_ball / in_cube - 1.0).abs() < 0.02, "d={d}: {}", in_ball / in_cube);
    }
}

#[test]
fn samplers_repeat_by_seed() {
    let c = [0.0, 1.0];
    assert_eq!(sample_l2_ball(&c, 1.0, 50, 5), sample_l2_ball(&c, 1.0, 50, 5));
    assert_ne!(sample_l2_ball(&c, 1.0, 50, 5), sample_l2_ball(&c, 1.0, 50, 6));
    assert_eq!(sample_linf_ball(&c, 1.0, 50, 5), sample_linf_ball(&c, 1.0, 50, 5));
    assert_eq!(sample_l2_ball(&c, 1.0, 0, 5).len(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn samples_stay_inside_their_balls(
        center in prop::collection::vec(-1e3f64..1e3, 1..8),
        eps in 1e-6f64..10.0,
        seed in any::<u64>(),
    ) {
        for p in sample_l2_ball(&center, eps, 64, seed) {
            let diff: Vec<f64> = p.iter().zip(&center).map(|(a, c)| a - c).collect();
            prop_assert!(norm(&diff) <= eps);
        }
        for p in sample_linf_ball(&center, eps, 64, seed) {
            prop_assert!(p.iter().zip(&center).all(|(a, c)| (a - c).abs() <= eps));
        }
    }

    #[test]
    fn eps_lies_between_nearest_and_farthest_rejection(
        seed in any::<u64>(),
        n_acc in 1usize..20,
        n_rej in 1usize..20,
    ) {
        let mut r = rng(seed);
        let acc: Vec<Vec<f64>> = (0..n_acc).map(|_| uniform_vec(&mut r, 3, -1.0, 1.0)).collect();
        let rej: Vec<Vec<f64>> = (0..n_rej).map(|_| uniform_vec(&mut r, 3, -4.0, 4.0)).collect();
        let cal = calibrate(&acc, &rej).unwrap();
        let d: Vec<f64> = rej.iter().map(|p| l2(p, &cal.z_avg)).collect();
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(0.0, f64::max);
        prop_assert!(lo <= cal.eps_l2 + 1e-12 && cal.eps_l2 <= hi + 1e-12);
        prop_assert!((cal.eps_l2 - 0.5 * (lo + hi)).abs() < 1e-12);
    }
}
