mod common;

use common::*;
use gbas_core::metrics::{
    cosine, disc_similarity, elementwise_std, evaluate, metrics_to_csv, output_std,
    region_distortion, FeatureMode, MetricRow, Method, SampleSet,
};
use gbas_core::{ActivationKind, Layer, Network};
use proptest::prelude::*;
use rand::seq::SliceRandom;

/// Welford running variance, independent of the two-pass library code.
fn welford_mean_std(outputs: &[Vec<f64>]) -> f64 {
    let dim = outputs[0].len();
    let mut total = 0.0;
    for d in 0..dim {
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, o) in outputs.iter().enumerate() {
            let delta = o[d] - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (o[d] - mean);
        }
        total += (m2 / outputs.len() as f64).sqrt();
    }
    total / dim as f64
}

fn chain(net: &Network, z: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut x = z.to_vec();
    net.layers()
        .iter()
        .map(|l| {
            let (pre, post) = oracle_layer(l, &x);
            x = post.clone();
            (pre, post)
        })
        .collect()
}

fn hand_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

fn setup(seed: u64) -> (Network, Network, SampleSet) {
    let mut r = rng(seed);
    let gen = random_net(&mut r, &[3, 8, 6], &[ActivationKind::Tanh, ActivationKind::Sigmoid]);
    let disc = random_net(&mut r, &[6, 5, 4], &[ActivationKind::Relu, ActivationKind::Tanh]);
    let z0 = uniform_vec(&mut r, 3, -1.0, 1.0);
    let pts = (0..40).map(|_| uniform_vec(&mut r, 3, -1.5, 1.5)).collect();
    (gen, disc, SampleSet::new(Method::Egbas, z0, 1, pts).unwrap())
}

#[test]
fn sigma_matches_welford_oracle() {
    for seed in 0..20 {
        let (gen, _, set) = setup(100 + seed);
        let outs: Vec<Vec<f64>> = set.points.iter().map(|z| chain(&gen, z).pop().unwrap().1).collect();
        let got = output_std(&gen, &set).unwrap();
        assert!((got - welford_mean_std(&outs)).abs() < 1e-10, "seed {seed}");
    }
}

#[test]
fn elementwise_std_of_known_columns() {
    // Columns: constant, {0, 2}, {-1, 1, -1, 1}.
    let rows = vec![vec![5.0, 0.0, -1.0], vec![5.0, 2.0, 1.0], vec![5.0, 0.0, -1.0], vec![5.0, 2.0, 1.0]];
    assert_eq!(elementwise_std(&rows), vec![0.0, 1.0, 1.0]);
}

#[test]
fn cosines_match_recomputed_features() {
    let (gen, disc, set) = setup(7);
    let refs = chain(&disc, &chain(&gen, &set.query).pop().unwrap().1);
    for mode in [FeatureMode::Post, FeatureMode::Pre] {
        let got = disc_similarity(&disc, &gen, &set, &set.query, mode).unwrap();
        assert_eq!(got.len(), 2);
        for (k, sim) in got.iter().enumerate() {
            let pick = |f: &(Vec<f64>, Vec<f64>)| match mode {
                FeatureMode::Post => f.1.clone(),
                FeatureMode::Pre => f.0.clone(),
            };
            let r = pick(&refs[k]);
            let mut vals = Vec::new();
            for z in &set.points {
                let f = pick(&chain(&disc, &chain(&gen, z).pop().unwrap().1)[k]);
                if norm(&f) > 0.0 && norm(&r) > 0.0 {
                    vals.push(hand_cosine(&f, &r));
                }
            }
            assert_eq!(sim.layer, k + 1);
            assert_eq!(sim.excluded, set.points.len() - vals.len());
            let expect = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((sim.mean_cosine.unwrap() - expect).abs() < 1e-12, "{mode:?} layer {}", k + 1);
        }
    }
}

#[test]
fn sigma_scales_with_the_output_layer() {
    let (gen, _, set) = setup(8);
    let base = output_std(&gen, &set).unwrap();
    for c in [2.0, -0.5, 10.0] {
        let mut layers = gen.layers().to_vec();
        let last = layers.last_mut().unwrap();
        *last = Layer::new(
            last.in_dim,
            last.out_dim,
            ActivationKind::Identity,
            last.weight.clone(),
            last.bias.clone(),
        );
        let lin = Network::new(3, layers.clone()).unwrap();
        let last = layers.last_mut().unwrap();
        last.weight.iter_mut().for_each(|w| *w *= c);
        last.bias.iter_mut().for_each(|b| *b *= c);
        let scaled = Network::new(3, layers).unwrap();
        let s1 = output_std(&lin, &set).unwrap();
        let s2 = output_std(&scaled, &set).unwrap();
        assert!((s2 - c.abs() * s1).abs() < 1e-12 * s1.max(1.0), "c={c}");
        // Distortion scales the same way.
        let d1 = region_distortion(&lin, &set, &set.query).unwrap();
        let d2 = region_distortion(&scaled, &set, &set.query).unwrap();
        assert!((d2 - c.abs() * d1).abs() < 1e-12 * d1.max(1.0));
    }
    assert!(base > 0.0);
}

#[test]
fn positive_feature_scaling_keeps_cosines() {
    let (gen, disc, set) = setup(9);
    let mut layers = disc.layers().to_vec();
    for l in &mut layers {
        l.weight.iter_mut().for_each(|w| *w *= 3.0);
        l.bias.iter_mut().for_each(|b| *b *= 3.0);
    }
    // Only the first layer is positively homogeneous (ReLU); compare it.
    let scaled = Network::new(6, layers).unwrap();
    let a = disc_similarity(&disc, &gen, &set, &set.query, FeatureMode::Post).unwrap();
    let b = disc_similarity(&scaled, &gen, &set, &set.query, FeatureMode::Post).unwrap();
    assert!((a[0].mean_cosine.unwrap() - b[0].mean_cosine.unwrap()).abs() < 1e-12);
}

#[test]
fn permutation_and_duplication_invariance() {
    let (gen, disc, set) = setup(10);
    let base = evaluate(&gen, Some(&disc), &set, FeatureMode::Post).unwrap();
    let mut r = rng(11);
    let mut shuffled = set.points.clone();
    shuffled.shuffle(&mut r);
    let doubled: Vec<Vec<f64>> = set.points.iter().chain(&set.points).cloned().collect();
    for pts in [shuffled, doubled] {
        let other = SampleSet::new(set.method, set.query.clone(), 1, pts).unwrap();
        let rep = evaluate(&gen, Some(&disc), &other, FeatureMode::Post).unwrap();
        assert!((rep.sigma - base.sigma).abs() < 1e-12);
        assert_eq!(rep.max_region_distortion, base.max_region_distortion);
        for (x, y) in rep.cosine_by_layer.iter().zip(&base.cosine_by_layer) {
            assert!((x.mean_cosine.unwrap() - y.mean_cosine.unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn distortion_is_the_largest_paired_distance() {
    let (gen, _, set) = setup(12);
    let reference = chain(&gen, &set.query).pop().unwrap().1;
    let expect = set
        .points
        .iter()
        .map(|z| l2(&chain(&gen, z).pop().unwrap().1, &reference))
        .fold(0.0, f64::max);
    let got = region_distortion(&gen, &set, &set.query).unwrap();
    assert!((got - expect).abs() < 1e-12);
    // The query itself contributes zero distortion.
    let solo = SampleSet::new(Method::EpsL2, set.query.clone(), 1, vec![set.query.clone()]).unwrap();
    assert_eq!(region_distortion(&gen, &solo, &set.query).unwrap(), 0.0);
    assert_eq!(output_std(&gen, &solo).unwrap(), 0.0);
}

#[test]
fn report_without_discriminator_has_no_cosines() {
    let (gen, _, set) = setup(13);
    let rep = evaluate(&gen, None, &set, FeatureMode::Post).unwrap();
    assert!(rep.cosine_by_layer.is_empty());
    let row = MetricRow {
        model_id: "m".into(),
        query_id: 3,
        layer: 1,
        report: rep,
    };
    let text = metrics_to_csv(&[row], 0).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("model_id,query_id,method,layer,sigma,max_distortion"));
    assert!(lines.next().unwrap().starts_with("m,3,egbas,1,"));
}

#[test]
fn mismatched_discriminator_is_rejected() {
    let (gen, _, set) = setup(14);
    let wrong = random_net(&mut rng(1), &[5, 3], &[ActivationKind::Relu]);
    assert!(disc_similarity(&wrong, &gen, &set, &set.query, FeatureMode::Post).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cosine_is_bounded_and_symmetric(
        a in prop::collection::vec(-5.0f64..5.0, 4),
        b in prop::collection::vec(-5.0f64..5.0, 4),
    ) {
        match (cosine(&a, &b), cosine(&b, &a)) {
            (Some(x), Some(y)) => {
                prop_assert!((-1.0..=1.0).contains(&x));
                prop_assert_eq!(x, y);
            }
            (None, None) => prop_assert!(norm(&a) == 0.0 || norm(&b) == 0.0),
            _ => prop_assert!(false, "asymmetric None"),
        }
    }

    #[test]
    fn sigma_is_non_negative_and_shift_free(seed in any::<u64>(), shift in -3.0f64..3.0) {
        let mut r = rng(seed);
        let rows: Vec<Vec<f64>> = (0..10).map(|_| uniform_vec(&mut r, 3, -1.0, 1.0)).collect();
        let moved: Vec<Vec<f64>> = rows.iter().map(|v| v.iter().map(|x| x + shift).collect()).collect();
        let a = elementwise_std(&rows);
        let b = elementwise_std(&moved);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(*x >= 0.0);
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
