use plausible::harness::{generate_synthetic, SyntheticSpec};
use plausible::noise::{recover_labels, NoisyMarginal};
use plausible::seed;
use plausible::*;
use proptest::prelude::*;
use rand::Rng;

/// Conditions the four-cell joint table of `(Y, U)` on `Ỹ = y ⊕ u`.
fn joint_table_posterior(pi1: f64, p: [f64; 2]) -> ([Option<f64>; 2], [f64; 2]) {
    let pi = [1.0 - pi1, pi1];
    let mut flipped = [0.0; 2];
    let mut total = [0.0; 2];
    for y in 0..2 {
        for u in 0..2 {
            let mass = pi[y] * if u == 1 { p[y] } else { 1.0 - p[y] };
            let noisy = y ^ u;
            total[noisy] += mass;
            if u == 1 {
                flipped[noisy] += mass;
            }
        }
    }
    let q = [0, 1].map(|k| (total[k] > 0.0).then(|| flipped[k] / total[k]));
    (q, total)
}

fn class_q(table: &PosteriorTable) -> [Option<f64>; 2] {
    match table {
        PosteriorTable::ClassLevel { q } => *q,
        other => panic!("expected a class-level table, got {other:?}"),
    }
}

#[test]
fn posterior_matches_joint_table_on_documented_cases() {
    for (pi1, p) in [(0.2, [0.0, 0.4]), (0.1, [0.4, 0.05])] {
        let table = posterior(&NoiseSpec::class_level(p[0], p[1]).unwrap(), &Priors::class(pi1).unwrap()).unwrap();
        let (oracle, _) = joint_table_posterior(pi1, p);
        let got = class_q(&table);
        for k in 0..2 {
            assert!((got[k].unwrap() - oracle[k].unwrap()).abs() < 1e-12);
        }
    }
    let (oracle, _) = joint_table_posterior(0.1, [0.4, 0.05]);
    assert!((oracle[1].unwrap() - 0.791_208_791_208_791).abs() < 1e-12);
    let (oracle, _) = joint_table_posterior(0.2, [0.0, 0.4]);
    assert!((oracle[0].unwrap() - 0.090_909_090_909_090_9).abs() < 1e-12);
}

proptest! {
    #[test]
    fn bayes_consistency_holds_per_stratum(pi1 in 0.0f64..=1.0, p0 in 0.0f64..0.5, p1 in 0.0f64..0.5) {
        let spec = NoiseSpec::class_level(p0, p1).unwrap();
        let priors = Priors::class(pi1).unwrap();
        let q = class_q(&posterior(&spec, &priors).unwrap());
        let NoisyMarginal::Class(marginal) = noisy_label_marginal(&spec, &priors).unwrap() else {
            panic!("expected a class marginal");
        };
        let pi = [1.0 - pi1, pi1];
        let p = [p0, p1];
        for noisy in 0..2 {
            let inflow = pi[1 - noisy] * p[1 - noisy];
            match q[noisy] {
                Some(v) => prop_assert!((v * marginal[noisy] - inflow).abs() < 1e-12),
                None => prop_assert_eq!(marginal[noisy], 0.0),
            }
        }
    }

    #[test]
    fn uniform_posterior_ignores_priors(p in 0.0f64..0.5, pi1 in 0.0f64..=1.0) {
        let table = posterior(&NoiseSpec::uniform(p).unwrap(), &Priors::class(pi1).unwrap()).unwrap();
        prop_assert_eq!(table, PosteriorTable::Uniform { q: p });
    }

    #[test]
    fn injection_roundtrips(seed in any::<u64>(), p0 in 0.0f64..0.5, p1 in 0.0f64..0.5) {
        let clean = generate_synthetic(&SyntheticSpec::two_gaussians(200, 2, 2.0), seed).unwrap().dataset;
        let spec = NoiseSpec::class_level(p0, p1).unwrap();
        let (noisy, draw) = inject_noise(&clean, &spec, seed).unwrap();
        prop_assert_eq!(noisy.kind(), LabelKind::Noisy);
        let recovered = recover_labels(&noisy, &draw).unwrap();
        prop_assert_eq!(recovered.labels(), clean.labels());
    }
}

#[test]
fn monte_carlo_posterior_within_three_standard_errors() {
    let (pi1, p) = (0.3, [0.15, 0.35]);
    let table = posterior(&NoiseSpec::class_level(p[0], p[1]).unwrap(), &Priors::class(pi1).unwrap()).unwrap();
    let q = class_q(&table);
    let mut rng = seed::rng(11);
    let (mut flips, mut counts) = ([0u64; 2], [0u64; 2]);
    for _ in 0..1_000_000 {
        let y = usize::from(rng.random::<f64>() < pi1);
        let u = usize::from(rng.random::<f64>() < p[y]);
        counts[y ^ u] += 1;
        flips[y ^ u] += u as u64;
    }
    for k in 0..2 {
        let qk = q[k].unwrap();
        let empirical = flips[k] as f64 / counts[k] as f64;
        let se = (qk * (1.0 - qk) / counts[k] as f64).sqrt();
        assert!((empirical - qk).abs() < 3.0 * se, "stratum {k}: {empirical} vs {qk}");
    }
}

#[test]
fn zero_noise_leaves_labels_alone() {
    let clean = generate_synthetic(&SyntheticSpec::two_gaussians(500, 2, 2.0), 1).unwrap().dataset;
    let (noisy, draw) = inject_noise(&clean, &NoiseSpec::class_level(0.0, 0.0).unwrap(), 3).unwrap();
    assert_eq!(noisy.labels(), clean.labels());
    assert_eq!(draw.flips(), 0);
    assert_eq!(draw.provenance(), Provenance::TrueDraw);
}

#[test]
fn positive_flip_rate_follows_law_of_large_numbers() {
    let clean = generate_synthetic(&SyntheticSpec::two_gaussians(100_000, 1, 2.0), 2).unwrap().dataset;
    let (_, draw) = inject_noise(&clean, &NoiseSpec::class_level(0.0, 0.4).unwrap(), 5).unwrap();
    let (mut pos, mut flipped, mut neg_flipped) = (0usize, 0usize, 0usize);
    for (y, u) in clean.labels().iter().zip(draw.bits()) {
        if *y == 1 {
            pos += 1;
            flipped += *u as usize;
        } else {
            neg_flipped += *u as usize;
        }
    }
    let rate = flipped as f64 / pos as f64;
    assert!((rate - 0.4).abs() < 0.01, "{rate}");
    assert_eq!(neg_flipped, 0);
}

#[test]
fn uniform_flip_count_within_binomial_band() {
    // Binomial(10000, 0.2): mean 2000, sd 40.
    let clean = generate_synthetic(&SyntheticSpec::two_gaussians(10_000, 1, 2.0), 4).unwrap().dataset;
    let (_, draw) = inject_noise(&clean, &NoiseSpec::uniform(0.2).unwrap(), 6).unwrap();
    assert!((draw.flips() as i64 - 2000).abs() <= 120, "{}", draw.flips());
}

#[test]
fn injection_is_deterministic() {
    let clean = generate_synthetic(&SyntheticSpec::two_gaussians(1_000, 2, 2.0), 0).unwrap().dataset;
    let spec = NoiseSpec::uniform(0.3).unwrap();
    assert_eq!(inject_noise(&clean, &spec, 9).unwrap(), inject_noise(&clean, &spec, 9).unwrap());
    assert_ne!(inject_noise(&clean, &spec, 9).unwrap().1, inject_noise(&clean, &spec, 10).unwrap().1);
}

#[test]
fn missing_group_is_named() {
    let clean = generate_synthetic(
        &SyntheticSpec::Gaussian {
            n: 50,
            balance: 0.5,
            mean0: vec![-1.0],
            mean1: vec![1.0],
            covariance: None,
            groups: Some(3),
        },
        0,
    )
    .unwrap()
    .dataset;
    let spec = NoiseSpec::group_level([(0, [0.1, 0.1]), (1, [0.2, 0.0])].into_iter().collect()).unwrap();
    let err = inject_noise(&clean, &spec, 0).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains('2'), "{err}");
}

#[test]
fn noise_model_file_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noise.json");
    let model = NoiseModel::new(NoiseSpec::class_level(0.0, 0.4).unwrap(), Some(Priors::class(0.2).unwrap())).unwrap();
    model.write(&path).unwrap();
    let back = NoiseModel::read(&path).unwrap();
    assert_eq!(back, model);
    let q = class_q(&back.posterior().unwrap());
    assert!((q[0].unwrap() - 0.08 / 0.88).abs() < 1e-15);
}
