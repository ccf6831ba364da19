use cgp_lingam::synth::{generate, sample_disturbances, structural_residual};
use cgp_lingam::GenConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sample skewness and excess kurtosis.
fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let m = |p: i32| v.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n;
    let m2 = m(2);
    (m(3) / m2.powf(1.5), m(4) / (m2 * m2) - 3.0)
}

/// 1% critical value of the chi-square distribution with two degrees of freedom.
const JB_CRIT_1PCT: f64 = 9.2103;

#[test]
fn disturbances_are_non_gaussian() {
    for seed in 0..10 {
        let cfg = GenConfig::default();
        let e = sample_disturbances::<f64, _>(&cfg, 10_000, &mut ChaCha8Rng::seed_from_u64(seed));
        for row in e.row_iter() {
            let v: Vec<f64> = row.iter().copied().collect();
            let (skew, kurt) = moments(&v);
            let jb = v.len() as f64 / 6.0 * (skew * skew + kurt * kurt / 4.0);
            assert!(kurt.abs() > 0.1, "seed {seed}: excess kurtosis {kurt}");
            assert!(jb > JB_CRIT_1PCT, "seed {seed}: Jarque-Bera {jb}");
            let var = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
            assert!((var - 1.0).abs() < 0.05);
        }
    }
}

#[test]
fn generated_series_follow_structural_equation() {
    for (seed, order) in [(1, 1), (2, 2), (3, 5), (4, 10)] {
        let cfg = GenConfig {
            seed,
            order,
            n_samples: 400,
            ..GenConfig::default()
        };
        let truth = generate::<f64>(&cfg).unwrap();
        let r = structural_residual(
            &truth.dag,
            &truth.coeffs,
            &truth.series,
            &truth.disturbances,
        )
        .unwrap();
        assert!(r < 1e-9, "order {order}: residual {r}");
        assert_eq!(truth.series.n_samples(), 400);
    }
}

#[test]
fn f32_generation_tracks_f64() {
    let cfg = GenConfig {
        seed: 9,
        n_samples: 200,
        ..GenConfig::default()
    };
    let a = generate::<f64>(&cfg).unwrap();
    let b = generate::<f32>(&cfg).unwrap();
    let diff = a
        .dag
        .weights()
        .iter()
        .zip(b.dag.weights().iter())
        .map(|(x, y)| (x - *y as f64).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-6);
}
