use cgp_lingam::lingam::{
    estimate_b_matrix, fastica, find_causal_order, lingam_fit, prune_edges,
    resolve_permutation_scaling,
};
use cgp_lingam::synth::{sample_dag, sample_disturbances};
use cgp_lingam::{DagMatrix, GenConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

fn dag(n: usize, seed: u64) -> DagMatrix<f64> {
    let cfg = GenConfig {
        n_nodes: n,
        ..GenConfig::default()
    };
    sample_dag(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn all_perms(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_perms(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

fn shuffle(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

/// `D P (I - A)`: rows of `I - A` shuffled and rescaled.
fn scrambled_unmixing(a: &DagMatrix<f64>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = a.n();
    let w0 = a.identity_minus();
    let perm = shuffle(n, rng);
    let scales: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    DMatrix::from_fn(n, n, |r, c| scales[r] * w0[(perm[r], c)])
}

/// Amari index of `p`, zero exactly for scaled permutations.
fn amari(p: &DMatrix<f64>) -> f64 {
    let n = p.nrows() as f64;
    let a = p.abs();
    let rows: f64 = a.row_iter().map(|r| r.sum() / r.max() - 1.0).sum();
    let cols: f64 = a.column_iter().map(|c| c.sum() / c.max() - 1.0).sum();
    (rows + cols) / (2.0 * n * (n - 1.0))
}

fn shd(a: &DMatrix<f64>, b: &DMatrix<f64>, thresh: f64) -> usize {
    a.iter()
        .zip(b.iter())
        .filter(|(x, y)| (x.abs() > thresh) != (y.abs() > thresh))
        .count()
}

#[test]
fn independent_uniform_sources_give_scaled_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let s = DMatrix::from_fn(2, 5000, |_, _| rng.random_range(-1.0..1.0f64));
    let mix = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, -0.4, 1.2]);
    let ica = fastica(&(&mix * s), &mut rng).unwrap();
    let p = &ica.unmixing * &mix;
    for row in p.row_iter() {
        let normalized = row / row.norm();
        assert_eq!(normalized.iter().filter(|v| v.abs() > 0.99).count(), 1);
    }
}

#[test]
fn laplace_sources_under_orthogonal_mixing() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let exp = Exp::new(1.0).unwrap();
    let s = DMatrix::from_fn(2, 20_000, |_, _| {
        let v: f64 = exp.sample(&mut rng);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    });
    let (c, sn) = (0.7f64.cos(), 0.7f64.sin());
    let mix = DMatrix::from_row_slice(2, 2, &[c, -sn, sn, c]);
    let ica = fastica(&(&mix * s), &mut rng).unwrap();
    assert!(amari(&(&ica.unmixing * &mix)) < 0.05);
}

#[test]
fn permutation_scaling_matches_brute_force() {
    let perms = all_perms(5);
    for seed in 0..30 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let a = dag(5, seed);
        let mut w = scrambled_unmixing(&a, &mut rng);
        w += DMatrix::from_fn(5, 5, |_, _| rng.random_range(-0.05..0.05));
        let cost = |p: &[usize]| (0..5).map(|i| 1.0 / w[(p[i], i)].abs()).sum::<f64>();
        let best = perms.iter().map(|p| cost(p)).fold(f64::INFINITY, f64::min);
        let resolved = resolve_permutation_scaling(&w).unwrap();
        // recover the chosen row order from the resolved matrix
        let chosen: Vec<usize> = (0..5)
            .map(|i| {
                (0..5)
                    .find(|&r| (w.row(r) / w[(r, i)] - resolved.row(i)).amax() < 1e-12)
                    .unwrap()
            })
            .collect();
        assert!((cost(&chosen) - best).abs() < 1e-12, "seed {seed}");
        for i in 0..5 {
            assert!((resolved[(i, i)] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn causal_order_matches_brute_force() {
    let perms = all_perms(5);
    for seed in 0..30 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let a = dag(5, seed);
        let b = a.weights()
            + DMatrix::from_fn(5, 5, |r, c| {
                if r == c {
                    0.0
                } else {
                    rng.random_range(-0.05..0.05)
                }
            });
        let mass = |p: &[usize]| {
            let mut s = 0.0;
            for x in 0..5 {
                for y in x + 1..5 {
                    s += b[(p[x], p[y])].powi(2);
                }
            }
            s
        };
        // lexicographically first strict minimum
        let mut best: Option<(&Vec<usize>, f64)> = None;
        for p in &perms {
            let m = mass(p);
            if best.is_none_or(|(_, bm)| m < bm) {
                best = Some((p, m));
            }
        }
        assert_eq!(&find_causal_order(&b), best.unwrap().0, "seed {seed}");
    }
}

#[test]
fn exact_unmixing_recovers_graph() {
    for seed in 0..30 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let a = dag(5, seed);
        let w = scrambled_unmixing(&a, &mut rng);
        let b = estimate_b_matrix(&resolve_permutation_scaling(&w).unwrap());
        let order = find_causal_order(&b);
        let est = prune_edges(&b, &order, 1e-12).unwrap();
        assert!((est.weights() - a.weights()).amax() < 1e-8, "seed {seed}");
    }
}

#[test]
fn oracle_residuals_recover_support() {
    let mut hits = 0;
    for seed in 0..30 {
        let cfg = GenConfig {
            n_nodes: 5,
            ..GenConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sample_dag::<f64, _>(&cfg, &mut rng).unwrap();
        let e = sample_disturbances::<f64, _>(&cfg, 20_000, &mut rng);
        let et = a.inverse_identity_minus() * e;
        let res = lingam_fit(&et, 0.1, &mut rng).unwrap();
        if shd(a.weights(), res.dag.weights(), 0.1) == 0 {
            hits += 1;
        }
    }
    assert!(hits >= 27, "SHD 0 in {hits}/30");
}

#[test]
fn two_node_sem() {
    let cfg = GenConfig {
        n_nodes: 2,
        ..GenConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let e = sample_disturbances::<f64, _>(&cfg, 20_000, &mut rng);
    let mut x = e.clone();
    for k in 0..x.ncols() {
        x[(1, k)] += 0.8 * x[(0, k)];
    }
    let res = lingam_fit(&x, 0.05, &mut rng).unwrap();
    assert!((res.dag.weights()[(1, 0)] - 0.8).abs() < 0.05);
    assert_eq!(res.dag.weights()[(0, 1)], 0.0);
    assert_eq!(res.causal_order, vec![0, 1]);
}

#[test]
fn three_node_end_to_end() {
    let cfg = GenConfig {
        n_nodes: 3,
        ..GenConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = sample_dag::<f64, _>(&cfg, &mut rng).unwrap();
    let e = sample_disturbances::<f64, _>(&cfg, 10_000, &mut rng);
    let x = a.inverse_identity_minus() * e;
    let res = lingam_fit(&x, 0.05, &mut rng).unwrap();
    assert!((res.b_unpruned - a.weights()).amax() < 0.05);
}

#[test]
fn support_is_scale_invariant() {
    let mut same = 0;
    for seed in 0..30 {
        let cfg = GenConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let a = sample_dag::<f64, _>(&cfg, &mut rng).unwrap();
        let e = sample_disturbances::<f64, _>(&cfg, 20_000, &mut rng);
        let x = a.inverse_identity_minus() * e;
        let scales = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(5, |_, _| {
            rng.random_range(0.5..2.0)
        }));
        let plain = lingam_fit(&x, 0.05, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let scaled =
            lingam_fit(&(&scales * &x), 0.05, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        if plain.dag.support(0.0) == scaled.dag.support(0.0) {
            same += 1;
        }
    }
    assert!(same >= 29, "support unchanged in {same}/30");
}
