use std::collections::BTreeSet;

use alice_core::profiler::{jsd, jsd_matrix, kl_divergence, select_pairs, ClassProfile, Covariance, DEFAULT_EPSILON};
use alice_core::ClassPair;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn diag(class_id: usize, mean: Vec<f64>, var: Vec<f64>) -> ClassProfile {
    ClassProfile { class_id, mean, covariance: Covariance::Diagonal(var), epsilon: DEFAULT_EPSILON }
}

fn random_profile(rng: &mut ChaCha8Rng, class_id: usize, d: usize) -> ClassProfile {
    let mean = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let var = (0..d).map(|_| rng.random_range(0.25..4.0)).collect();
    diag(class_id, mean, var)
}

fn log_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((x, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m) * (x - m) / v))
        .sum()
}

/// `E_p[ln p(x) − ln q(x)]` from `n` draws of `p`.
fn monte_carlo_kl(p: &ClassProfile, q: &ClassProfile, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let (Covariance::Diagonal(vp), Covariance::Diagonal(vq)) = (&p.covariance, &q.covariance) else {
        unreachable!()
    };
    let mut x = vec![0.0; p.dim()];
    let mut total = 0.0;
    for _ in 0..n {
        for i in 0..x.len() {
            let z: f64 = StandardNormal.sample(rng);
            x[i] = p.mean[i] + vp[i].sqrt() * z;
        }
        total += log_density(&x, &p.mean, vp) - log_density(&x, &q.mean, vq);
    }
    total / n as f64
}

#[test]
fn closed_form_kl_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = random_profile(&mut rng, 0, 5);
        let q = random_profile(&mut rng, 1, 5);
        let exact = kl_divergence(&p, &q).unwrap();
        let estimate = monte_carlo_kl(&p, &q, 100_000, &mut rng);
        let rel = (exact - estimate).abs() / exact;
        worst = worst.max(rel);
        assert!(rel < 0.02, "closed form {exact} vs estimate {estimate}");
    }
    println!("worst relative error {worst:.5}");
}

#[test]
fn self_divergence_is_zero_and_matrix_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let profiles: Vec<ClassProfile> = (0..8).map(|c| random_profile(&mut rng, c, 5)).collect();
    for p in &profiles {
        assert!(kl_divergence(p, p).unwrap().abs() <= 1e-10);
    }
    let m = jsd_matrix(&profiles).unwrap();
    for i in 0..m.len() {
        assert_eq!(m[i][i], 0.0);
        for j in 0..m.len() {
            assert_eq!(m[i][j], m[j][i]);
        }
    }
}

fn profile_strategy(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-5.0..5.0f64, d), prop::collection::vec(0.01..10.0f64, d))
}

proptest! {
    #[test]
    fn kl_is_non_negative((m1, v1) in profile_strategy(4), (m2, v2) in profile_strategy(4)) {
        let (p, q) = (diag(0, m1, v1), diag(1, m2, v2));
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
    }

    #[test]
    fn jsd_is_symmetric_and_non_negative((m1, v1) in profile_strategy(3), (m2, v2) in profile_strategy(3)) {
        let (p, q) = (diag(0, m1, v1), diag(1, m2, v2));
        let (a, b) = (jsd(&p, &q).unwrap(), jsd(&q, &p).unwrap());
        prop_assert_eq!(a, b);
        prop_assert!(a >= -1e-12);
    }

    #[test]
    fn selection_respects_budget_order_and_exclusions(
        seed in any::<u64>(),
        n in 2usize..8,
        b in 1usize..6,
        drop in prop::collection::vec((0usize..8, 0usize..8), 0..6),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profiles: Vec<ClassProfile> = (0..n).map(|c| random_profile(&mut rng, c, 3)).collect();
        let excluded: BTreeSet<ClassPair> = drop
            .into_iter()
            .filter(|(a, b)| a != b && *a < n && *b < n)
            .map(|(a, b)| ClassPair::new(a, b))
            .collect();
        let remaining = n * (n - 1) / 2 - excluded.len();
        match select_pairs(&profiles, b, &excluded) {
            Ok(sel) => {
                prop_assert_eq!(sel.len(), b.min(remaining));
                prop_assert!(sel.iter().all(|d| !excluded.contains(&d.pair)));
                prop_assert!(sel.windows(2).all(|w| w[0].jsd <= w[1].jsd));
            }
            Err(_) => prop_assert_eq!(remaining, 0),
        }
    }
}
