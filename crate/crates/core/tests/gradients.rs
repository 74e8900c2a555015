use alice_core::feature_store::{ActivationMap, Grid};
use alice_core::heads::{
    attention_forward, global_loss_and_gradients, init_params, local_forward, local_loss_and_gradients, saliency,
    softmax, LinearHead, LocalExample, LocalHead, Model, ModelShape, SharedAttention,
};
use alice_core::morph::ArchState;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= (1e-4 * analytic.abs().max(numeric.abs())).max(1e-7)
}

fn random_map(rng: &mut ChaCha8Rng, grid: Grid) -> ActivationMap {
    ActivationMap::new(grid, (0..grid.len()).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn jitter(a: &mut [f64], rng: &mut ChaCha8Rng) {
    a.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
}

/// Central difference of `f` with respect to `values[i]`.
fn central<F: FnMut(&[f64]) -> f64>(values: &[f64], i: usize, mut f: F) -> f64 {
    let mut plus = values.to_vec();
    let mut minus = values.to_vec();
    plus[i] += H;
    minus[i] -= H;
    (f(&plus) - f(&minus)) / (2.0 * H)
}

fn fixture(seed: u64) -> (SharedAttention, Vec<LocalHead>, Vec<ActivationMap>, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new(2, 2, 3);
    let shape = ModelShape { global_arity: 3, dim: 3, queries: 2, locals: vec![(0, 3), (3, 2)] };
    let mut model = init_params(&shape, seed);
    jitter(model.attention.queries.as_slice_mut().unwrap(), &mut rng);
    for l in &mut model.locals {
        jitter(l.head.biases.as_slice_mut().unwrap(), &mut rng);
    }
    let maps: Vec<ActivationMap> = (0..5).map(|_| random_map(&mut rng, grid)).collect();
    let labels = vec![(0, 2), (1, 1), (0, 0), (1, 0), (0, 1)];
    (model.attention, model.locals, maps, labels)
}

fn local_loss(shared: &SharedAttention, heads: &[LocalHead], maps: &[ActivationMap], labels: &[(usize, usize)]) -> f64 {
    let batch: Vec<LocalExample<'_>> =
        maps.iter().zip(labels).map(|(map, &(head, label))| LocalExample { map, head, label }).collect();
    local_loss_and_gradients(shared, heads, &batch).unwrap().0
}

#[test]
fn local_gradients_match_finite_differences() {
    for seed in 0..20 {
        let (shared, heads, maps, labels) = fixture(seed);
        let batch: Vec<LocalExample<'_>> =
            maps.iter().zip(&labels).map(|(map, &(head, label))| LocalExample { map, head, label }).collect();
        let (_, grads) = local_loss_and_gradients(&shared, &heads, &batch).unwrap();

        let q = shared.queries.as_slice().unwrap();
        for (i, &g) in grads.queries.as_slice().unwrap().iter().enumerate() {
            let n = central(q, i, |v| {
                let s = SharedAttention { queries: Array2::from_shape_vec(shared.queries.dim(), v.to_vec()).unwrap() };
                local_loss(&s, &heads, &maps, &labels)
            });
            assert!(close(g, n), "seed {seed} query {i}: analytic {g} numeric {n}");
        }
        for (h, hg) in grads.heads.iter().enumerate() {
            let w = heads[h].head.weights.as_slice().unwrap();
            for (i, &g) in hg.weights.as_slice().unwrap().iter().enumerate() {
                let n = central(w, i, |v| {
                    let mut hs = heads.clone();
                    hs[h].head.weights = Array2::from_shape_vec(heads[h].head.weights.dim(), v.to_vec()).unwrap();
                    local_loss(&shared, &hs, &maps, &labels)
                });
                assert!(close(g, n), "seed {seed} head {h} weight {i}: analytic {g} numeric {n}");
            }
            let b = heads[h].head.biases.as_slice().unwrap();
            for (i, &g) in hg.biases.iter().enumerate() {
                let n = central(b, i, |v| {
                    let mut hs = heads.clone();
                    hs[h].head.biases = v.to_vec().into();
                    local_loss(&shared, &hs, &maps, &labels)
                });
                assert!(close(g, n), "seed {seed} head {h} bias {i}: analytic {g} numeric {n}");
            }
        }
    }
}

#[test]
fn global_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut head = init_params(&ModelShape { global_arity: 3, dim: 3, queries: 1, locals: vec![] }, seed).global;
        jitter(head.biases.as_slice_mut().unwrap(), &mut rng);
        let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let labels = [0, 2, 1, 2];
        let loss = |h: &LinearHead| {
            let batch: Vec<(&[f64], usize)> = xs.iter().map(|x| x.as_slice()).zip(labels).collect();
            global_loss_and_gradients(h, &batch).unwrap()
        };
        let (_, grads) = loss(&head);
        let w = head.weights.as_slice().unwrap();
        for (i, &g) in grads.weights.as_slice().unwrap().iter().enumerate() {
            let n = central(w, i, |v| {
                let h = LinearHead { weights: Array2::from_shape_vec((3, 3), v.to_vec()).unwrap(), ..head.clone() };
                loss(&h).0
            });
            assert!(close(g, n), "seed {seed} weight {i}: analytic {g} numeric {n}");
        }
        let b = head.biases.as_slice().unwrap();
        for (i, &g) in grads.biases.iter().enumerate() {
            let n = central(b, i, |v| loss(&LinearHead { biases: v.to_vec().into(), ..head.clone() }).0);
            assert!(close(g, n), "seed {seed} bias {i}: analytic {g} numeric {n}");
        }
    }
}

#[test]
fn local_saliency_matches_input_gradient() {
    for seed in 0..10 {
        let (shared, heads, maps, _) = fixture(seed);
        let arch = ArchState::initial(5).unwrap().merge_pair(0, 1).unwrap().merge_pair(1, 2).unwrap().merge_pair(3, 4).unwrap();
        let model = Model { global: LinearHead::zeros(arch.arity(), 3), attention: shared.clone(), locals: heads.clone() };
        let map = &maps[0];
        // class 4 is member 1 of group {3, 4}
        let s = saliency(&model, &arch, map, 4).unwrap();
        let grid = map.grid();
        for cell in 0..grid.cells() {
            let numeric: f64 = (0..grid.d)
                .map(|ch| {
                    central(map.values(), cell * grid.d + ch, |v| {
                        let m = ActivationMap::new(grid, v.to_vec()).unwrap();
                        local_forward(&shared, &heads[1], &m).unwrap()[1]
                    })
                    .abs()
                })
                .fold(0.0, f64::max);
            assert!(close(s[cell], numeric), "seed {seed} cell {cell}: {} vs {numeric}", s[cell]);
        }
    }
}

#[test]
fn shared_queries_get_gradient_from_any_trained_head() {
    let (shared, mut heads, maps, _) = fixture(3);
    let only_second: Vec<LocalExample<'_>> = maps.iter().map(|map| LocalExample { map, head: 1, label: 0 }).collect();
    let (_, g) = local_loss_and_gradients(&shared, &heads, &only_second).unwrap();
    assert!(g.queries.iter().any(|v| v.abs() > 1e-8));
    heads[1].head.weights.fill(0.0);
    let (_, g) = local_loss_and_gradients(&shared, &heads, &only_second).unwrap();
    assert!(g.queries.iter().all(|&v| v == 0.0));
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(logits in prop::collection::vec(-1e4..1e4f64, 1..12)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn attention_is_permutation_invariant(seed in any::<u64>(), shift in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::new(2, 3, 4);
        let map = random_map(&mut rng, grid);
        let queries = Array2::from_shape_simple_fn((3, 4), || rng.random_range(-3.0..3.0));
        let cells: Vec<&[f64]> = (0..6).map(|c| map.cell(c / 3, c % 3)).collect();
        let rotated: Vec<f64> = (0..6).flat_map(|c| cells[(c + shift) % 6].to_vec()).collect();
        let permuted = ActivationMap::new(grid, rotated).unwrap();
        let a = attention_forward(&queries, &map).unwrap();
        let b = attention_forward(&queries, &permuted).unwrap();
        for (x, y) in a.output.iter().zip(b.output.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for row in a.weights.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }
}
