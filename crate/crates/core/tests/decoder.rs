use biaffine_core::decoder::{chu_liu_edmonds, evaluate, tree_score, ParseTree};
use biaffine_core::scorers::ScoreMatrix;
use biaffine_core::Error;
use biaffine_testkit::{brute_force_max, is_arborescence};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid(rng: &mut ChaCha8Rng, tokens: usize) -> ScoreMatrix {
    ScoreMatrix::from_fn(tokens + 1, |_, _| rng.random_range(-5.0..5.0))
}

#[test]
fn matches_brute_force_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        let tokens = rng.random_range(3..=7);
        let grid = random_grid(&mut rng, tokens);
        for single_root in [true, false] {
            let heads = chu_liu_edmonds(&grid, single_root).unwrap();
            assert!(is_arborescence(&heads, single_root), "trial {trial}: {heads:?}");
            let best = brute_force_max(&grid, single_root);
            assert_eq!(tree_score(&grid, &heads), best, "trial {trial}, single_root {single_root}");
        }
    }
}

#[test]
fn integer_ties_still_reach_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let tokens = rng.random_range(2..=6);
        let grid = ScoreMatrix::from_fn(tokens + 1, |_, _| rng.random_range(0..3) as f64);
        let heads = chu_liu_edmonds(&grid, true).unwrap();
        assert!(is_arborescence(&heads, true));
        assert_eq!(tree_score(&grid, &heads), brute_force_max(&grid, true));
    }
}

#[test]
fn follows_a_planted_tree() {
    let heads = [2, 0, 2, 3, 2];
    let grid = ScoreMatrix::from_fn(6, |h, d| if d > 0 && heads[d - 1] == h { 10.0 } else { 0.0 });
    assert_eq!(chu_liu_edmonds(&grid, true).unwrap(), heads);
}

#[test]
fn one_token_attaches_to_the_root() {
    let grid = ScoreMatrix::from_fn(2, |_, _| -1.0);
    assert_eq!(chu_liu_edmonds(&grid, true).unwrap(), vec![0]);
    assert!(chu_liu_edmonds(&ScoreMatrix::zeros(1), true).unwrap().is_empty());
}

#[test]
fn nan_scores_are_a_data_error() {
    let mut grid = ScoreMatrix::zeros(3);
    grid.set(1, 2, f64::NAN);
    assert!(matches!(chu_liu_edmonds(&grid, true), Err(Error::Data(_))));
}

#[test]
fn attachment_scores_count_heads_and_labels() {
    let gold = ParseTree { heads: vec![2, 0, 2], labels: vec![0, 1, 2] };
    let pred = ParseTree { heads: vec![2, 0, 1], labels: vec![0, 2, 2] };
    let s = evaluate(&[pred], &[gold]).unwrap();
    assert_eq!((s.tokens, s.correct_heads, s.correct_labeled), (3, 2, 1));
    assert!((s.uas - 200.0 / 3.0).abs() < 1e-12);
    assert!((s.las - 100.0 / 3.0).abs() < 1e-12);
}

fn grids() -> impl Strategy<Value = ScoreMatrix> {
    (1usize..=6).prop_flat_map(|tokens| {
        let size = tokens + 1;
        prop::collection::vec(-20.0f64..20.0, size * size).prop_map(move |values| {
            ScoreMatrix::from_fn(size, |h, d| values[h * size + d])
        })
    })
}

proptest! {
    #[test]
    fn output_is_always_a_tree(grid in grids(), single_root in any::<bool>()) {
        let heads = chu_liu_edmonds(&grid, single_root).unwrap();
        prop_assert!(is_arborescence(&heads, single_root));
    }

    #[test]
    fn adding_a_constant_per_dependent_keeps_the_tree(
        grid in grids(),
        shifts in prop::collection::vec(-50.0f64..50.0, 7),
    ) {
        let size = grid.size();
        let shifted = ScoreMatrix::from_fn(size, |h, d| grid.get(h, d) + shifts[d]);
        let a = chu_liu_edmonds(&grid, true).unwrap();
        let b = chu_liu_edmonds(&shifted, true).unwrap();
        let gap = (tree_score(&grid, &a) - tree_score(&grid, &b)).abs();
        prop_assert!(gap < 1e-9, "{:?} vs {:?}", a, b);
    }
}
