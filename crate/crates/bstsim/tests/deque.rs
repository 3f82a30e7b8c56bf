use bstsim::deque::{DequeHarness, Orientation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_run(orient: Orientation, seed: u64, ops: usize) -> (usize, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (0..2 * ops + 2).map(|_| rng.random_range(0..3)).collect();
    let mut h = DequeHarness::new(orient, &sizes);
    let mut done = 0;
    for _ in 0..ops {
        match rng.random_range(0..4) {
            0 if h.can_push_front() => h.push_front(),
            1 if h.can_push_back() => h.push_back(),
            2 if !h.oracle.is_empty() => {
                h.pop_front().unwrap();
            }
            3 if !h.oracle.is_empty() => {
                h.pop_back().unwrap();
            }
            _ => continue,
        }
        done += 1;
        h.check().unwrap();
    }
    h.tree.check_invariants().unwrap();
    (done, h.cost())
}

#[test]
fn interleaved_ops_match_sequence_oracle() {
    for orient in [Orientation::Min, Orientation::Max] {
        let (done, cost) = random_run(orient, 7, 10_000);
        assert!(done > 9_000);
        assert!(cost <= 12 * done as u64, "cost {cost} for {done} ops");
    }
}

#[test]
fn long_runs_from_one_end() {
    for orient in [Orientation::Min, Orientation::Max] {
        let mut h = DequeHarness::new(orient, &vec![1; 400]);
        for _ in 0..150 {
            h.push_back();
        }
        for _ in 0..150 {
            h.pop_front().unwrap();
            h.check().unwrap();
        }
        for _ in 0..150 {
            h.push_front();
        }
        for _ in 0..150 {
            h.pop_back().unwrap();
            h.check().unwrap();
        }
        assert!(h.oracle.is_empty());
        assert!(h.cost() <= 12 * 600);
    }
}

#[test]
fn knuckles_are_never_restructured() {
    let mut h = DequeHarness::new(Orientation::Min, &vec![5; 60]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let before: Vec<_> = knuckle_shapes(&h);
    for _ in 0..2_000 {
        match rng.random_range(0..4) {
            0 if h.can_push_front() => h.push_front(),
            1 if h.can_push_back() => h.push_back(),
            2 if !h.oracle.is_empty() => drop(h.pop_front()),
            3 if !h.oracle.is_empty() => drop(h.pop_back()),
            _ => {}
        }
    }
    assert_eq!(knuckle_shapes(&h), before);
}

fn knuckle_shapes(h: &DequeHarness) -> Vec<String> {
    h.knuckle_roots().into_iter().map(|k| h.tree.subtree_snapshot(k)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn any_op_sequence_matches_oracle(ops in proptest::collection::vec(0u8..4, 1..300), max in any::<bool>()) {
        let orient = if max { Orientation::Max } else { Orientation::Min };
        let mut h = DequeHarness::new(orient, &vec![1; 2 * ops.len() + 2]);
        for op in ops {
            match op {
                0 if h.can_push_front() => h.push_front(),
                1 if h.can_push_back() => h.push_back(),
                2 if !h.oracle.is_empty() => { h.pop_front().unwrap(); }
                3 if !h.oracle.is_empty() => { h.pop_back().unwrap(); }
                _ => {}
            }
            prop_assert!(h.check().is_ok());
        }
    }
}
