use bstsim::tendon::TendonHarness;
use bstsim::Side;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_harness(rng: &mut ChaCha8Rng, len: usize) -> TendonHarness {
    let turns: Vec<Side> =
        (0..len - 1).map(|_| if rng.random_bool(0.5) { Side::Left } else { Side::Right }).collect();
    let sizes: Vec<usize> = (0..len).map(|_| rng.random_range(0..4)).collect();
    TendonHarness::new(&turns, &sizes)
}

fn step(h: &mut TendonHarness, op: u8) -> bool {
    match op {
        0 if h.can_add_parent() => h.add_parent().unwrap(),
        1 if h.can_add_child() => h.add_child().unwrap(),
        2 if !h.tendon.is_empty() => drop(h.remove_parent().unwrap()),
        3 if !h.tendon.is_empty() => drop(h.remove_child().unwrap()),
        _ => return false,
    }
    true
}

#[test]
fn random_grow_and_shrink_match_the_path() {
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = random_harness(&mut rng, 2_000);
        let mut done = 0u64;
        for _ in 0..10_000 {
            let op = rng.random_range(0..4);
            if step(&mut h, op) {
                done += 1;
                h.check().unwrap();
                h.check_outside().unwrap();
            }
        }
        h.tree.check_invariants().unwrap();
        assert!(h.cost() <= 20 * done, "cost {} for {done} ops", h.cost());
    }
}

#[test]
fn biased_growth_then_full_drain() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut h = random_harness(&mut rng, 1_200);
    let mut done = 0u64;
    for _ in 0..500 {
        let op = if rng.random_bool(0.5) { 0 } else { 1 };
        done += step(&mut h, op) as u64;
    }
    h.check().unwrap();
    while !h.tendon.is_empty() {
        let op = if rng.random_bool(0.5) { 2 } else { 3 };
        step(&mut h, op);
        done += 1;
        h.check().unwrap();
    }
    h.check_outside().unwrap();
    assert!(h.cost() <= 20 * done);
}

#[test]
fn knuckles_keep_their_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut h = random_harness(&mut rng, 300);
    let shapes = |h: &TendonHarness| -> Vec<String> {
        h.knuckle_roots().into_iter().map(|k| h.tree.subtree_snapshot(k)).collect()
    };
    let before = shapes(&h);
    for _ in 0..3_000 {
        let op = rng.random_range(0..4);
        step(&mut h, op);
    }
    assert_eq!(shapes(&h), before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn any_op_sequence_keeps_layout(seed in any::<u64>(), ops in proptest::collection::vec(0u8..4, 1..200)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = random_harness(&mut rng, 2 * ops.len() + 4);
        for op in ops {
            step(&mut h, op);
            prop_assert!(h.check().is_ok());
            prop_assert!(h.check_outside().is_ok());
        }
    }
}
