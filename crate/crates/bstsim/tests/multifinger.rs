use bstsim::mf_vm::check_simulation;
use bstsim::multifinger::MfToBst;
use bstsim::{MfMachine, MfOperation, RefMachine, TreeArena, TreeShape, UnitOp};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_op(m: &impl MfMachine, rng: &mut ChaCha8Rng) -> MfOperation {
    let f = rng.random_range(0..m.num_fingers());
    let v = m.view(f);
    let mut legal = Vec::new();
    if v.has_parent {
        legal.extend([UnitOp::MoveParent, UnitOp::RotateWithParent]);
    }
    if v.has_left {
        legal.push(UnitOp::MoveLeft);
    }
    if v.has_right {
        legal.push(UnitOp::MoveRight);
    }
    MfOperation::new(f, *legal.choose(rng).unwrap())
}

/// Runs `ops` random operations on both machines; returns the simulated cost.
fn run(n: usize, fingers: usize, ops: usize, seed: u64, check_every: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = TreeArena::with_shape(&TreeShape::random(n, &mut rng));
    let mut reference = RefMachine::new(tree.clone(), fingers);
    let mut sim = MfToBst::new(tree, fingers);
    reference.enable_trace();
    sim.enable_trace();
    let mut windows = Vec::with_capacity(ops);
    for i in 0..ops {
        let op = random_op(&reference, &mut rng);
        let start = sim.trace_len();
        let want = reference.mf_apply(op).unwrap();
        assert_eq!(sim.mf_apply(op).unwrap(), want, "op {i}: {op}");
        windows.push(start..sim.trace_len());
        if check_every > 0 && i % check_every == 0 {
            sim.check_invariants().unwrap_or_else(|e| panic!("op {i}: {e}"));
        }
    }
    sim.check_invariants().unwrap();
    assert_eq!(sim.logical_shape(), reference.logical_shape());
    check_simulation(&reference.take_trace(), &sim.take_trace(), &windows).unwrap();
    sim.cost()
}

#[test]
fn single_finger_matches_reference() {
    for seed in 0..4 {
        run(64, 1, 2_000, seed, 1);
    }
}

#[test]
fn several_fingers_match_reference() {
    for fingers in 2..=4 {
        for seed in 0..3 {
            run(64, fingers, 3_000, 100 * fingers as u64 + seed, 1);
        }
    }
}

#[test]
fn cost_per_operation_is_bounded() {
    let ops = 20_000;
    let cost = run(512, 3, ops, 9, 500);
    assert!(cost <= 200 * ops as u64, "cost {cost}");
}

#[test]
fn tiny_trees() {
    for n in 2..6 {
        for seed in 0..10 {
            run(n, 2, 200, seed, 1);
        }
    }
}


#[test]
fn fingers_walk_to_both_extremes() {
    let tree = TreeArena::with_shape(&TreeShape::balanced(127));
    let mut reference = RefMachine::new(tree.clone(), 2);
    let mut sim = MfToBst::new(tree, 2);
    reference.enable_trace();
    sim.enable_trace();
    let mut windows = Vec::new();
    for _ in 0..6 {
        for (f, op) in [(0, UnitOp::MoveLeft), (1, UnitOp::MoveRight)] {
            let o = MfOperation::new(f, op);
            let start = sim.trace_len();
            assert_eq!(sim.mf_apply(o), reference.mf_apply(o));
            windows.push(start..sim.trace_len());
            sim.check_invariants().unwrap();
        }
    }
    assert_eq!(sim.view(0).key, 1);
    assert_eq!(sim.view(1).key, 127);
    check_simulation(&reference.take_trace(), &sim.take_trace(), &windows).unwrap();
}
