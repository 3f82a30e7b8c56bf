use bstsim::bst_vm::parse_shape;
use bstsim::buffers::{leftify, leftify_cost, unleftify};
use bstsim::deque::{DequeHarness, Orientation};
use bstsim::mf_vm::{check_simulation, parse_trace};
use bstsim::multifinger::MfToBst;
use bstsim::{MfMachine, MfOperation, RefMachine, TreeArena, TreeShape, UnitOp};
use clap::ValueEnum;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Failure, ReplayArgs, VerifyArgs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    All,
    Deque,
    Mf,
    Leftify,
}

fn deque_vs_oracle(seed: u64) -> Result<String, String> {
    let ops = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_op = Vec::new();
    for orient in [Orientation::Min, Orientation::Max] {
        let sizes: Vec<usize> = (0..2 * ops + 2).map(|_| rng.random_range(0..3)).collect();
        let mut h = DequeHarness::new(orient, &sizes);
        let mut done = 0;
        while done < ops {
            match rng.random_range(0..4) {
                0 if h.can_push_front() => h.push_front(),
                1 if h.can_push_back() => h.push_back(),
                2 if !h.oracle.is_empty() => drop(h.pop_front().map_err(|e| e.to_string())?),
                3 if !h.oracle.is_empty() => drop(h.pop_back().map_err(|e| e.to_string())?),
                _ => continue,
            }
            done += 1;
            h.check().map_err(|e| format!("{orient:?} op {done}: {e}"))?;
        }
        let per = h.cost() as f64 / done as f64;
        if per > 12.0 {
            return Err(format!("{orient:?}: {per:.2} unit ops per deque op"));
        }
        per_op.push(format!("{orient:?} {per:.2}"));
    }
    Ok(format!("{ops} ops per orientation, unit ops per op: {}", per_op.join(", ")))
}

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
    MfOperation::new(f, *legal.choose(rng).expect("n >= 2"))
}

/// Applies `ops` to both machines, checking keys, invariants, shapes and touched keys.
fn compare(tree: TreeArena, fingers: usize, ops: impl IntoIterator<Item = MfOperation>) -> Result<(RefMachine, MfToBst), String> {
    let mut reference = RefMachine::new(tree.clone(), fingers);
    let mut sim = MfToBst::new(tree, fingers);
    reference.enable_trace();
    sim.enable_trace();
    let mut windows = Vec::new();
    for (i, op) in ops.into_iter().enumerate() {
        let start = sim.trace_len();
        let want = reference.mf_apply(op).map_err(|e| format!("op {i} ({op}): {e}"))?;
        let got = sim.mf_apply(op).map_err(|e| format!("op {i} ({op}): {e}"))?;
        if got != want {
            return Err(format!("op {i} ({op}): simulation at key {got}, reference at {want}"));
        }
        windows.push(start..sim.trace_len());
        sim.check_invariants().map_err(|e| format!("op {i}: {e}"))?;
    }
    if sim.logical_shape() != reference.logical_shape() {
        return Err("final shapes differ".into());
    }
    check_simulation(&reference.take_trace(), &sim.take_trace(), &windows).map_err(|e| e.to_string())?;
    Ok((reference, sim))
}

fn mf_vs_reference(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs = 0;
    let mut worst: f64 = 0.0;
    for n in [16usize, 64, 256] {
        for fingers in 1..=4 {
            let tree = TreeArena::with_shape(&TreeShape::random(n, &mut rng));
            let k = 20 * n;
            let mut driver = RefMachine::new(tree.clone(), fingers);
            let ops: Vec<MfOperation> = (0..k)
                .map(|_| {
                    let op = random_op(&driver, &mut rng);
                    driver.mf_apply(op).expect("legal op");
                    op
                })
                .collect();
            let (_, sim) = compare(tree, fingers, ops).map_err(|e| format!("n={n} fingers={fingers}: {e}"))?;
            worst = worst.max(sim.cost() as f64 / k as f64);
            runs += 1;
        }
    }
    Ok(format!("{runs} random sequences, max unit ops per operation {worst:.2}"))
}

fn leftify_bound(seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = 500;
    for _ in 0..trees {
        let n = rng.random_range(2..=512);
        let shape = TreeShape::random(n, &mut rng);
        let mut t = TreeArena::with_shape(&shape);
        let steps = leftify(&mut t);
        let c = leftify_cost(&steps);
        if c > 3 * n - 3 {
            return Err(format!("n={n}: {c} ops > 3n-3"));
        }
        unleftify(&mut t, &steps);
        if t.snapshot_shape() != TreeArena::with_shape(&shape).snapshot_shape() {
            return Err(format!("n={n}: undoing the steps did not restore the tree"));
        }
    }
    Ok(format!("{trees} random trees within 3n-3 and reversible"))
}

pub fn verify(args: VerifyArgs) -> Result<(), Failure> {
    let all = args.suite.contains(&Suite::All);
    let suites: [(Suite, &str, fn(u64) -> Result<String, String>); 3] = [
        (Suite::Deque, "deque-vs-oracle", deque_vs_oracle),
        (Suite::Mf, "mf-vs-reference", mf_vs_reference),
        (Suite::Leftify, "leftify", leftify_bound),
    ];
    let mut failed = 0;
    for (suite, name, f) in suites {
        if !all && !args.suite.contains(&suite) {
            continue;
        }
        match f(args.seed) {
            Ok(detail) => println!("{name}: pass ({detail})"),
            Err(e) => {
                println!("{name}: FAIL ({e})");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::violation(format!("{failed} suite(s) failed")));
    }
    Ok(())
}

pub fn replay(args: ReplayArgs) -> Result<(), Failure> {
    let read = |p: &std::path::Path| std::fs::read_to_string(p).map_err(|e| Failure::usage(format!("cannot read {}: {e}", p.display())));
    let ops = parse_trace(&read(&args.trace)?).map_err(|e| Failure::usage(format!("{}: {e}", args.trace.display())))?;
    let tree = match (&args.initial_tree, args.n) {
        (Some(path), _) => {
            let (shape, keys) = parse_shape(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            TreeArena::build(&shape, &keys).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(0)) => return Err(Failure::usage("n must be positive")),
        (None, Some(n)) => TreeArena::with_shape(&TreeShape::balanced(n)),
        (None, None) => return Err(Failure::usage("give --initial-tree or --n")),
    };
    let needed = ops.iter().map(|o| o.finger + 1).max().unwrap_or(1);
    let fingers = args.fingers.unwrap_or(needed);
    if fingers < needed {
        return Err(Failure::usage(format!("the trace uses finger {} but only {fingers} fingers were given", needed - 1)));
    }
    let (reference, sim) = compare(tree, fingers, ops.iter().copied()).map_err(Failure::violation)?;
    println!("operations: {}", ops.len());
    println!("reference cost: {}", reference.cost());
    println!("simulated cost: {}", sim.cost());
    println!("final tree: {}", reference.logical_shape());
    Ok(())
}
