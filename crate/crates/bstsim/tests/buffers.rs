use std::cell::RefCell;
use std::rc::Rc;

use bstsim::buffers::{leftify, leftify_cost, unleftify, Asb, Buf, Entry, Ohb, Tsb};
use bstsim::proto::{run_direct, run_fed, Ctx};
use bstsim::{MfMachine, RefMachine, TreeArena, TreeShape, UnitOp, VmError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TAGS: u16 = 16;

fn machine(shape: &TreeShape, fingers: usize, words: usize) -> Rc<RefCell<RefMachine>> {
    let mut m = RefMachine::new(TreeArena::with_shape(shape), fingers);
    m.set_aug_words(words);
    Rc::new(RefCell::new(m))
}

fn cost(m: &Rc<RefCell<RefMachine>>) -> u64 {
    m.borrow().cost()
}

/// Keys of the nodes the cursor visits while scanning `cells` cells.
async fn scan(ctx: &Ctx, buf: &mut Buf, cells: usize) -> Vec<u64> {
    let mut keys = vec![ctx.view(buf.cursor_finger(0)).key];
    for _ in 1..cells {
        buf.next_cell(0).await;
        keys.push(ctx.view(buf.cursor_finger(0)).key);
    }
    keys
}

/// Keys of the `k` smallest-in-order nodes among the first `k` of a pre-order walk.
fn expected_buffer(t: &TreeArena, k: usize) -> Vec<u64> {
    fn pre(t: &TreeArena, h: Option<bstsim::NodeHandle>, out: &mut Vec<u64>) {
        if let Some(h) = h {
            out.push(t.key(h));
            pre(t, t.left(h), out);
            pre(t, t.right(h), out);
        }
    }
    let mut keys = Vec::new();
    pre(t, Some(t.root()), &mut keys);
    keys.truncate(k);
    keys.sort();
    keys
}

#[test]
fn cells_follow_key_order_on_a_seven_node_tree() {
    let shape = TreeShape::balanced(7);
    let m = machine(&shape, 3, 8);
    let seen = run_direct(m.clone(), |ctx| async move {
        let mut buf = Buf::new(ctx.clone(), [0, 1], &[2], TAGS).await;
        let mut seen = vec![(buf.allocated(), ctx.view(2).key)];
        for _ in 1..7 {
            buf.next_cell(0).await;
            seen.push((buf.allocated(), ctx.view(2).key));
        }
        seen
    })
    .unwrap();
    let t = TreeArena::with_shape(&shape);
    assert_eq!(seen[0].0, 2);
    assert_eq!(seen[1].1, expected_buffer(&t, seen[1].0)[1]);
    for (cell, &(alloc, key)) in seen.iter().enumerate() {
        assert_eq!(key, expected_buffer(&t, alloc)[cell], "cell {cell}");
    }
    assert_eq!(seen[6], (7, 7));
}

#[test]
fn scanning_without_rotations_is_linear() {
    for n in [64usize, 512, 2048] {
        let m = machine(&TreeShape::balanced(n), 3, 8);
        let before = cost(&m);
        run_direct(m.clone(), |ctx| async move {
            let mut buf = Buf::new(ctx.clone(), [0, 1], &[2], TAGS).await;
            scan(&ctx, &mut buf, n).await;
        })
        .unwrap();
        let c = cost(&m) - before;
        assert!(c <= 11 * n as u64, "n={n}: {c}");
    }
}

#[test]
fn cells_round_trip_and_survive_reallocation() {
    let n = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = TreeShape::random(n, &mut rng);
    let m = machine(&shape, 3, 8);
    let (forward, backward) = run_direct(m, |ctx| async move {
        let mut buf = Buf::new(ctx.clone(), [0, 1], &[2], TAGS).await;
        let tag = buf.alloc_slots(12, 1);
        let mut forward = Vec::new();
        for c in 0..n {
            if c > 0 {
                buf.next_cell(0).await;
            }
            buf.write(0, tag, 12, (c * 7 % 4096) as u128);
            forward.push(buf.read(0, tag).unwrap());
        }
        let mut backward = vec![buf.read(0, tag).unwrap()];
        for _ in 1..n {
            buf.prev_cell(0).await;
            backward.push(buf.read(0, tag).unwrap());
        }
        backward.reverse();
        (forward, backward)
    })
    .unwrap();
    let want: Vec<u128> = (0..n).map(|c| (c * 7 % 4096) as u128).collect();
    assert_eq!(forward, want);
    assert_eq!(backward, want);
}

#[test]
fn forced_epoch_rollover_keeps_every_cell() {
    let n = 128;
    let m = machine(&TreeShape::left_path(n), 3, 8);
    run_direct(m, |ctx| async move {
        let mut buf = Buf::new(ctx.clone(), [0, 1], &[2], TAGS).await;
        let tag = buf.alloc_slots(8, 1);
        for c in 0..20 {
            if c > 0 {
                buf.next_cell(0).await;
            }
            buf.write(0, tag, 8, c as u128 + 1);
        }
        for _ in 0..19 {
            buf.prev_cell(0).await;
        }
        let before = buf.reallocations();
        let epoch = buf.epoch();
        while buf.epoch() < epoch + 3 {
            buf.essential().await;
        }
        assert!(buf.reallocations() > before);
        for c in 0..20 {
            if c > 0 {
                buf.next_cell(0).await;
            }
            assert_eq!(buf.read(0, tag), Some(c as u128 + 1));
        }
    })
    .unwrap();
}

#[test]
fn oversize_write_is_rejected() {
    let m = machine(&TreeShape::balanced(16), 3, 1);
    let r = run_direct(m, |ctx| async move {
        let mut buf = Buf::new(ctx.clone(), [0, 1], &[2], TAGS).await;
        let tag = buf.alloc_slots(40, 1);
        buf.write(0, tag, 40, 1);
    });
    assert!(matches!(r, Err(VmError::BudgetExceeded { .. })));
}

#[test]
fn cell_width_limit_rejects_wide_slots() {
    let m = machine(&TreeShape::balanced(16), 3, 8);
    let r = run_direct(m.clone(), |ctx| async move {
        let mut buf = Buf::new(ctx.clone(), [0, 1], &[2], TAGS).await;
        buf.set_cell_words(2);
        buf.alloc_slots(8, 1);
    });
    assert!(r.is_ok());
    let r = run_direct(m, |ctx| async move {
        let mut buf = Buf::new(ctx.clone(), [0, 1], &[2], TAGS).await;
        buf.set_cell_words(2);
        buf.alloc_slots(9, 1);
        buf.next_cell(0).await;
    });
    assert!(matches!(r, Err(VmError::BudgetExceeded { bits: 9, capacity: 8 })));
}

#[test]
fn access_buffer_tracks_who_is_ahead() {
    let m = machine(&TreeShape::balanced(31), 4, 8);
    let input = [5u64, 9, 2, 31, 17];
    let got = run_fed(m, &input, |ctx| async move {
        let mut buf = Buf::new(ctx.clone(), [0, 1], &[2, 3], TAGS).await;
        let mut asb = Asb::new(&mut buf, [0, 1], 1);
        assert_eq!(asb.ahead(), None);
        let mut a = Vec::new();
        for _ in 0..3 {
            a.push(asb.next(&mut buf, 0).await.unwrap());
        }
        assert_eq!(asb.ahead(), Some(0));
        let mut b = Vec::new();
        for _ in 0..4 {
            b.push(asb.next(&mut buf, 1).await.unwrap());
        }
        assert_eq!(asb.ahead(), Some(1));
        assert_eq!(asb.recorded(), 4);
        a.push(asb.next(&mut buf, 0).await.unwrap());
        assert_eq!(asb.ahead(), None);
        b.push(asb.next(&mut buf, 1).await.unwrap());
        assert_eq!(asb.last(), Some(17));
        assert_eq!(asb.next(&mut buf, 1).await, None);
        (a, b)
    })
    .unwrap();
    assert_eq!(got.0, vec![5, 9, 2, 31]);
    assert_eq!(got.1, vec![5, 9, 2, 31, 17]);
}

/// A random legal op at finger `f`.
fn random_op(ctx: &Ctx, f: usize, rng: &mut ChaCha8Rng) -> UnitOp {
    let v = ctx.view(f);
    loop {
        let op = UnitOp::ALL[rng.random_range(0..4)];
        let ok = match op {
            UnitOp::MoveParent | UnitOp::RotateWithParent => v.has_parent,
            UnitOp::MoveLeft => v.has_left,
            UnitOp::MoveRight => v.has_right,
        };
        if ok {
            return op;
        }
    }
}

#[test]
fn history_undo_restores_and_redo_replays() {
    let n = 256;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shape = TreeShape::random(n, &mut rng);
    let m = machine(&shape, 4, 8);
    let start = m.borrow().logical_shape();
    let (after, redo) = run_direct(m.clone(), |ctx| async move {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = 3;
        let mut buf = Buf::new(ctx.clone(), [0, 1], &[2], TAGS).await;
        let mut ohb = Ohb::new(&mut buf, 0, 4, 1);
        let walker = ctx.view(w).key;
        for _ in 0..1000 {
            let op = random_op(&ctx, w, &mut rng);
            let e = Entry::of(op, ctx.view(w).side);
            if op == UnitOp::RotateWithParent {
                buf.essential().await;
            }
            ctx.op(w, op).await;
            ohb.record(&mut buf, 0, e).await;
        }
        let after = ctx.machine().borrow().logical_shape();
        let end = ctx.view(w).key;
        let mut entries = Vec::new();
        while ohb.pos() > 0 {
            let (f, e) = ohb.undo_next(&mut buf).await;
            assert_eq!(f, 0);
            entries.push(e);
            for op in e.undo() {
                if op == UnitOp::RotateWithParent {
                    buf.essential().await;
                }
                ctx.op(w, op).await;
            }
        }
        assert_eq!(ctx.view(w).key, walker);
        let undone = ctx.machine().borrow().logical_shape();
        let mut redo = Vec::new();
        while ohb.pos() < ohb.len() {
            let (_, e) = ohb.redo_next(&mut buf).await;
            for op in e.redo() {
                if op == UnitOp::RotateWithParent {
                    buf.essential().await;
                }
                ctx.op(w, op).await;
                redo.push(op);
            }
        }
        assert_eq!(ctx.view(w).key, end);
        assert_eq!(ctx.machine().borrow().logical_shape(), after);
        entries.reverse();
        assert_eq!(entries.len(), 1000);
        (undone, redo)
    })
    .unwrap();
    assert_eq!(after, start);
    let mut fresh = TreeArena::with_shape(&shape);
    let mut walker = RefMachine::new(fresh.clone(), 4);
    for op in &redo {
        walker.mf_apply(bstsim::MfOperation::new(3, *op)).unwrap();
    }
    for op in redo {
        fresh.apply(op).unwrap();
    }
    assert_eq!(walker.logical_shape(), m.borrow().logical_shape());
    assert_eq!(fresh.snapshot_shape(), m.borrow().logical_shape());
}

fn scramble<'a>(ctx: &'a Ctx, buf: &'a mut Buf, w: usize, ops: usize, seed: u64) -> impl std::future::Future<Output = ()> + 'a {
    async move {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..ops {
            let op = random_op(ctx, w, &mut rng);
            if op == UnitOp::RotateWithParent {
                buf.essential().await;
            }
            ctx.op(w, op).await;
        }
    }
}

#[test]
fn tree_state_save_then_load() {
    let n = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let shape = TreeShape::random(n, &mut rng);
    let m = machine(&shape, 5, 8);
    let start = m.borrow().logical_shape();
    let m2 = m.clone();
    run_direct(m.clone(), |ctx| async move {
        let mut buf = Buf::new(ctx.clone(), [0, 1], &[2], TAGS).await;
        let mut tsb = Tsb::new(&mut buf, 0);
        tsb.save(&mut buf, 3).await;
        scramble(&ctx, &mut buf, 4, 3000, 1).await;
        assert_ne!(m2.borrow().logical_shape(), start);
        tsb.load(&mut buf, 3).await;
        assert_eq!(m2.borrow().logical_shape(), start);
        assert!(!ctx.view(3).has_parent);
    })
    .unwrap();
}

#[test]
fn two_tree_states_alternate() {
    let n = 150;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let shape = TreeShape::random(n, &mut rng);
    let m = machine(&shape, 6, 8);
    let m2 = m.clone();
    run_direct(m, |ctx| async move {
        let shape = || m2.borrow().logical_shape();
        let mut buf = Buf::new(ctx.clone(), [0, 1], &[2, 3], TAGS).await;
        let mut a = Tsb::new(&mut buf, 0);
        let mut b = Tsb::new(&mut buf, 1);
        scramble(&ctx, &mut buf, 5, 500, 2).await;
        a.save(&mut buf, 4).await;
        a.load(&mut buf, 4).await;
        let sa = shape();
        scramble(&ctx, &mut buf, 5, 500, 3).await;
        b.save(&mut buf, 4).await;
        b.load(&mut buf, 4).await;
        let sb = shape();
        assert_ne!(sa, sb);
        for i in 0..10 {
            scramble(&ctx, &mut buf, 5, 100, 10 + i).await;
            a.load(&mut buf, 4).await;
            assert_eq!(shape(), sa, "round {i}");
            b.load(&mut buf, 4).await;
            assert_eq!(shape(), sb, "round {i}");
        }
    })
    .unwrap();
}

#[test]
fn leftify_step_counts() {
    let mut t = TreeArena::with_shape(&TreeShape::leaf());
    assert_eq!(leftify_cost(&leftify(&mut t)), 0);
    for n in [2usize, 9, 100] {
        let mut t = TreeArena::with_shape(&TreeShape::left_path(n));
        assert_eq!(leftify_cost(&leftify(&mut t)), n - 1);
        // Every node is rotated up once, then the finger walks down the new left path.
        let mut t = TreeArena::with_shape(&TreeShape::right_path(n));
        let steps = leftify(&mut t);
        assert_eq!(steps.iter().filter(|&&s| s).count(), n - 1);
        assert_eq!(leftify_cost(&steps), 3 * (n - 1));
        assert_eq!(t.snapshot_shape(), TreeArena::with_shape(&TreeShape::left_path(n)).snapshot_shape());
    }
}

#[test]
fn leftify_is_at_most_three_n_and_reversible() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.random_range(2..=300);
        let shape = TreeShape::random(n, &mut rng);
        let mut t = TreeArena::with_shape(&shape);
        let steps = leftify(&mut t);
        assert!(leftify_cost(&steps) <= 3 * n - 3);
        unleftify(&mut t, &steps);
        assert_eq!(t.snapshot_shape(), TreeArena::with_shape(&shape).snapshot_shape());
        assert_eq!(t.finger(), t.root());
    }
}
