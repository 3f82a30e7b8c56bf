//! Online BST algorithms as steppable coroutines: splay, move-to-root and a static
//! balanced tree. Each access starts by returning the finger to the root.

use crate::bst_vm::{Side, UnitOp};
use crate::buffers::leftify_step;
use crate::proto::{Algorithm, Coroutine, Ctx};

/// Walks finger 0 from the root down to `key`.
async fn descend(ctx: &Ctx, key: u64) {
    ctx.to_root(0).await;
    loop {
        let v = ctx.view(0);
        if v.key == key {
            return;
        }
        let side = if key < v.key { Side::Left } else { Side::Right };
        assert!(v.has_child(side), "key {key} is not in the tree");
        ctx.op(0, UnitOp::move_to(side)).await;
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Splay;

impl Splay {
    async fn run(ctx: Ctx) {
        while let Some(key) = ctx.next_access().await {
            descend(&ctx, key).await;
            loop {
                let v = ctx.view(0);
                let Some(side) = v.side else { break };
                match v.parent_side {
                    None => {
                        ctx.op(0, UnitOp::RotateWithParent).await;
                    }
                    Some(ps) if ps == side => {
                        ctx.op(0, UnitOp::MoveParent).await;
                        ctx.op(0, UnitOp::RotateWithParent).await;
                        ctx.op(0, UnitOp::move_to(side)).await;
                        ctx.op(0, UnitOp::RotateWithParent).await;
                    }
                    Some(_) => {
                        ctx.op(0, UnitOp::RotateWithParent).await;
                        ctx.op(0, UnitOp::RotateWithParent).await;
                    }
                }
            }
            ctx.done(key).await;
        }
    }
}

impl Algorithm for Splay {
    fn name(&self) -> String {
        "splay".into()
    }

    fn fingers(&self) -> usize {
        1
    }

    fn spawn(&self, ctx: Ctx) -> Coroutine {
        Coroutine::new(&ctx.clone(), Self::run(ctx))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MoveToRoot;

impl MoveToRoot {
    async fn run(ctx: Ctx) {
        while let Some(key) = ctx.next_access().await {
            descend(&ctx, key).await;
            while ctx.view(0).has_parent {
                ctx.op(0, UnitOp::RotateWithParent).await;
            }
            ctx.done(key).await;
        }
    }
}

impl Algorithm for MoveToRoot {
    fn name(&self) -> String {
        "mtr".into()
    }

    fn fingers(&self) -> usize {
        1
    }

    fn spawn(&self, ctx: Ctx) -> Coroutine {
        Coroutine::new(&ctx.clone(), Self::run(ctx))
    }
}

/// Rebuilds the tree into a balanced shape on the first access, then only searches.
#[derive(Clone, Copy, Debug, Default)]
pub struct Balanced;

/// Rotates every other node of the left spine below the finger's node, `k` times.
async fn compress(ctx: &Ctx, k: usize) {
    for i in 0..k {
        ctx.op(0, UnitOp::MoveLeft).await;
        ctx.op(0, UnitOp::RotateWithParent).await;
        if i + 1 < k {
            ctx.op(0, UnitOp::MoveLeft).await;
        }
    }
    ctx.to_root(0).await;
}

/// Turns the tree into a left path and folds it into a complete tree.
pub async fn rebalance(ctx: &Ctx) {
    ctx.to_root(0).await;
    while leftify_step(ctx, 0).await.is_some() {}
    ctx.to_root(0).await;
    let n = ctx.len();
    let mut m = (1usize << (usize::BITS - (n + 1).leading_zeros() - 1)) - 1;
    compress(ctx, n - m).await;
    while m > 1 {
        m /= 2;
        compress(ctx, m).await;
    }
}

impl Balanced {
    async fn run(ctx: Ctx) {
        let mut built = false;
        while let Some(key) = ctx.next_access().await {
            if !built {
                rebalance(&ctx).await;
                built = true;
            }
            descend(&ctx, key).await;
            ctx.done(key).await;
        }
    }
}

impl Algorithm for Balanced {
    fn name(&self) -> String {
        "balanced".into()
    }

    fn fingers(&self) -> usize {
        1
    }

    fn spawn(&self, ctx: Ctx) -> Coroutine {
        Coroutine::new(&ctx.clone(), Self::run(ctx))
    }
}
