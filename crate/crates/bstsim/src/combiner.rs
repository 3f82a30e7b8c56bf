//! Runs two online BST algorithms on one tree so the total cost stays within a constant
//! factor of the cheaper one. Phase I doubles the work of each algorithm per round and
//! rewinds the tree in between; Phase II gives each a fixed budget per round and switches
//! between saved tree states.

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

use thiserror::Error;

use crate::bst_vm::UnitOp;
use crate::buffers::{key_width, Asb, Buf, Entry, Ohb, Tsb};
use crate::mf_vm::FingerId;
use crate::proto::{Algorithm, Coroutine, Ctx, Req, Resp};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CombinerConfig {
    /// Phase I covers about `d1 * n` operations per structure.
    pub d1: usize,
    /// Phase II rounds run `c * max(n, f)` operations.
    pub c: usize,
    /// Overhead term of the combined bound; `n` when unset.
    pub f: Option<usize>,
    /// Buffer cell capacity in words of `⌈log2 n⌉` bits; unchecked when unset.
    pub w: Option<usize>,
}

impl Default for CombinerConfig {
    fn default() -> Self {
        CombinerConfig { d1: 1, c: 64, f: None, w: None }
    }
}

impl CombinerConfig {
    /// Index of the last Phase I round.
    pub fn last_round(&self, n: usize) -> u32 {
        ceil_log2(self.d1.max(1) * n.max(1)) + 1
    }

    pub fn phase2_budget(&self, n: usize) -> u64 {
        (self.c * n.max(self.f.unwrap_or(n))) as u64
    }

    /// Operations the combiner issues before Phase II, as a bound.
    pub fn phase1_bound(&self, n: usize) -> usize {
        PHASE1_PER_NODE * self.d1.max(1) * n.max(1)
    }

    /// History entries one structure may record in Phase I.
    pub fn history_len(&self, n: usize) -> usize {
        1 << self.last_round(n)
    }
}

fn ceil_log2(x: usize) -> u32 {
    usize::BITS - (x.max(1) - 1).leading_zeros()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CombineError {
    #[error("need at least two algorithms, got {0}")]
    TooFew(usize),
}

/// Accesses completed by the running structure in one Phase II round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundLog {
    pub mu: usize,
    pub restarted: bool,
    pub completed: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct CombinerStats {
    /// For each finished Phase I round, whether the tree was back in its initial shape.
    pub phase1_restored: Vec<bool>,
    pub phase2: Vec<RoundLog>,
    pub finished_in_phase1: bool,
}

impl CombinerStats {
    pub fn phase1_ok(&self) -> bool {
        self.phase1_restored.iter().all(|&r| r)
    }

    /// No structure completes the same access in two different Phase II rounds.
    pub fn phase2_logs_disjoint(&self) -> bool {
        let mut seen = [HashSet::new(), HashSet::new()];
        for r in &self.phase2 {
            let mine: HashSet<usize> = r.completed.iter().copied().collect();
            if !seen[r.mu].is_disjoint(&mine) {
                return false;
            }
            seen[r.mu].extend(mine);
        }
        true
    }
}

/// Phase I plus the start-state save, in operations per node at `d1 = 1`.
const PHASE1_PER_NODE: usize = 72;

const OWN: usize = 10;
const AUX: [usize; 2] = [0, 1];
const LF: usize = 2;
const CURSORS: [usize; 7] = [3, 4, 5, 6, 7, 8, 9];

/// Two algorithms combined on one tree.
#[derive(Clone)]
pub struct OneTree {
    a: Rc<dyn Algorithm>,
    b: Rc<dyn Algorithm>,
    cfg: CombinerConfig,
    stats: Rc<RefCell<CombinerStats>>,
}

impl OneTree {
    pub fn new(a: Rc<dyn Algorithm>, b: Rc<dyn Algorithm>, cfg: CombinerConfig) -> OneTree {
        OneTree { a, b, cfg, stats: Rc::default() }
    }

    /// Statistics of the most recent run.
    pub fn stats(&self) -> Rc<RefCell<CombinerStats>> {
        self.stats.clone()
    }

    /// Phase II round length for structure `mu`: the configured budget on top of what a
    /// fresh start of that structure costs.
    fn round_budget(&self, mu: usize, n: usize) -> u64 {
        let alg = if mu == 0 { &self.a } else { &self.b };
        self.cfg.phase2_budget(n) + alg.restart_cost(n) as u64
    }

    fn own_bits(&self, n: usize) -> usize {
        let k = key_width(n as u64);
        let stripes = self.cfg.history_len(n).div_ceil(n.max(1));
        let ohb = |fingers: usize| 3 + if fingers <= 1 { 0 } else { key_width(fingers as u64 - 1) };
        2 * k + stripes * (k + ohb(self.a.fingers()) + ohb(self.b.fingers())) + 3 * 2
    }
}

fn leaves(name: String) -> String {
    name.strip_prefix("combine:").map(str::to_string).unwrap_or(name)
}

impl Algorithm for OneTree {
    fn name(&self) -> String {
        format!("combine:{}+{}", leaves(self.a.name()), leaves(self.b.name()))
    }

    fn fingers(&self) -> usize {
        self.a.fingers() + self.b.fingers() + OWN
    }

    fn aug_bits(&self, n: usize) -> usize {
        self.own_bits(n) + self.a.aug_bits(n) + self.b.aug_bits(n)
    }

    fn restart_cost(&self, n: usize) -> usize {
        self.cfg.phase1_bound(n)
    }

    fn spawn(&self, ctx: Ctx) -> Coroutine {
        let me = self.clone();
        Coroutine::new(&ctx.clone(), async move {
            *me.stats.borrow_mut() = CombinerStats::default();
            let mut run = Run::start(me, ctx).await;
            run.go().await;
        })
    }
}

/// Combines `algs` pairwise in a balanced binary tree of [`OneTree`]s.
pub fn multi_tree(algs: &[Rc<dyn Algorithm>], cfg: CombinerConfig) -> Result<OneTree, CombineError> {
    fn build(algs: &[Rc<dyn Algorithm>], cfg: CombinerConfig) -> Rc<dyn Algorithm> {
        if algs.len() == 1 {
            return algs[0].clone();
        }
        Rc::new(split(algs, cfg))
    }
    fn split(algs: &[Rc<dyn Algorithm>], cfg: CombinerConfig) -> OneTree {
        let mid = algs.len().div_ceil(2);
        OneTree::new(build(&algs[..mid], cfg), build(&algs[mid..], cfg), cfg)
    }
    if algs.len() < 2 {
        return Err(CombineError::TooFew(algs.len()));
    }
    Ok(split(algs, cfg))
}

struct Emulated {
    alg: Rc<dyn Algorithm>,
    base: FingerId,
    co: Coroutine,
    resp: Resp,
    /// Index (1-based) of the access the structure is serving.
    idx: usize,
    ops_in_access: u64,
    /// Finger keys when the structure's tree state was last saved.
    at_save: Vec<u64>,
}

enum Flow {
    Budget,
    Exhausted,
}

struct Run {
    ctx: Ctx,
    cfg: CombinerConfig,
    n: usize,
    budget: [u64; 2],
    own: FingerId,
    buf: Buf,
    asb: Asb,
    ohb: [Ohb; 2],
    tsb: [Tsb; 2],
    start: Tsb,
    st: [Emulated; 2],
    phase2: bool,
    ahead: Option<usize>,
    last: Option<u64>,
    pulled: usize,
    reported: usize,
    log: Vec<usize>,
    stats: Rc<RefCell<CombinerStats>>,
}

impl Run {
    async fn start(me: OneTree, ctx: Ctx) -> Run {
        let n = ctx.len();
        let fa = me.a.fingers();
        let own = fa + me.b.fingers();
        let tag_base = 0x100 + 32 * ctx.global(own) as u16;
        let cursors: Vec<FingerId> = CURSORS.iter().map(|c| own + c).collect();
        let mut buf = Buf::new(ctx.clone(), [own + AUX[0], own + AUX[1]], &cursors, tag_base).await;
        if let Some(w) = me.cfg.w {
            buf.set_cell_words(w);
        }
        let stripes = me.cfg.history_len(n).div_ceil(n);
        let asb = Asb::new(&mut buf, [0, 1], stripes);
        let ohb = [Ohb::new(&mut buf, 2, stripes, fa), Ohb::new(&mut buf, 3, stripes, me.b.fingers())];
        let tsb = [Tsb::new(&mut buf, 4), Tsb::new(&mut buf, 5)];
        let start = Tsb::new(&mut buf, 6);
        let emulate = |alg: &Rc<dyn Algorithm>, base| Emulated {
            alg: alg.clone(),
            base,
            co: alg.spawn(ctx.child(base)),
            resp: Resp::Start,
            idx: 0,
            ops_in_access: 0,
            at_save: Vec::new(),
        };
        let st = [emulate(&me.a, 0), emulate(&me.b, fa)];
        Run {
            ctx: ctx.clone(),
            cfg: me.cfg,
            n,
            budget: [me.round_budget(0, n), me.round_budget(1, n)],
            own,
            buf,
            asb,
            ohb,
            tsb,
            start,
            st,
            phase2: false,
            ahead: None,
            last: None,
            pulled: 0,
            reported: 0,
            log: Vec::new(),
            stats: me.stats.clone(),
        }
    }

    async fn go(&mut self) {
        let initial = self.ctx.machine().borrow().logical_shape();
        let s = self.cfg.last_round(self.n);
        for i in 0..=s {
            let mu = (i % 2) as usize;
            self.redo(mu).await;
            let have = self.ohb[mu].len() as u64;
            if let Flow::Exhausted = self.step(mu, (1u64 << i) - have).await {
                self.stats.borrow_mut().finished_in_phase1 = true;
                return;
            }
            if i + 1 >= s {
                self.save(mu).await;
            }
            self.undo(mu).await;
            let restored = self.ctx.machine().borrow().logical_shape() == initial;
            self.stats.borrow_mut().phase1_restored.push(restored);
        }
        self.ahead = self.asb.ahead();
        self.last = self.asb.last();
        self.pulled = self.asb.recorded();
        self.start.save(&mut self.buf, self.own + LF).await;
        self.phase2 = true;
        let mut mu = (s % 2) as usize;
        loop {
            mu = 1 - mu;
            let restarted = self.ahead == Some(1 - mu);
            if restarted {
                self.start.load(&mut self.buf, self.own + LF).await;
                self.restart(mu).await;
            } else {
                self.load(mu).await;
            }
            let flow = self.step(mu, self.budget[mu]).await;
            let completed = std::mem::take(&mut self.log);
            self.stats.borrow_mut().phase2.push(RoundLog { mu, restarted, completed });
            if let Flow::Exhausted = flow {
                return;
            }
            self.save(mu).await;
        }
    }

    async fn save(&mut self, mu: usize) {
        self.tsb[mu].save(&mut self.buf, self.own + LF).await;
        let e = &self.st[mu];
        let keys = (e.base..e.base + e.alg.fingers()).map(|f| self.ctx.view(f).key).collect();
        self.st[mu].at_save = keys;
    }

    /// Restores structure `mu`'s tree state and walks its fingers back to where they were.
    async fn load(&mut self, mu: usize) {
        self.tsb[mu].load(&mut self.buf, self.own + LF).await;
        let base = self.st[mu].base;
        for (i, key) in self.st[mu].at_save.clone().into_iter().enumerate() {
            self.ctx.seek(base + i, key).await;
        }
    }

    /// Puts every finger of structure `mu` on the root and starts it afresh.
    async fn restart(&mut self, mu: usize) {
        let e = &self.st[mu];
        let (base, fingers) = (e.base, e.alg.fingers());
        for f in base..base + fingers {
            self.ctx.to_root(f).await;
        }
        let e = &mut self.st[mu];
        e.co = e.alg.spawn(self.ctx.child(base));
        e.resp = Resp::Start;
        e.ops_in_access = 0;
    }

    /// Applies an op at a machine-wide finger, counting rotations as essential.
    async fn apply(&mut self, f: FingerId, op: UnitOp) -> u64 {
        if op == UnitOp::RotateWithParent {
            self.buf.essential().await;
        }
        self.ctx.global_op(f, op).await
    }

    async fn redo(&mut self, mu: usize) {
        while self.ohb[mu].pos() < self.ohb[mu].len() {
            let (f, e) = self.ohb[mu].redo_next(&mut self.buf).await;
            let g = self.ctx.global(self.st[mu].base + f);
            for op in e.redo() {
                self.apply(g, op).await;
            }
        }
    }

    async fn undo(&mut self, mu: usize) {
        while self.ohb[mu].pos() > 0 {
            let (f, e) = self.ohb[mu].undo_next(&mut self.buf).await;
            let g = self.ctx.global(self.st[mu].base + f);
            for op in e.undo() {
                self.apply(g, op).await;
            }
        }
    }

    /// Runs structure `mu` for `budget` operations (an access with no operation counts as one).
    async fn step(&mut self, mu: usize, budget: u64) -> Flow {
        let mut done = 0;
        while done < budget {
            let resp = self.st[mu].resp;
            match self.st[mu].co.resume(resp) {
                Req::Op(f, op) => {
                    let side = self.ctx.view_global(f).side;
                    let key = self.apply(f, op).await;
                    self.st[mu].resp = Resp::Key(key);
                    self.st[mu].ops_in_access += 1;
                    done += 1;
                    if !self.phase2 {
                        let local = f - self.ctx.global(self.st[mu].base);
                        self.ohb[mu].record(&mut self.buf, local, Entry::of(op, side)).await;
                    }
                }
                Req::Done(key) => {
                    if self.st[mu].ops_in_access == 0 {
                        done += 1;
                        if !self.phase2 {
                            self.ohb[mu].record(&mut self.buf, 0, Entry::Null).await;
                        }
                    }
                    self.st[mu].ops_in_access = 0;
                    let idx = self.st[mu].idx;
                    if self.phase2 {
                        self.log.push(idx);
                    }
                    if idx > self.reported {
                        debug_assert_eq!(idx, self.reported + 1);
                        self.reported = idx;
                        self.ctx.done(key).await;
                    }
                    self.st[mu].resp = Resp::Ack;
                }
                Req::Next => match self.new_access(mu).await {
                    Some(k) => self.st[mu].resp = Resp::Access(Some(k)),
                    None => return Flow::Exhausted,
                },
                Req::Finished => return Flow::Exhausted,
            }
        }
        Flow::Budget
    }

    async fn new_access(&mut self, mu: usize) -> Option<u64> {
        if !self.phase2 {
            let k = self.asb.next(&mut self.buf, mu).await?;
            self.st[mu].idx = self.asb.count(mu);
            return Some(k);
        }
        if self.ahead.is_none() || self.ahead == Some(mu) {
            self.ahead = Some(mu);
            let k = self.ctx.next_access().await?;
            self.last = Some(k);
            self.pulled += 1;
            self.st[mu].idx = self.pulled;
            Some(k)
        } else {
            self.ahead = None;
            self.st[mu].idx = self.pulled;
            self.last
        }
    }
}
