//! Steppable algorithms. An algorithm runs as a coroutine that yields one unit operation
//! (or an access request / completion) at a time, so a driver can pause, redirect and
//! interleave it. Reads at a finger are free and go straight to the shared machine.

use std::cell::{Cell, RefCell};
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use thiserror::Error;

use crate::bst_vm::{UnitOp, VmError};
use crate::mf_vm::{FingerId, MfMachine, NodeView, Route};

pub type Shared = Rc<RefCell<dyn MfMachine>>;

pub fn share<M: MfMachine + 'static>(m: M) -> Rc<RefCell<M>> {
    Rc::new(RefCell::new(m))
}

/// What a coroutine asks of its driver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Req {
    /// Apply a unit op at a (machine-wide) finger.
    Op(FingerId, UnitOp),
    /// Request the next access key.
    Next,
    /// The current access has been served.
    Done(u64),
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resp {
    Start,
    Key(u64),
    Access(Option<u64>),
    Ack,
}

#[derive(Default)]
struct Mailbox {
    req: Option<Req>,
    resp: Option<Resp>,
}

/// A coroutine's handle on the machine and on its driver.
#[derive(Clone)]
pub struct Ctx {
    machine: Shared,
    mailbox: Rc<RefCell<Mailbox>>,
    fault: Rc<Cell<Option<VmError>>>,
    base: FingerId,
}

struct Yield {
    mailbox: Rc<RefCell<Mailbox>>,
    req: Option<Req>,
}

impl Future for Yield {
    type Output = Resp;

    fn poll(mut self: Pin<&mut Self>, _: &mut Context<'_>) -> Poll<Resp> {
        if let Some(req) = self.req.take() {
            self.mailbox.borrow_mut().req = Some(req);
            return Poll::Pending;
        }
        match self.mailbox.borrow_mut().resp.take() {
            Some(r) => Poll::Ready(r),
            None => Poll::Pending,
        }
    }
}

impl Ctx {
    pub fn new(machine: Shared) -> Ctx {
        Ctx { machine, mailbox: Rc::default(), fault: Rc::default(), base: 0 }
    }

    /// Context for a nested coroutine whose fingers start at `offset`.
    pub fn child(&self, offset: FingerId) -> Ctx {
        Ctx { machine: self.machine.clone(), mailbox: Rc::default(), fault: self.fault.clone(), base: self.base + offset }
    }

    pub fn machine(&self) -> &Shared {
        &self.machine
    }

    pub fn global(&self, f: FingerId) -> FingerId {
        self.base + f
    }

    pub fn len(&self) -> usize {
        self.machine.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn view_global(&self, f: FingerId) -> NodeView {
        self.machine.borrow().view(f)
    }

    pub fn view(&self, f: FingerId) -> NodeView {
        self.machine.borrow().view(self.base + f)
    }

    pub fn route(&self, f: FingerId, key: u64) -> Route {
        self.machine.borrow().route(self.base + f, key)
    }

    pub fn read_aug(&self, f: FingerId, tag: u16) -> Option<u128> {
        self.machine.borrow().read_aug(self.base + f, tag)
    }

    /// Writes at the finger. A budget violation is latched and stops the run.
    pub fn write_aug(&self, f: FingerId, tag: u16, width: usize, value: u128) {
        if let Err(e) = self.machine.borrow_mut().write_aug(self.base + f, tag, width, value) {
            self.raise(e);
        }
    }

    pub fn clear_aug(&self, f: FingerId, tag: u16) {
        self.machine.borrow_mut().clear_aug(self.base + f, tag);
    }

    /// Latches `e` unless an earlier fault is pending.
    pub fn raise(&self, e: VmError) {
        if self.fault.get().is_none() {
            self.fault.set(Some(e));
        }
    }

    pub fn fault(&self) -> Option<VmError> {
        self.fault.get()
    }

    fn ask(&self, req: Req) -> Yield {
        Yield { mailbox: self.mailbox.clone(), req: Some(req) }
    }

    pub async fn op(&self, f: FingerId, op: UnitOp) -> u64 {
        self.global_op(self.base + f, op).await
    }

    pub async fn global_op(&self, f: FingerId, op: UnitOp) -> u64 {
        match self.ask(Req::Op(f, op)).await {
            Resp::Key(k) => k,
            r => panic!("driver answered an op with {r:?}"),
        }
    }

    pub async fn next_access(&self) -> Option<u64> {
        match self.ask(Req::Next).await {
            Resp::Access(k) => k,
            r => panic!("driver answered an access request with {r:?}"),
        }
    }

    pub async fn done(&self, key: u64) {
        self.ask(Req::Done(key)).await;
    }

    /// Moves finger `f` to the root with parent moves.
    pub async fn to_root(&self, f: FingerId) {
        while self.view(f).has_parent {
            self.op(f, UnitOp::MoveParent).await;
        }
    }

    /// Finger search from `f` to the node holding `key`.
    pub async fn seek(&self, f: FingerId, key: u64) {
        loop {
            let op = match self.route(f, key) {
                Route::Here => return,
                Route::Up => UnitOp::MoveParent,
                Route::Down(s) => UnitOp::move_to(s),
            };
            self.op(f, op).await;
        }
    }
}

/// A paused computation driven one request at a time.
pub struct Coroutine {
    fut: Option<Pin<Box<dyn Future<Output = ()>>>>,
    mailbox: Rc<RefCell<Mailbox>>,
}

impl Coroutine {
    pub fn new(ctx: &Ctx, fut: impl Future<Output = ()> + 'static) -> Coroutine {
        Coroutine { fut: Some(Box::pin(fut)), mailbox: ctx.mailbox.clone() }
    }

    /// Delivers the answer to the previous request and runs to the next one.
    pub fn resume(&mut self, resp: Resp) -> Req {
        let Some(fut) = self.fut.as_mut() else { return Req::Finished };
        self.mailbox.borrow_mut().resp = Some(resp);
        let mut cx = Context::from_waker(Waker::noop());
        match fut.as_mut().poll(&mut cx) {
            Poll::Ready(()) => {
                self.fut = None;
                Req::Finished
            }
            Poll::Pending => self.mailbox.borrow_mut().req.take().expect("coroutine paused without a request"),
        }
    }
}

/// An online BST algorithm that can be instantiated as a coroutine.
pub trait Algorithm {
    fn name(&self) -> String;
    fn fingers(&self) -> usize;
    /// Aug bits per node the algorithm may use on a tree of `n` nodes.
    fn aug_bits(&self, _n: usize) -> usize {
        0
    }
    /// Operations issued after a fresh start before the first access can complete.
    fn restart_cost(&self, _n: usize) -> usize {
        0
    }
    fn spawn(&self, ctx: Ctx) -> Coroutine;
}

/// Runs `body` to completion against the machine, applying its ops directly.
pub fn run_direct<T: 'static, F, Fut>(machine: Shared, body: F) -> Result<T, VmError>
where
    F: FnOnce(Ctx) -> Fut,
    Fut: Future<Output = T> + 'static,
{
    run_fed(machine, &[], body)
}

/// Like [`run_direct`], answering access requests from `input`.
pub fn run_fed<T: 'static, F, Fut>(machine: Shared, input: &[u64], body: F) -> Result<T, VmError>
where
    F: FnOnce(Ctx) -> Fut,
    Fut: Future<Output = T> + 'static,
{
    let mut input = input.iter().copied();
    let ctx = Ctx::new(machine.clone());
    let out = Rc::new(RefCell::new(None));
    let slot = out.clone();
    let fut = body(ctx.clone());
    let mut co = Coroutine::new(&ctx, async move {
        let v = fut.await;
        *slot.borrow_mut() = Some(v);
    });
    let mut resp = Resp::Start;
    loop {
        match co.resume(resp) {
            Req::Op(f, op) => {
                let key = machine.borrow_mut().mf_apply(crate::mf_vm::MfOperation::new(f, op))?;
                resp = Resp::Key(key);
            }
            Req::Next => resp = Resp::Access(input.next()),
            Req::Done(_) => resp = Resp::Ack,
            Req::Finished => break,
        }
        if let Some(e) = ctx.fault() {
            return Err(e);
        }
    }
    let v = out.borrow_mut().take().expect("body finished");
    Ok(v)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RunError {
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error("access {index}: served {got} but the input holds {want}")]
    WrongAccess { index: usize, got: u64, want: u64 },
    #[error("access {index}: key {key} was never touched")]
    Untouched { index: usize, key: u64 },
    #[error("the algorithm stopped after {served} of {total} accesses")]
    Incomplete { served: usize, total: usize },
    #[error("invariant violated after op {op}: {msg}")]
    Invariant { op: u64, msg: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunReport {
    pub total_ops: u64,
    pub per_access: Vec<u64>,
    pub peak_aug_bits: usize,
}

impl RunReport {
    pub fn ops_per_access(&self) -> f64 {
        if self.per_access.is_empty() {
            0.0
        } else {
            self.total_ops as f64 / self.per_access.len() as f64
        }
    }
}

/// Runs an algorithm on an access sequence, checking that every access is served in
/// order and its key touched. `check` runs after every unit op.
pub fn drive(
    machine: Shared,
    alg: &dyn Algorithm,
    input: &[u64],
    check: &mut dyn FnMut(&dyn MfMachine) -> Result<(), String>,
) -> Result<RunReport, RunError> {
    let ctx = Ctx::new(machine.clone());
    let mut co = alg.spawn(ctx.clone());
    let mut resp = Resp::Start;
    let mut pulled = 0;
    let mut served = 0;
    let mut touched = false;
    let mut report = RunReport::default();
    let mut mark = machine.borrow().cost();
    let mut ops = 0u64;
    loop {
        match co.resume(resp) {
            Req::Op(f, op) => {
                let key = machine.borrow_mut().mf_apply(crate::mf_vm::MfOperation::new(f, op))?;
                ops += 1;
                if served < pulled && key == input[served] {
                    touched = true;
                }
                check(&*machine.borrow()).map_err(|msg| RunError::Invariant { op: ops, msg })?;
                resp = Resp::Key(key);
            }
            Req::Next => {
                let k = input.get(pulled).copied();
                if k.is_some() {
                    pulled += 1;
                    touched = machine_key_at_rest(&machine, input[pulled - 1]);
                }
                resp = Resp::Access(k);
            }
            Req::Done(key) => {
                let want = input.get(served).copied().unwrap_or(u64::MAX);
                if key != want {
                    return Err(RunError::WrongAccess { index: served, got: key, want });
                }
                if !touched && served + 1 == pulled {
                    return Err(RunError::Untouched { index: served, key });
                }
                served += 1;
                touched = false;
                let now = machine.borrow().cost();
                report.per_access.push(now - mark);
                mark = now;
                resp = Resp::Ack;
            }
            Req::Finished => break,
        }
        if let Some(e) = ctx.fault() {
            return Err(e.into());
        }
    }
    if served != input.len() {
        return Err(RunError::Incomplete { served, total: input.len() });
    }
    let m = machine.borrow();
    report.total_ops = m.cost();
    report.peak_aug_bits = m.peak_aug_bits();
    Ok(report)
}

/// An access to a key some finger already rests on counts as touched.
fn machine_key_at_rest(machine: &Shared, key: u64) -> bool {
    let m = machine.borrow();
    (0..m.num_fingers()).any(|f| m.view(f).key == key)
}
