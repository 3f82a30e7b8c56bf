//! The multifinger BST model: instruction set, the naive reference machine, and the
//! touch-trace correspondence check.

use std::fmt;
use std::ops::Range;

use thiserror::Error;

use crate::bst_vm::{NodeHandle, Side, TreeArena, UnitOp, VmError};

pub type FingerId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MfOperation {
    pub finger: FingerId,
    pub op: UnitOp,
}

impl MfOperation {
    pub fn new(finger: FingerId, op: UnitOp) -> MfOperation {
        MfOperation { finger, op }
    }
}

impl fmt::Display for MfOperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.finger, self.op.code())
    }
}

/// What a finger can see at its node without spending an operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeView {
    pub key: u64,
    pub has_parent: bool,
    pub has_left: bool,
    pub has_right: bool,
    /// Which child of its parent the node is.
    pub side: Option<Side>,
    /// Which child of the grandparent the parent is.
    pub parent_side: Option<Side>,
}

impl NodeView {
    pub fn has_child(&self, side: Side) -> bool {
        match side {
            Side::Left => self.has_left,
            Side::Right => self.has_right,
        }
    }
}

/// Next step on the shortest tree path towards a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Here,
    Up,
    Down(Side),
}

pub trait MfMachine {
    fn num_fingers(&self) -> usize;
    fn len(&self) -> usize;
    /// Largest key in the tree.
    fn max_key(&self) -> u64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn mf_apply(&mut self, op: MfOperation) -> Result<u64, VmError>;
    fn view(&self, f: FingerId) -> NodeView;
    fn route(&self, f: FingerId, key: u64) -> Route;
    fn read_aug(&self, f: FingerId, tag: u16) -> Option<u128>;
    fn write_aug(&mut self, f: FingerId, tag: u16, width: usize, value: u128) -> Result<(), VmError>;
    fn clear_aug(&mut self, f: FingerId, tag: u16);
    /// Unit operations spent on the underlying single-finger tree.
    fn cost(&self) -> u64;
    fn peak_aug_bits(&self) -> usize;
    fn aug_capacity(&self) -> usize;
    /// Shape of the tree as the multifinger algorithm sees it.
    fn logical_shape(&self) -> String;
}

/// Executes multifinger operations directly on a plain tree. Cost is one per operation.
#[derive(Clone, Debug)]
pub struct RefMachine {
    tree: TreeArena,
    fingers: Vec<NodeHandle>,
    trace: Option<Vec<u64>>,
}

impl RefMachine {
    pub fn new(tree: TreeArena, fingers: usize) -> RefMachine {
        let root = tree.root();
        RefMachine { tree, fingers: vec![root; fingers], trace: None }
    }

    pub fn tree(&self) -> &TreeArena {
        &self.tree
    }

    pub fn finger_node(&self, f: FingerId) -> NodeHandle {
        self.fingers[f]
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<u64> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn set_aug_words(&mut self, words: usize) {
        self.tree.set_aug_words(words);
    }

    pub fn into_tree(self) -> TreeArena {
        self.tree
    }
}

pub(crate) fn view_of(t: &TreeArena, h: NodeHandle) -> NodeView {
    let side = t.side_of(h);
    let parent_side = t.parent(h).and_then(|p| t.side_of(p));
    NodeView {
        key: t.key(h),
        has_parent: t.parent(h).is_some(),
        has_left: t.left(h).is_some(),
        has_right: t.right(h).is_some(),
        side,
        parent_side,
    }
}

pub(crate) fn route_in(t: &TreeArena, h: NodeHandle, key: u64) -> Route {
    let k = t.key(h);
    if k == key {
        return Route::Here;
    }
    let side = if key < k { Side::Left } else { Side::Right };
    let mut cur = t.child(h, side);
    while let Some(c) = cur {
        let ck = t.key(c);
        if ck == key {
            return Route::Down(side);
        }
        cur = t.child(c, if key < ck { Side::Left } else { Side::Right });
    }
    Route::Up
}

impl MfMachine for RefMachine {
    fn num_fingers(&self) -> usize {
        self.fingers.len()
    }

    fn len(&self) -> usize {
        self.tree.len()
    }

    fn max_key(&self) -> u64 {
        self.tree.key(NodeHandle(self.tree.len() as u32 - 1))
    }

    fn mf_apply(&mut self, op: MfOperation) -> Result<u64, VmError> {
        let h = *self.fingers.get(op.finger).ok_or(VmError::NoSuchFinger(op.finger))?;
        self.tree.place_finger(h);
        let touched = self.tree.apply(op.op)?;
        self.fingers[op.finger] = touched;
        let key = self.tree.key(touched);
        if let Some(t) = self.trace.as_mut() {
            t.push(key);
        }
        Ok(key)
    }

    fn view(&self, f: FingerId) -> NodeView {
        view_of(&self.tree, self.fingers[f])
    }

    fn route(&self, f: FingerId, key: u64) -> Route {
        route_in(&self.tree, self.fingers[f], key)
    }

    fn read_aug(&self, f: FingerId, tag: u16) -> Option<u128> {
        self.tree.aug_at(self.fingers[f]).get(tag)
    }

    fn write_aug(&mut self, f: FingerId, tag: u16, width: usize, value: u128) -> Result<(), VmError> {
        self.tree.set_aug_field(self.fingers[f], tag, width, value)
    }

    fn clear_aug(&mut self, f: FingerId, tag: u16) {
        self.tree.clear_aug_field(self.fingers[f], tag);
    }

    fn cost(&self) -> u64 {
        self.tree.meter.unit_ops
    }

    fn peak_aug_bits(&self) -> usize {
        self.tree.peak_aug_bits()
    }

    fn aug_capacity(&self) -> usize {
        self.tree.aug_capacity()
    }

    fn logical_shape(&self) -> String {
        self.tree.snapshot_shape()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Parses `fingerIndex opKind` lines. Blank lines and `#` comments are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<MfOperation>, TraceError> {
    let mut ops = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| TraceError::Parse { line: i + 1, msg: msg.to_string() };
        let mut parts = line.split_whitespace();
        let finger = parts
            .next()
            .ok_or_else(|| err("missing finger"))?
            .parse::<usize>()
            .map_err(|_| err("finger is not a number"))?;
        let kind = parts.next().ok_or_else(|| err("missing op kind"))?;
        if parts.next().is_some() {
            return Err(err("trailing tokens"));
        }
        let mut chars = kind.chars();
        let op = match (chars.next(), chars.next()) {
            (Some(c), None) => UnitOp::from_code(c).ok_or_else(|| err("op kind must be one of P, L, R, T"))?,
            _ => return Err(err("op kind must be one of P, L, R, T")),
        };
        ops.push(MfOperation { finger, op });
    }
    Ok(ops)
}

pub fn format_trace(ops: &[MfOperation]) -> String {
    let mut s = String::new();
    for op in ops {
        s.push_str(&op.to_string());
        s.push('\n');
    }
    s
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimulationError {
    #[error("{oracle} oracle operations but {windows} windows")]
    WindowCount { oracle: usize, windows: usize },
    #[error("window {0} is out of order or out of range")]
    BadWindow(usize),
    #[error("operation {index}: key {key} not touched in its window")]
    Missing { index: usize, key: u64 },
}

/// Checks that oracle op `i` touched a key that the simulator touched inside window `i`.
pub fn check_simulation(oracle: &[u64], sim: &[u64], windows: &[Range<usize>]) -> Result<(), SimulationError> {
    if oracle.len() != windows.len() {
        return Err(SimulationError::WindowCount { oracle: oracle.len(), windows: windows.len() });
    }
    let mut prev_end = 0;
    for (i, (key, w)) in oracle.iter().zip(windows).enumerate() {
        if w.start < prev_end || w.end < w.start || w.end > sim.len() {
            return Err(SimulationError::BadWindow(i));
        }
        prev_end = w.end;
        if !sim[w.clone()].contains(key) {
            return Err(SimulationError::Missing { index: i, key: *key });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine(shape: &str, fingers: usize) -> RefMachine {
        RefMachine::new(TreeArena::from_shape_str(shape).unwrap(), fingers)
    }

    #[test]
    fn independent_fingers() {
        let mut m = machine("2(1,3)", 2);
        assert_eq!(m.mf_apply(MfOperation::new(1, UnitOp::MoveRight)), Ok(3));
        assert_eq!(m.view(0).key, 2);
        assert_eq!(m.cost(), 1);
    }

    #[test]
    fn rotation_keeps_node_identity() {
        let mut m = machine("2(1,3)", 2);
        m.mf_apply(MfOperation::new(0, UnitOp::MoveLeft)).unwrap();
        m.mf_apply(MfOperation::new(0, UnitOp::RotateWithParent)).unwrap();
        assert_eq!(m.logical_shape(), "1(-,2(-,3))");
        assert_eq!(m.view(1).key, 2);
        assert_eq!(m.view(0).key, 1);
    }

    #[test]
    fn illegal_move_at_leaf() {
        let mut m = machine("2(1,3)", 1);
        m.mf_apply(MfOperation::new(0, UnitOp::MoveLeft)).unwrap();
        assert_eq!(m.mf_apply(MfOperation::new(0, UnitOp::MoveLeft)), Err(VmError::NoLeftChild));
        assert_eq!(m.cost(), 1);
    }

    #[test]
    fn routes() {
        let m = machine("4(2(1,3),6(5,7))", 1);
        assert_eq!(m.route(0, 4), Route::Here);
        assert_eq!(m.route(0, 3), Route::Down(Side::Left));
        assert_eq!(m.route(0, 7), Route::Down(Side::Right));
    }

    #[test]
    fn trace_round_trip() {
        let ops = parse_trace("0 L\n# comment\n\n1 T\n").unwrap();
        assert_eq!(ops, vec![MfOperation::new(0, UnitOp::MoveLeft), MfOperation::new(1, UnitOp::RotateWithParent)]);
        assert_eq!(parse_trace(&format_trace(&ops)).unwrap(), ops);
        assert!(parse_trace("0 X").is_err());
        assert!(parse_trace("a L").is_err());
    }

    #[test]
    fn simulation_windows() {
        assert_eq!(check_simulation(&[3], &[2, 3, 2], &[0..3]), Ok(()));
        assert_eq!(
            check_simulation(&[3], &[2, 4], &[0..2]),
            Err(SimulationError::Missing { index: 0, key: 3 })
        );
        assert_eq!(check_simulation(&[], &[], &[]), Ok(()));
        assert!(matches!(check_simulation(&[1], &[1], &[]), Err(SimulationError::WindowCount { .. })));
    }
}
