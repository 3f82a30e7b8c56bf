//! Single-finger BST machine: a handle-indexed tree, one finger, four unit-cost
//! operations, a cost meter and a per-node augmented-data budget.

use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeHandle(pub u32);

impl NodeHandle {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnitOp {
    MoveParent,
    MoveLeft,
    MoveRight,
    RotateWithParent,
}

impl UnitOp {
    pub const ALL: [UnitOp; 4] = [
        UnitOp::MoveParent,
        UnitOp::MoveLeft,
        UnitOp::MoveRight,
        UnitOp::RotateWithParent,
    ];

    pub fn code(self) -> char {
        match self {
            UnitOp::MoveParent => 'P',
            UnitOp::MoveLeft => 'L',
            UnitOp::MoveRight => 'R',
            UnitOp::RotateWithParent => 'T',
        }
    }

    pub fn from_code(c: char) -> Option<UnitOp> {
        match c {
            'P' => Some(UnitOp::MoveParent),
            'L' => Some(UnitOp::MoveLeft),
            'R' => Some(UnitOp::MoveRight),
            'T' => Some(UnitOp::RotateWithParent),
            _ => None,
        }
    }

    pub fn move_to(side: Side) -> UnitOp {
        match side {
            Side::Left => UnitOp::MoveLeft,
            Side::Right => UnitOp::MoveRight,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum VmError {
    #[error("operation needs a parent but the finger is at the root")]
    IllegalAtRoot,
    #[error("the finger's node has no left child")]
    NoLeftChild,
    #[error("the finger's node has no right child")]
    NoRightChild,
    #[error("augmented payload of {bits} bits exceeds capacity of {capacity} bits")]
    BudgetExceeded { bits: usize, capacity: usize },
    #[error("finger {0} does not exist")]
    NoSuchFinger(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("keys must be strictly increasing (problem at position {0})")]
    UnsortedKeys(usize),
    #[error("duplicate key {0}")]
    DuplicateKey(u64),
    #[error("shape has {positions} positions but {keys} keys were given")]
    CountMismatch { positions: usize, keys: usize },
    #[error("malformed shape: {0}")]
    Malformed(String),
    #[error("empty tree")]
    Empty,
}

#[derive(Clone, Debug, Default)]
pub struct CostMeter {
    pub unit_ops: u64,
    pub per_access: Vec<u64>,
    mark: u64,
}

impl CostMeter {
    pub fn end_access(&mut self) {
        self.per_access.push(self.unit_ops - self.mark);
        self.mark = self.unit_ops;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct AugSlot {
    tag: u16,
    width: u16,
    value: u128,
}

/// Per-node augmented bits, stored as tagged fixed-width slots.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AugPayload {
    slots: Vec<AugSlot>,
}

impl AugPayload {
    pub const RAW_TAG: u16 = u16::MAX;

    /// A single untagged bit string of `bits` bits (at most 128) holding `value`.
    pub fn raw(bits: usize, value: u128) -> AugPayload {
        assert!(bits <= 128);
        let mut p = AugPayload::default();
        p.set(Self::RAW_TAG, bits, value);
        p
    }

    pub fn bit_len(&self) -> usize {
        self.slots.iter().map(|s| s.width as usize).sum()
    }

    pub fn get(&self, tag: u16) -> Option<u128> {
        self.slots.iter().find(|s| s.tag == tag).map(|s| s.value)
    }

    pub fn width(&self, tag: u16) -> Option<usize> {
        self.slots.iter().find(|s| s.tag == tag).map(|s| s.width as usize)
    }

    pub fn set(&mut self, tag: u16, width: usize, value: u128) {
        debug_assert!(width <= 128);
        debug_assert!(width == 128 || value < (1u128 << width), "value does not fit its width");
        match self.slots.iter_mut().find(|s| s.tag == tag) {
            Some(s) => {
                s.width = width as u16;
                s.value = value;
            }
            None => self.slots.push(AugSlot { tag, width: width as u16, value }),
        }
    }

    /// `(tag, width, value)` of every slot, in tag order.
    pub fn slots(&self) -> Vec<(u16, usize, u128)> {
        let mut v: Vec<_> = self.slots.iter().map(|s| (s.tag, s.width as usize, s.value)).collect();
        v.sort_unstable();
        v
    }

    pub fn remove(&mut self, tag: u16) -> Option<u128> {
        let i = self.slots.iter().position(|s| s.tag == tag)?;
        Some(self.slots.swap_remove(i).value)
    }

    fn bits_after_set(&self, tag: u16, width: usize) -> usize {
        let old = self.width(tag).unwrap_or(0);
        self.bit_len() - old + width
    }
}

/// Number of bits in one machine word for a tree of `n` nodes.
pub fn word_bits(n: usize) -> usize {
    let mut b = 0;
    while (1usize << b) < n.max(2) {
        b += 1;
    }
    b
}

#[derive(Clone, Debug)]
struct Node {
    key: u64,
    parent: Option<NodeHandle>,
    left: Option<NodeHandle>,
    right: Option<NodeHandle>,
    aug: AugPayload,
}

/// Shape of a binary tree without keys; keys are assigned in in-order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeShape {
    Empty,
    Node(Box<TreeShape>, Box<TreeShape>),
}

impl TreeShape {
    pub fn leaf() -> TreeShape {
        TreeShape::Node(Box::new(TreeShape::Empty), Box::new(TreeShape::Empty))
    }

    pub fn size(&self) -> usize {
        match self {
            TreeShape::Empty => 0,
            TreeShape::Node(l, r) => 1 + l.size() + r.size(),
        }
    }

    pub fn left_path(n: usize) -> TreeShape {
        let mut t = TreeShape::Empty;
        for _ in 0..n {
            t = TreeShape::Node(Box::new(t), Box::new(TreeShape::Empty));
        }
        t
    }

    pub fn right_path(n: usize) -> TreeShape {
        let mut t = TreeShape::Empty;
        for _ in 0..n {
            t = TreeShape::Node(Box::new(TreeShape::Empty), Box::new(t));
        }
        t
    }

    pub fn balanced(n: usize) -> TreeShape {
        if n == 0 {
            return TreeShape::Empty;
        }
        let left = (n - 1) / 2;
        TreeShape::Node(
            Box::new(TreeShape::balanced(left)),
            Box::new(TreeShape::balanced(n - 1 - left)),
        )
    }

    /// Uniformly random split points (random BST shape).
    pub fn random<R: rand::Rng>(n: usize, rng: &mut R) -> TreeShape {
        if n == 0 {
            return TreeShape::Empty;
        }
        let left = rng.random_range(0..n);
        TreeShape::Node(
            Box::new(TreeShape::random(left, rng)),
            Box::new(TreeShape::random(n - 1 - left, rng)),
        )
    }
}

/// Parses `key(left,right)` text (`-` for empty, whitespace ignored) into a shape and
/// its in-order key list. A bare key is a leaf.
pub fn parse_shape(text: &str) -> Result<(TreeShape, Vec<u64>), ShapeError> {
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut pos = 0;
    let mut keys = Vec::new();
    let shape = parse_node(&chars, &mut pos, &mut keys)?;
    if pos != chars.len() {
        return Err(ShapeError::Malformed(format!("trailing input at offset {pos}")));
    }
    Ok((shape, keys))
}

fn parse_node(c: &[char], pos: &mut usize, keys: &mut Vec<u64>) -> Result<TreeShape, ShapeError> {
    if *pos < c.len() && c[*pos] == '-' {
        *pos += 1;
        return Ok(TreeShape::Empty);
    }
    let start = *pos;
    while *pos < c.len() && c[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(ShapeError::Malformed(format!("expected key at offset {start}")));
    }
    let key: u64 = c[start..*pos]
        .iter()
        .collect::<String>()
        .parse()
        .map_err(|e| ShapeError::Malformed(format!("{e}")))?;
    if *pos < c.len() && c[*pos] == '(' {
        *pos += 1;
        let left = parse_node(c, pos, keys)?;
        keys.push(key);
        if *pos >= c.len() || c[*pos] != ',' {
            return Err(ShapeError::Malformed(format!("expected ',' at offset {pos}")));
        }
        *pos += 1;
        let right = parse_node(c, pos, keys)?;
        if *pos >= c.len() || c[*pos] != ')' {
            return Err(ShapeError::Malformed(format!("expected ')' at offset {pos}")));
        }
        *pos += 1;
        Ok(TreeShape::Node(Box::new(left), Box::new(right)))
    } else {
        keys.push(key);
        Ok(TreeShape::leaf())
    }
}

#[derive(Clone, Debug)]
pub struct TreeArena {
    nodes: Vec<Node>,
    root: NodeHandle,
    finger: NodeHandle,
    pub meter: CostMeter,
    aug_capacity: usize,
    peak_aug_bits: usize,
    trace: Option<Vec<u64>>,
    stamp: Vec<u32>,
    stamp_gen: u32,
}

pub const DEFAULT_AUG_WORDS: usize = 8;

impl TreeArena {
    /// Builds a tree; keys are placed in in-order, so handle `i` holds the key of rank `i`.
    pub fn build(shape: &TreeShape, keys: &[u64]) -> Result<TreeArena, ShapeError> {
        let positions = shape.size();
        if positions != keys.len() {
            return Err(ShapeError::CountMismatch { positions, keys: keys.len() });
        }
        if keys.is_empty() {
            return Err(ShapeError::Empty);
        }
        for i in 1..keys.len() {
            if keys[i] == keys[i - 1] {
                return Err(ShapeError::DuplicateKey(keys[i]));
            }
            if keys[i] < keys[i - 1] {
                return Err(ShapeError::UnsortedKeys(i));
            }
        }
        let mut nodes: Vec<Node> = keys
            .iter()
            .map(|&key| Node { key, parent: None, left: None, right: None, aug: AugPayload::default() })
            .collect();
        let mut next = 0u32;
        let root = link(shape, &mut nodes, &mut next, None).expect("non-empty shape");
        let n = nodes.len();
        Ok(TreeArena {
            nodes,
            root,
            finger: root,
            meter: CostMeter::default(),
            aug_capacity: DEFAULT_AUG_WORDS * word_bits(n),
            peak_aug_bits: 0,
            trace: None,
            stamp: vec![0; n],
            stamp_gen: 0,
        })
    }

    pub fn from_shape_str(text: &str) -> Result<TreeArena, ShapeError> {
        let (shape, keys) = parse_shape(text)?;
        TreeArena::build(&shape, &keys)
    }

    /// Tree over keys `1..=n`.
    pub fn with_shape(shape: &TreeShape) -> TreeArena {
        let keys: Vec<u64> = (1..=shape.size() as u64).collect();
        TreeArena::build(shape, &keys).expect("valid shape")
    }

    pub fn set_aug_words(&mut self, words: usize) {
        self.aug_capacity = words * word_bits(self.nodes.len());
    }

    pub fn aug_capacity(&self) -> usize {
        self.aug_capacity
    }

    pub fn peak_aug_bits(&self) -> usize {
        self.peak_aug_bits
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeHandle {
        self.root
    }

    pub fn finger(&self) -> NodeHandle {
        self.finger
    }

    pub fn key(&self, h: NodeHandle) -> u64 {
        self.nodes[h.index()].key
    }

    pub fn parent(&self, h: NodeHandle) -> Option<NodeHandle> {
        self.nodes[h.index()].parent
    }

    pub fn left(&self, h: NodeHandle) -> Option<NodeHandle> {
        self.nodes[h.index()].left
    }

    pub fn right(&self, h: NodeHandle) -> Option<NodeHandle> {
        self.nodes[h.index()].right
    }

    pub fn child(&self, h: NodeHandle, side: Side) -> Option<NodeHandle> {
        match side {
            Side::Left => self.left(h),
            Side::Right => self.right(h),
        }
    }

    /// Which child of its parent `h` is; `None` at the root.
    pub fn side_of(&self, h: NodeHandle) -> Option<Side> {
        let p = self.parent(h)?;
        if self.left(p) == Some(h) {
            Some(Side::Left)
        } else {
            Some(Side::Right)
        }
    }

    /// Handle of the node holding `key`; handles are in key order.
    pub fn handle_of(&self, key: u64) -> Option<NodeHandle> {
        self.nodes
            .binary_search_by_key(&key, |n| n.key)
            .ok()
            .map(|i| NodeHandle(i as u32))
    }

    pub fn depth(&self, mut h: NodeHandle) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent(h) {
            h = p;
            d += 1;
        }
        d
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<u64> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn trace_len(&self) -> usize {
        self.trace.as_ref().map_or(0, |t| t.len())
    }

    /// Applies one unit-cost operation at the finger; returns the node the finger is on.
    pub fn apply(&mut self, op: UnitOp) -> Result<NodeHandle, VmError> {
        let f = self.finger;
        match op {
            UnitOp::MoveParent => {
                self.finger = self.parent(f).ok_or(VmError::IllegalAtRoot)?;
            }
            UnitOp::MoveLeft => {
                self.finger = self.left(f).ok_or(VmError::NoLeftChild)?;
            }
            UnitOp::MoveRight => {
                self.finger = self.right(f).ok_or(VmError::NoRightChild)?;
            }
            UnitOp::RotateWithParent => {
                if self.parent(f).is_none() {
                    return Err(VmError::IllegalAtRoot);
                }
                self.rotate_up(f);
            }
        }
        self.meter.unit_ops += 1;
        let key = self.nodes[self.finger.index()].key;
        if let Some(t) = self.trace.as_mut() {
            t.push(key);
        }
        Ok(self.finger)
    }

    fn rotate_up(&mut self, x: NodeHandle) {
        let p = self.parent(x).expect("rotation needs a parent");
        let g = self.parent(p);
        if self.left(p) == Some(x) {
            let b = self.right(x);
            self.nodes[p.index()].left = b;
            if let Some(b) = b {
                self.nodes[b.index()].parent = Some(p);
            }
            self.nodes[x.index()].right = Some(p);
        } else {
            let b = self.left(x);
            self.nodes[p.index()].right = b;
            if let Some(b) = b {
                self.nodes[b.index()].parent = Some(p);
            }
            self.nodes[x.index()].left = Some(p);
        }
        self.nodes[p.index()].parent = Some(x);
        self.nodes[x.index()].parent = g;
        match g {
            None => self.root = x,
            Some(g) => {
                if self.left(g) == Some(p) {
                    self.nodes[g.index()].left = Some(x);
                } else {
                    self.nodes[g.index()].right = Some(x);
                }
            }
        }
    }

    pub fn read_aug(&self) -> &AugPayload {
        &self.nodes[self.finger.index()].aug
    }

    pub fn write_aug(&mut self, payload: AugPayload) -> Result<(), VmError> {
        let bits = payload.bit_len();
        if bits > self.aug_capacity {
            return Err(VmError::BudgetExceeded { bits, capacity: self.aug_capacity });
        }
        self.peak_aug_bits = self.peak_aug_bits.max(bits);
        self.nodes[self.finger.index()].aug = payload;
        Ok(())
    }

    /// Aug payload of any node, for reads.
    pub fn aug_at(&self, h: NodeHandle) -> &AugPayload {
        &self.nodes[h.index()].aug
    }

    /// Writes one slot of the payload at `h`. Callers use this only for nodes their
    /// finger has touched; the budget guard applies.
    pub fn set_aug_field(&mut self, h: NodeHandle, tag: u16, width: usize, value: u128) -> Result<(), VmError> {
        let bits = self.nodes[h.index()].aug.bits_after_set(tag, width);
        if bits > self.aug_capacity {
            return Err(VmError::BudgetExceeded { bits, capacity: self.aug_capacity });
        }
        self.peak_aug_bits = self.peak_aug_bits.max(bits);
        self.nodes[h.index()].aug.set(tag, width, value);
        Ok(())
    }

    pub fn clear_aug_field(&mut self, h: NodeHandle, tag: u16) -> Option<u128> {
        self.nodes[h.index()].aug.remove(tag)
    }

    /// Moves the finger to `target` along the shortest tree path, one unit op per edge.
    pub fn walk_to(&mut self, target: NodeHandle) {
        if self.finger == target {
            return;
        }
        let (up, down) = self.path_between(self.finger, target);
        for _ in 0..up {
            self.apply(UnitOp::MoveParent).expect("walk up");
        }
        for side in down.into_iter().rev() {
            self.apply(UnitOp::move_to(side)).expect("walk down");
        }
    }

    /// Walks to `x` and rotates it above its parent.
    pub fn rotate_at(&mut self, x: NodeHandle) {
        self.walk_to(x);
        self.apply(UnitOp::RotateWithParent).expect("rotation below the root");
    }

    /// Number of upward steps from `a`, and the downward sides (reversed) to reach `b`.
    /// Runs in time proportional to the path length.
    fn path_between(&mut self, a: NodeHandle, b: NodeHandle) -> (usize, Vec<Side>) {
        self.stamp_gen = self.stamp_gen.wrapping_add(2);
        if self.stamp_gen < 2 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.stamp_gen = 2;
        }
        let ga = self.stamp_gen;
        let gb = self.stamp_gen + 1;
        let (mut x, mut y) = (Some(a), Some(b));
        self.stamp[a.index()] = ga;
        self.stamp[b.index()] = gb;
        let meet = loop {
            if let Some(xn) = x {
                if self.stamp[xn.index()] == gb {
                    break xn;
                }
                self.stamp[xn.index()] = ga;
            }
            if let Some(yn) = y {
                if self.stamp[yn.index()] == ga {
                    break yn;
                }
                self.stamp[yn.index()] = gb;
            }
            x = x.and_then(|h| self.parent(h));
            y = y.and_then(|h| self.parent(h));
            if let Some(xn) = x {
                if self.stamp[xn.index()] == gb {
                    break xn;
                }
            }
        };
        let mut up = 0;
        let mut h = a;
        while h != meet {
            h = self.parent(h).expect("meet is an ancestor");
            up += 1;
        }
        let mut down = Vec::new();
        let mut h = b;
        while h != meet {
            down.push(self.side_of(h).expect("below meet"));
            h = self.parent(h).expect("meet is an ancestor");
        }
        (up, down)
    }

    /// Physical distance in edges between two nodes (bookkeeping only, no cost).
    pub fn distance(&mut self, a: NodeHandle, b: NodeHandle) -> usize {
        let (up, down) = self.path_between(a, b);
        up + down.len()
    }

    pub fn in_order(&self) -> Vec<NodeHandle> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = Vec::new();
        let mut cur = Some(self.root);
        while cur.is_some() || !stack.is_empty() {
            while let Some(c) = cur {
                stack.push(c);
                cur = self.left(c);
            }
            let c = stack.pop().unwrap();
            out.push(c);
            cur = self.right(c);
        }
        out
    }

    pub fn in_order_keys(&self) -> Vec<u64> {
        self.in_order().into_iter().map(|h| self.key(h)).collect()
    }

    /// Checks symmetric order, link consistency and the single root.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.parent(self.root).is_some() {
            return Err("root has a parent".into());
        }
        let mut roots = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            let h = NodeHandle(i as u32);
            if n.parent.is_none() {
                roots += 1;
            }
            for c in [n.left, n.right].into_iter().flatten() {
                if self.parent(c) != Some(h) {
                    return Err(format!("child {} of {} has wrong parent", self.key(c), n.key));
                }
            }
            if let Some(p) = n.parent {
                if self.left(p) != Some(h) && self.right(p) != Some(h) {
                    return Err(format!("{} is not a child of its parent", n.key));
                }
            }
        }
        if roots != 1 {
            return Err(format!("{roots} parentless nodes"));
        }
        let order = self.in_order();
        if order.len() != self.nodes.len() {
            return Err("tree is not connected".into());
        }
        for w in order.windows(2) {
            if self.key(w[0]) >= self.key(w[1]) {
                return Err("in-order keys not increasing".into());
            }
        }
        Ok(())
    }

    pub fn snapshot_shape(&self) -> String {
        let mut s = String::new();
        self.write_shape(&mut s, self.root, true);
        s
    }

    /// Shape of the subtree below `h`, in the same format as `snapshot_shape`.
    pub fn subtree_snapshot(&self, h: NodeHandle) -> String {
        let mut s = String::new();
        self.write_shape(&mut s, h, true);
        s
    }

    fn write_shape(&self, s: &mut String, h: NodeHandle, top: bool) {
        let n = &self.nodes[h.index()];
        if !top && n.left.is_none() && n.right.is_none() {
            let _ = write!(s, "{}", n.key);
            return;
        }
        let _ = write!(s, "{}(", n.key);
        match n.left {
            Some(l) => self.write_shape(s, l, false),
            None => s.push('-'),
        }
        s.push(',');
        match n.right {
            Some(r) => self.write_shape(s, r, false),
            None => s.push('-'),
        }
        s.push(')');
    }

    /// Structural shape with keys dropped.
    pub fn shape(&self) -> TreeShape {
        fn go(t: &TreeArena, h: Option<NodeHandle>) -> TreeShape {
            match h {
                None => TreeShape::Empty,
                Some(h) => TreeShape::Node(Box::new(go(t, t.left(h))), Box::new(go(t, t.right(h)))),
            }
        }
        go(self, Some(self.root))
    }

    /// Parent links indexed by handle; a compact shape fingerprint.
    pub fn parent_array(&self) -> Vec<Option<NodeHandle>> {
        self.nodes.iter().map(|n| n.parent).collect()
    }

    /// Teleports the finger. Only the reference multifinger machine uses this, to switch
    /// between its fingers; it is not a unit operation.
    pub(crate) fn place_finger(&mut self, h: NodeHandle) {
        self.finger = h;
    }
}

fn link(shape: &TreeShape, nodes: &mut [Node], next: &mut u32, parent: Option<NodeHandle>) -> Option<NodeHandle> {
    match shape {
        TreeShape::Empty => None,
        TreeShape::Node(l, r) => {
            let left = link(l, nodes, next, None);
            let me = NodeHandle(*next);
            *next += 1;
            if let Some(h) = left {
                nodes[h.index()].parent = Some(me);
            }
            let right = link(r, nodes, next, Some(me));
            let n = &mut nodes[me.index()];
            n.parent = parent;
            n.left = left;
            n.right = right;
            Some(me)
        }
    }
}

impl fmt::Display for TreeArena {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.snapshot_shape())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_and_snapshot() {
        let t = TreeArena::from_shape_str("2(1,3)").unwrap();
        assert_eq!(t.snapshot_shape(), "2(1,3)");
        assert_eq!(t.key(t.finger()), 2);
        let t = TreeArena::from_shape_str("7").unwrap();
        assert_eq!(t.snapshot_shape(), "7(-,-)");
        let t = TreeArena::from_shape_str(" 2 ( 1(-,-) , 3(-,-) ) ").unwrap();
        assert_eq!(t.snapshot_shape(), "2(1,3)");
    }

    #[test]
    fn left_path_root_is_max() {
        let t = TreeArena::with_shape(&TreeShape::left_path(5));
        assert_eq!(t.key(t.root()), 5);
        let mut h = t.root();
        for k in (1..5).rev() {
            h = t.left(h).unwrap();
            assert_eq!(t.key(h), k);
        }
    }

    #[test]
    fn duplicate_keys_rejected() {
        let (shape, _) = parse_shape("2(1,3)").unwrap();
        assert_eq!(TreeArena::build(&shape, &[1, 2, 2]).unwrap_err(), ShapeError::DuplicateKey(2));
    }

    #[test]
    fn moves_and_rotation() {
        let mut t = TreeArena::from_shape_str("2(1,3)").unwrap();
        let h = t.apply(UnitOp::MoveLeft).unwrap();
        assert_eq!(t.key(h), 1);
        assert_eq!(t.meter.unit_ops, 1);
        t.apply(UnitOp::RotateWithParent).unwrap();
        assert_eq!(t.snapshot_shape(), "1(-,2(-,3))");
        assert_eq!(t.key(t.finger()), 1);
        assert_eq!(t.meter.unit_ops, 2);
        t.check_invariants().unwrap();
    }

    #[test]
    fn illegal_op_has_no_effect() {
        let mut t = TreeArena::from_shape_str("2(1,3)").unwrap();
        assert_eq!(t.apply(UnitOp::MoveParent), Err(VmError::IllegalAtRoot));
        assert_eq!(t.meter.unit_ops, 0);
        assert_eq!(t.snapshot_shape(), "2(1,3)");
    }

    #[test]
    fn aug_budget() {
        let mut t = TreeArena::with_shape(&TreeShape::balanced(1024));
        assert_eq!(t.aug_capacity(), 80);
        t.write_aug(AugPayload::raw(17, 12345)).unwrap();
        assert_eq!(t.meter.unit_ops, 0);
        assert_eq!(t.read_aug().get(AugPayload::RAW_TAG), Some(12345));
        assert!(matches!(t.write_aug(AugPayload::raw(81, 0)), Err(VmError::BudgetExceeded { bits: 81, capacity: 80 })));
        assert_eq!(t.read_aug().bit_len(), 17);
    }

    #[test]
    fn walk_takes_shortest_path() {
        let mut t = TreeArena::with_shape(&TreeShape::balanced(15));
        let a = t.handle_of(1).unwrap();
        let b = t.handle_of(3).unwrap();
        t.walk_to(a);
        let before = t.meter.unit_ops;
        t.walk_to(b);
        assert_eq!(t.meter.unit_ops - before, 2);
        assert_eq!(t.finger(), b);
    }
}
