//! A tendon is the path strictly between two adjacent pseudofingers. It is stored as a
//! `Min` deque of the nodes whose path continues to the right and a `Max` deque of the
//! nodes whose path continues to the left, so the bottom is at most three links below
//! the top.
//!
//! Physical layout below the top `x`: `x` links by `s0` to the first deque root. The
//! `Min` root links down by its right child and the `Max` root by its left child. The
//! deque holding the parent of the bottom `y` comes last; empty deques are skipped.

use thiserror::Error;

use crate::bst_vm::{NodeHandle, Side, TreeArena, TreeShape, VmError};
use crate::deque::{Deque, DequeError, Orientation};

/// Aug tag holding a node's side under its logical parent (1 bit). Tags from `0xFF00`
/// up are reserved for the simulation.
pub const SIDE_TAG: u16 = 0xFF00;

pub fn side_bit(s: Side) -> u128 {
    match s {
        Side::Left => 0,
        Side::Right => 1,
    }
}

pub fn bit_side(b: u128) -> Side {
    if b == 0 {
        Side::Left
    } else {
        Side::Right
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TendonError {
    #[error("the tendon is empty")]
    Empty,
    #[error(transparent)]
    Deque(#[from] DequeError),
    #[error(transparent)]
    Vm(#[from] VmError),
}

/// The four physical configurations, named by the top link and the deque order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Config {
    /// `x -L-> r> -R-> r< -L-> y`
    T1,
    /// `x -R-> r> -R-> r< -L-> y`
    T2,
    /// `x -L-> r< -L-> r> -R-> y`
    T3,
    /// `x -R-> r< -L-> r> -R-> y`
    T4,
}

impl Config {
    pub fn of(s0: Side, sy: Side) -> Config {
        match (s0, sy) {
            (Side::Left, Side::Left) => Config::T1,
            (Side::Right, Side::Left) => Config::T2,
            (Side::Left, Side::Right) => Config::T3,
            (Side::Right, Side::Right) => Config::T4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tendon {
    pub top: NodeHandle,
    pub bottom: NodeHandle,
    /// Side of the first path node (or the bottom, when empty) under the top.
    pub s0: Side,
    /// Side of the bottom under its logical parent.
    pub sy: Side,
    pub minq: Deque,
    pub maxq: Deque,
}

fn deque_for(dir: Side) -> Orientation {
    match dir {
        Side::Right => Orientation::Min,
        Side::Left => Orientation::Max,
    }
}

/// Rotates each node up until it hangs below its target parent, in the given order.
/// Targets must be listed parents first.
fn arrange(t: &mut TreeArena, targets: &[(NodeHandle, NodeHandle)]) {
    for &(node, parent) in targets {
        while t.parent(node) != Some(parent) {
            debug_assert!(t.parent(node).is_some(), "frame node rotated to the root");
            t.rotate_at(node);
        }
    }
}

fn chain_pairs(top: NodeHandle, chain: &[NodeHandle]) -> Vec<(NodeHandle, NodeHandle)> {
    let mut out = Vec::with_capacity(chain.len());
    let mut prev = top;
    for &c in chain {
        out.push((c, prev));
        prev = c;
    }
    out
}

impl Tendon {
    pub fn empty(top: NodeHandle, bottom: NodeHandle, side: Side) -> Tendon {
        Tendon {
            top,
            bottom,
            s0: side,
            sy: side,
            minq: Deque::new(Orientation::Min),
            maxq: Deque::new(Orientation::Max),
        }
    }

    pub fn len(&self) -> usize {
        self.minq.d + self.maxq.d
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn config(&self) -> Config {
        Config::of(self.s0, self.sy)
    }

    fn deque(&mut self, o: Orientation) -> &mut Deque {
        match o {
            Orientation::Min => &mut self.minq,
            Orientation::Max => &mut self.maxq,
        }
    }

    /// Deque roots in top-to-bottom physical order for a given bottom side.
    fn roots(&self, sy: Side) -> Vec<NodeHandle> {
        let (a, b) = match sy {
            Side::Left => (self.minq.root, self.maxq.root),
            Side::Right => (self.maxq.root, self.minq.root),
        };
        a.into_iter().chain(b).collect()
    }

    /// Physical chain from the node below the top down to the bottom.
    pub fn chain(&self) -> Vec<NodeHandle> {
        let mut c = self.roots(self.sy);
        c.push(self.bottom);
        c
    }

    fn read_side(t: &mut TreeArena, h: NodeHandle) -> Side {
        t.walk_to(h);
        bit_side(t.aug_at(h).get(SIDE_TAG).expect("tendon node carries its side"))
    }

    fn write_side(t: &mut TreeArena, h: NodeHandle, s: Side) -> Result<(), VmError> {
        t.walk_to(h);
        t.set_aug_field(h, SIDE_TAG, 1, side_bit(s))
    }

    /// Which deque holds the path node right below a node whose path goes to `s`,
    /// given the current fronts. Reads side bits by touching the fronts.
    fn next_from(&self, t: &mut TreeArena, s: Side) -> Orientation {
        let fmin = self.minq.front(t);
        let fmax = self.maxq.front(t);
        match (fmin, fmax) {
            (None, None) => unreachable!("empty tendon has no next node"),
            (Some(_), None) => Orientation::Min,
            (None, Some(_)) => Orientation::Max,
            (Some(a), Some(b)) => match s {
                Side::Left => {
                    if Self::read_side(t, b) == Side::Left {
                        Orientation::Max
                    } else {
                        Orientation::Min
                    }
                }
                Side::Right => {
                    if Self::read_side(t, a) == Side::Right {
                        Orientation::Min
                    } else {
                        Orientation::Max
                    }
                }
            },
        }
    }

    /// Detaches the top path node `p1`, which becomes the new top. The old top is left
    /// directly above it.
    pub fn remove_parent(&mut self, t: &mut TreeArena) -> Result<NodeHandle, TendonError> {
        if self.is_empty() {
            return Err(TendonError::Empty);
        }
        let o = self.next_from(t, self.s0);
        let p1 = self.deque(o).pop_front(t)?;
        let old_top = self.top;
        self.top = p1;
        self.s0 = match o {
            Orientation::Min => Side::Right,
            Orientation::Max => Side::Left,
        };
        let mut targets = vec![(p1, old_top)];
        targets.extend(chain_pairs(p1, &self.chain()));
        arrange(t, &targets);
        Ok(p1)
    }

    /// Detaches the bottom path node `p_k`, which becomes the new bottom. The old bottom
    /// is left directly below it.
    pub fn remove_child(&mut self, t: &mut TreeArena) -> Result<NodeHandle, TendonError> {
        if self.is_empty() {
            return Err(TendonError::Empty);
        }
        let o = match self.sy {
            Side::Left => Orientation::Max,
            Side::Right => Orientation::Min,
        };
        let pk = self.deque(o).pop_back(t)?;
        let old_bottom = self.bottom;
        let new_sy = if self.is_empty() { self.s0 } else { Self::read_side(t, pk) };
        self.bottom = pk;
        self.sy = new_sy;
        let mut targets = chain_pairs(self.top, &self.chain());
        targets.push((old_bottom, pk));
        arrange(t, &targets);
        Ok(pk)
    }

    /// Absorbs the top into the tendon; `new_top` is its logical parent, holding it on
    /// `side`, with nothing between them.
    pub fn add_parent(&mut self, t: &mut TreeArena, new_top: NodeHandle, side: Side) -> Result<(), TendonError> {
        let x = self.top;
        Self::write_side(t, x, side)?;
        let o = deque_for(self.s0);
        let mut pre = Vec::new();
        for r in self.roots(self.sy) {
            if self.deque(o).root == Some(r) {
                pre.push(x);
            }
            pre.push(r);
        }
        if self.deque(o).root.is_none() {
            let at = match (o, self.sy) {
                (Orientation::Min, Side::Left) | (Orientation::Max, Side::Right) => 0,
                _ => pre.len(),
            };
            pre.insert(at, x);
        }
        pre.push(self.bottom);
        arrange(t, &chain_pairs(new_top, &pre));
        self.deque(o).push_front(t, x)?;
        self.top = new_top;
        self.s0 = side;
        Ok(())
    }

    /// Absorbs the bottom into the tendon; `new_bottom` is its logical child on `side`,
    /// with nothing between them.
    pub fn add_child(&mut self, t: &mut TreeArena, new_bottom: NodeHandle, side: Side) -> Result<(), TendonError> {
        let y = self.bottom;
        Self::write_side(t, y, self.sy)?;
        let o = deque_for(side);
        let old_root = self.deque(o).root;
        let other = match o {
            Orientation::Min => self.maxq.root,
            Orientation::Max => self.minq.root,
        };
        let mut targets = Vec::new();
        let mut prev = self.top;
        if let Some(r) = other {
            targets.push((r, prev));
            prev = r;
        }
        targets.push((y, prev));
        if let Some(r) = old_root {
            targets.push((r, y));
        }
        targets.push((new_bottom, y));
        arrange(t, &targets);
        self.deque(o).push_back(t, y)?;
        self.bottom = new_bottom;
        self.sy = side;
        Ok(())
    }

    /// Path nodes top to bottom, read from the deques and side bits without moving.
    pub fn decode(&self, t: &TreeArena) -> Vec<NodeHandle> {
        let mut mins = self.minq.decode(t).into_iter().peekable();
        let mut maxs = self.maxq.decode(t).into_iter().peekable();
        let side = |h: NodeHandle| t.aug_at(h).get(SIDE_TAG).map(bit_side);
        let mut out = Vec::with_capacity(self.len());
        let mut s = self.s0;
        loop {
            let pick_max = match (mins.peek(), maxs.peek()) {
                (None, None) => break,
                (Some(_), None) => false,
                (None, Some(_)) => true,
                (Some(&a), Some(&b)) => match s {
                    Side::Left => side(b) == Some(Side::Left),
                    Side::Right => side(a) != Some(Side::Right),
                },
            };
            let (h, dir) = if pick_max {
                (maxs.next().unwrap(), Side::Left)
            } else {
                (mins.next().unwrap(), Side::Right)
            };
            out.push(h);
            s = dir;
        }
        out
    }

    /// Checks the layout against the logical path: `path` lists the tendon nodes from
    /// the top with each node's side under its logical parent.
    pub fn check(
        &self,
        t: &TreeArena,
        path: &[(NodeHandle, Side)],
        knuckle: &dyn Fn(NodeHandle) -> Option<NodeHandle>,
    ) -> Result<(), String> {
        let first_side = path.first().map_or(self.sy, |p| p.1);
        if first_side != self.s0 {
            return Err("top side does not match the first path node".into());
        }
        let mut mins = Vec::new();
        let mut maxs = Vec::new();
        for (i, &(h, s)) in path.iter().enumerate() {
            if t.aug_at(h).get(SIDE_TAG).map(bit_side) != Some(s) {
                return Err(format!("side bit of node {} is stale", t.key(h)));
            }
            let dir = path.get(i + 1).map_or(self.sy, |p| p.1);
            match dir {
                Side::Right => mins.push(h),
                Side::Left => maxs.push(h),
            }
        }
        self.minq.check(t, &mins, knuckle).map_err(|e| format!("min deque: {e}"))?;
        self.maxq.check(t, &maxs, knuckle).map_err(|e| format!("max deque: {e}"))?;
        let mut prev = self.top;
        let mut side = self.s0;
        for c in self.chain() {
            if t.child(prev, side) != Some(c) {
                return Err(format!("chain broken below node {}", t.key(prev)));
            }
            side = if Some(c) == self.minq.root { Side::Right } else { Side::Left };
            prev = c;
        }
        let gap = t.depth(self.bottom) - t.depth(self.top);
        let want = 1 + usize::from(!self.minq.is_empty()) + usize::from(!self.maxq.is_empty());
        if gap != want {
            return Err(format!("depth gap {gap}, expected {want}"));
        }
        let decoded = self.decode(t);
        if decoded.iter().ne(path.iter().map(|p| &p.0)) {
            return Err("decoded path differs from the logical path".into());
        }
        Ok(())
    }
}

/// Drives one tendon over a long logical path with random turns and knuckles so that
/// every tendon operation can be exercised at both ends.
#[derive(Clone, Debug)]
pub struct TendonHarness {
    pub tree: TreeArena,
    pub tendon: Tendon,
    path: Vec<NodeHandle>,
    sides: Vec<Side>,
    knuckles: Vec<Option<NodeHandle>>,
    /// Index of the top; the tendon covers `top+1 .. bottom`.
    top: usize,
    bottom: usize,
}

impl TendonHarness {
    /// `turns[i]` is the side on which path node `i+1` hangs below node `i`.
    pub fn new(turns: &[Side], knuckle_sizes: &[usize]) -> TendonHarness {
        assert_eq!(turns.len() + 1, knuckle_sizes.len());
        let len = knuckle_sizes.len();
        let mut shape = TreeShape::balanced(knuckle_sizes[len - 1]);
        shape = TreeShape::Node(Box::new(shape), Box::new(TreeShape::Empty));
        for i in (0..len - 1).rev() {
            let k = Box::new(TreeShape::balanced(knuckle_sizes[i]));
            shape = match turns[i] {
                Side::Right => TreeShape::Node(k, Box::new(shape)),
                Side::Left => TreeShape::Node(Box::new(shape), k),
            };
        }
        let mut tree = TreeArena::with_shape(&shape);
        tree.set_aug_words(64);
        let mut path = vec![tree.root()];
        let mut sides = vec![Side::Left];
        let mut knuckles = Vec::new();
        for &turn in turns {
            let h = *path.last().unwrap();
            knuckles.push(tree.child(h, turn.flip()));
            path.push(tree.child(h, turn).expect("path continues"));
            sides.push(turn);
        }
        knuckles.push(tree.child(*path.last().unwrap(), Side::Left));
        let top = len / 2;
        let tendon = Tendon::empty(path[top], path[top + 1], sides[top + 1]);
        TendonHarness { tree, tendon, path, sides, knuckles, top, bottom: top + 1 }
    }

    pub fn can_add_parent(&self) -> bool {
        self.top > 0
    }

    pub fn can_add_child(&self) -> bool {
        self.bottom + 1 < self.path.len()
    }

    pub fn add_parent(&mut self) -> Result<(), TendonError> {
        let side = self.sides[self.top];
        self.top -= 1;
        self.tendon.add_parent(&mut self.tree, self.path[self.top], side)
    }

    pub fn add_child(&mut self) -> Result<(), TendonError> {
        self.bottom += 1;
        self.tendon.add_child(&mut self.tree, self.path[self.bottom], self.sides[self.bottom])
    }

    pub fn remove_parent(&mut self) -> Result<NodeHandle, TendonError> {
        let p = self.tendon.remove_parent(&mut self.tree)?;
        self.top += 1;
        Ok(p)
    }

    pub fn remove_child(&mut self) -> Result<NodeHandle, TendonError> {
        let p = self.tendon.remove_child(&mut self.tree)?;
        self.bottom -= 1;
        Ok(p)
    }

    pub fn logical_path(&self) -> Vec<(NodeHandle, Side)> {
        (self.top + 1..self.bottom).map(|i| (self.path[i], self.sides[i])).collect()
    }

    pub fn knuckle_roots(&self) -> Vec<NodeHandle> {
        self.knuckles.iter().flatten().copied().collect()
    }

    pub fn check(&self) -> Result<(), String> {
        if self.tendon.top != self.path[self.top] || self.tendon.bottom != self.path[self.bottom] {
            return Err("tendon ends differ from the oracle".into());
        }
        let lookup = |h: NodeHandle| {
            let i = self.path.iter().position(|&p| p == h).expect("path node");
            self.knuckles[i]
        };
        self.tendon.check(&self.tree, &self.logical_path(), &lookup)
    }

    /// Checks that the parts of the path outside the tendon are in logical position.
    pub fn check_outside(&self) -> Result<(), String> {
        for i in (1..=self.top).chain(self.bottom + 1..self.path.len()) {
            if self.tree.child(self.path[i - 1], self.sides[i]) != Some(self.path[i]) {
                return Err(format!("path node {i} is out of place"));
            }
        }
        Ok(())
    }

    pub fn cost(&self) -> u64 {
        self.tree.meter.unit_ops
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harness(turns: &str) -> TendonHarness {
        let turns: Vec<Side> = turns.chars().map(|c| if c == 'L' { Side::Left } else { Side::Right }).collect();
        let sizes: Vec<usize> = (0..=turns.len()).map(|i| i % 3).collect();
        TendonHarness::new(&turns, &sizes)
    }

    #[test]
    fn empty_tendon_links_directly() {
        let h = harness("LRLRRL");
        h.check().unwrap();
        assert_eq!(h.tendon.len(), 0);
    }

    #[test]
    fn first_absorption_sets_gap_two() {
        for turns in ["LLLLLL", "RRRRRR", "LRLRLR", "RLRLRL"] {
            let mut h = harness(turns);
            h.add_parent().unwrap();
            h.check().unwrap();
            assert_eq!(h.tree.depth(h.tendon.bottom) - h.tree.depth(h.tendon.top), 2);
            h.add_child().unwrap();
            h.check().unwrap();
        }
    }

    #[test]
    fn all_four_configurations_appear() {
        let mut seen = Vec::new();
        for turns in ["LLRRLLRR", "RRLLRRLL", "LRRLLRRL", "RLLRRLLR"] {
            let mut h = harness(turns);
            for _ in 0..3 {
                h.add_parent().unwrap();
                h.add_child().unwrap();
                h.check().unwrap();
                seen.push(h.tendon.config());
            }
        }
        for c in [Config::T1, Config::T2, Config::T3, Config::T4] {
            assert!(seen.contains(&c), "{c:?} never reached");
        }
    }

    #[test]
    fn inverse_pairs_restore_the_tree() {
        let mut h = harness("LRRLRLLRLRRL");
        h.add_parent().unwrap();
        h.add_child().unwrap();
        h.add_parent().unwrap();
        h.add_parent().unwrap();
        h.remove_parent().unwrap();
        h.check().unwrap();
        h.add_child().unwrap();
        h.remove_child().unwrap();
        h.check().unwrap();
        assert_eq!(h.logical_path().len(), 3);
    }

    #[test]
    fn remove_from_empty_fails() {
        let mut h = harness("LR");
        assert_eq!(h.remove_parent(), Err(TendonError::Empty));
        assert_eq!(h.remove_child(), Err(TendonError::Empty));
    }
}
