//! Double-ended queues of tendon nodes stored as a BST fragment.
//!
//! A `Min` deque holds nodes `t_1 < ... < t_d`. The root is `t_d`; its inner child is the
//! split node `t_v`, whose inner subtree is the path `t_1 .. t_{v-1}` and whose outer
//! subtree is the path `t_{d-1} .. t_{v+1}`. Each deque node keeps its knuckle on the side
//! the layout leaves free. A `Max` deque is the mirror image, with keys decreasing.

use std::collections::VecDeque;

use thiserror::Error;

use crate::bst_vm::{NodeHandle, Side, TreeArena, TreeShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    Min,
    Max,
}

impl Orientation {
    /// Side of the root that holds the split node (left for `Min`).
    pub fn inner(self) -> Side {
        match self {
            Orientation::Min => Side::Left,
            Orientation::Max => Side::Right,
        }
    }

    /// Side through which the root links to what lies below the deque.
    pub fn outer(self) -> Side {
        self.inner().flip()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DequeError {
    #[error("pop on an empty deque")]
    Empty,
    #[error("node is not in the entry position required by the deque")]
    BadEntry,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Deque {
    pub orient: Orientation,
    pub root: Option<NodeHandle>,
    pub d: usize,
    /// Index of the split node; 0 while `d < 2`.
    pub v: usize,
}

impl Deque {
    pub fn new(orient: Orientation) -> Deque {
        Deque { orient, root: None, d: 0, v: 0 }
    }

    pub fn len(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.d == 0
    }

    fn a(&self) -> Side {
        self.orient.inner()
    }

    fn b(&self) -> Side {
        self.orient.outer()
    }

    fn follow(&self, t: &TreeArena, path: &[Side]) -> NodeHandle {
        let mut h = self.root.expect("non-empty deque");
        for &s in path {
            h = t.child(h, s).expect("deque layout");
        }
        h
    }

    /// The node nearest the tendon top (`t_1`), located without moving.
    pub fn front(&self, t: &TreeArena) -> Option<NodeHandle> {
        let r = self.root?;
        Some(match self.d {
            1 => r,
            _ if self.v == 1 => t.child(r, self.a()).expect("split node"),
            _ => self.follow(t, &[self.a(), self.a()]),
        })
    }

    pub fn back(&self) -> Option<NodeHandle> {
        self.root
    }

    /// Adds `x` as the new `t_1`. `x` must be the parent of the root, holding it on the
    /// outer side, with its knuckle on the inner side.
    pub fn push_front(&mut self, t: &mut TreeArena, x: NodeHandle) -> Result<(), DequeError> {
        let Some(r) = self.root else {
            self.root = Some(x);
            self.d = 1;
            self.v = 0;
            return Ok(());
        };
        if t.parent(r) != Some(x) || t.child(x, self.b()) != Some(r) {
            return Err(DequeError::BadEntry);
        }
        let tv = t.child(r, self.a());
        t.rotate_at(r);
        if self.d >= 2 {
            t.rotate_at(tv.expect("split node"));
            self.v += 1;
        } else {
            self.v = 1;
        }
        self.d += 1;
        Ok(())
    }

    /// Adds `x` as the new `t_{d+1}`. `x` must be the parent of the root, holding it on the
    /// inner side; the root's outer child is `x`'s knuckle.
    pub fn push_back(&mut self, t: &mut TreeArena, x: NodeHandle) -> Result<(), DequeError> {
        let Some(r) = self.root else {
            self.root = Some(x);
            self.d = 1;
            self.v = 0;
            return Ok(());
        };
        if t.parent(r) != Some(x) || t.child(x, self.a()) != Some(r) {
            return Err(DequeError::BadEntry);
        }
        if self.d >= 2 {
            let tv = t.child(r, self.a()).expect("split node");
            t.rotate_at(tv);
        } else {
            self.v = 1;
        }
        self.root = Some(x);
        self.d += 1;
        Ok(())
    }

    /// Removes `t_1`. It ends up in the root's old position, as the parent of the new
    /// root on its outer side.
    pub fn pop_front(&mut self, t: &mut TreeArena) -> Result<NodeHandle, DequeError> {
        let r = self.root.ok_or(DequeError::Empty)?;
        if self.d == 1 {
            self.root = None;
            self.d = 0;
            self.v = 0;
            return Ok(r);
        }
        if self.v == 1 && self.d <= 4 {
            let t1 = t.child(r, self.a()).expect("split node");
            t.rotate_at(t1);
            self.d -= 1;
            self.v = if self.d >= 2 { self.d - 1 } else { 0 };
            return Ok(t1);
        }
        if self.v == 1 {
            self.balance_low(t);
        }
        let t1 = self.follow(t, &[self.a(), self.a()]);
        t.rotate_at(t1);
        t.rotate_at(t1);
        self.v -= 1;
        self.d -= 1;
        Ok(t1)
    }

    /// Removes `t_d`. It stays in the root's position with the new root as its inner child
    /// and its knuckle hanging as the outer child of the new root.
    pub fn pop_back(&mut self, t: &mut TreeArena) -> Result<NodeHandle, DequeError> {
        let r = self.root.ok_or(DequeError::Empty)?;
        if self.d == 1 {
            self.root = None;
            self.d = 0;
            self.v = 0;
            return Ok(r);
        }
        if self.v == self.d - 1 && self.d <= 4 {
            self.root = t.child(r, self.a());
            self.d -= 1;
            self.v = if self.d >= 2 { 1 } else { 0 };
            return Ok(r);
        }
        if self.v == self.d - 1 {
            self.balance_high(t);
        }
        let next = self.follow(t, &[self.a(), self.b()]);
        t.rotate_at(next);
        self.root = Some(next);
        self.d -= 1;
        Ok(r)
    }

    /// Moves the split node to the middle when it is at least two away from it.
    /// Returns the number of rotations performed.
    pub fn balance(&mut self, t: &mut TreeArena) -> usize {
        if self.d < 2 {
            return 0;
        }
        let half = self.d / 2;
        if self.v + 2 <= half {
            self.balance_low(t)
        } else if self.v >= half + 2 {
            self.balance_high(t)
        } else {
            0
        }
    }

    fn repeat(&self, t: &mut TreeArena, count: isize, path: &[Side]) -> usize {
        let mut done = 0;
        for _ in 0..count.max(0) {
            let x = self.follow(t, path);
            t.rotate_at(x);
            done += 1;
        }
        done
    }

    fn chevron(&self, t: &mut TreeArena) -> usize {
        let (a, b) = (self.a(), self.b());
        let (d, v) = (self.d as isize, self.v as isize);
        self.repeat(t, v - 2, &[a, a, b]) + self.repeat(t, d - v - 2, &[a, b, a])
    }

    fn rebuild(&self, t: &mut TreeArena, inner_len: isize, outer_len: isize) -> usize {
        let (a, b) = (self.a(), self.b());
        self.repeat(t, inner_len, &[a, a, a]) + self.repeat(t, outer_len, &[a, b, b])
    }

    fn balance_low(&mut self, t: &mut TreeArena) -> usize {
        let (d, v) = (self.d as isize, self.v as isize);
        let (floor, ceil) = (d / 2, (d + 1) / 2);
        let mut n = self.chevron(t);
        n += self.repeat(t, ceil - v, &[self.a(), self.b()]);
        n += self.rebuild(t, ceil - 2, floor - 2);
        self.v = ceil as usize;
        n
    }

    fn balance_high(&mut self, t: &mut TreeArena) -> usize {
        let (d, v) = (self.d as isize, self.v as isize);
        let (floor, ceil) = (d / 2, (d + 1) / 2);
        let mut n = self.chevron(t);
        n += self.repeat(t, v - floor, &[self.a(), self.a()]);
        n += self.rebuild(t, floor - 2, ceil - 2);
        self.v = floor as usize;
        n
    }

    /// Reads `t_1 .. t_d` off the layout without moving the finger.
    pub fn decode(&self, t: &TreeArena) -> Vec<NodeHandle> {
        let Some(r) = self.root else { return Vec::new() };
        if self.d == 1 {
            return vec![r];
        }
        let (a, b) = (self.a(), self.b());
        let tv = t.child(r, a).expect("split node");
        let mut out = Vec::with_capacity(self.d);
        let mut h = tv;
        for _ in 1..self.v {
            h = t.child(h, if h == tv { a } else { b }).expect("inner path");
            out.push(h);
        }
        out.push(tv);
        let mut outer = Vec::new();
        let mut h = tv;
        for _ in self.v + 1..self.d {
            h = t.child(h, if h == tv { b } else { a }).expect("outer path");
            outer.push(h);
        }
        out.extend(outer.into_iter().rev());
        out.push(r);
        out
    }

    /// Checks the full layout against the expected contents and knuckles.
    pub fn check(
        &self,
        t: &TreeArena,
        expected: &[NodeHandle],
        knuckle: &dyn Fn(NodeHandle) -> Option<NodeHandle>,
    ) -> Result<(), String> {
        if expected.len() != self.d {
            return Err(format!("size {} but {} expected", self.d, expected.len()));
        }
        let (a, b) = (self.a(), self.b());
        let want = |got: Option<NodeHandle>, w: Option<NodeHandle>, what: &str| -> Result<(), String> {
            if got == w {
                Ok(())
            } else {
                Err(format!("{what}: found {got:?}, expected {w:?}"))
            }
        };
        match self.d {
            0 => return want(self.root, None, "root of empty deque"),
            1 => {
                if self.v != 0 {
                    return Err("split index set on a single node".into());
                }
                want(self.root, Some(expected[0]), "root")?;
                return want(t.child(expected[0], a), knuckle(expected[0]), "knuckle of t1");
            }
            _ => {}
        }
        let (d, v) = (self.d, self.v);
        if v < 1 || v > d - 1 {
            return Err(format!("split index {v} out of range for d={d}"));
        }
        let n = |i: usize| expected[i - 1];
        let k = |i: usize| knuckle(n(i));
        want(self.root, Some(n(d)), "root is t_d")?;
        want(t.child(n(d), a), Some(n(v)), "inner child of root is t_v")?;
        for i in 1..v {
            want(t.child(n(i), a), k(i), "knuckle on inner path")?;
            let below = if i + 1 < v { Some(n(i + 1)) } else { k(v) };
            want(t.child(n(i), b), below, "inner path link")?;
        }
        want(t.child(n(v), a), if v > 1 { Some(n(1)) } else { k(1) }, "inner child of t_v")?;
        want(t.child(n(v), b), if v + 1 < d { Some(n(d - 1)) } else { k(d) }, "outer child of t_v")?;
        for i in v + 1..d {
            want(t.child(n(i), b), k(i + 1), "knuckle on outer path")?;
            let below = if i > v + 1 { Some(n(i - 1)) } else { k(v + 1) };
            want(t.child(n(i), a), below, "outer path link")?;
        }
        Ok(())
    }
}

/// Drives one deque over a path of nodes so that any sequence of pushes and pops at
/// either end is legal; the deque always holds a contiguous stretch of the path.
#[derive(Clone, Debug)]
pub struct DequeHarness {
    pub tree: TreeArena,
    pub deque: Deque,
    path: Vec<NodeHandle>,
    knuckles: Vec<Option<NodeHandle>>,
    lo: usize,
    hi: usize,
    pub oracle: VecDeque<NodeHandle>,
}

impl DequeHarness {
    /// `knuckle_sizes[i]` is the size of the knuckle hanging off path node `i`.
    pub fn new(orient: Orientation, knuckle_sizes: &[usize]) -> DequeHarness {
        let len = knuckle_sizes.len();
        let mut shape = TreeShape::leaf();
        for &ks in knuckle_sizes.iter().rev() {
            let k = Box::new(TreeShape::balanced(ks));
            shape = match orient {
                Orientation::Min => TreeShape::Node(k, Box::new(shape)),
                Orientation::Max => TreeShape::Node(Box::new(shape), k),
            };
        }
        shape = match orient {
            Orientation::Min => TreeShape::Node(Box::new(shape), Box::new(TreeShape::Empty)),
            Orientation::Max => TreeShape::Node(Box::new(TreeShape::Empty), Box::new(shape)),
        };
        let tree = TreeArena::with_shape(&shape);
        let deque = Deque::new(orient);
        let mut path = Vec::with_capacity(len);
        let mut knuckles = Vec::with_capacity(len);
        let mut h = tree.child(tree.root(), orient.inner()).expect("path start");
        for _ in 0..len {
            path.push(h);
            knuckles.push(tree.child(h, orient.inner()));
            h = tree.child(h, orient.outer()).expect("path continues");
        }
        let start = len / 2;
        DequeHarness { tree, deque, path, knuckles, lo: start, hi: start, oracle: VecDeque::new() }
    }

    pub fn can_push_front(&self) -> bool {
        self.lo > 0
    }

    pub fn can_push_back(&self) -> bool {
        self.hi < self.path.len()
    }

    pub fn push_front(&mut self) {
        self.lo -= 1;
        let x = self.path[self.lo];
        self.deque.push_front(&mut self.tree, x).expect("front entry position");
        self.oracle.push_front(x);
    }

    pub fn push_back(&mut self) {
        let x = self.path[self.hi];
        if self.deque.root.is_some() {
            self.tree.rotate_at(x);
        }
        self.deque.push_back(&mut self.tree, x).expect("back entry position");
        self.hi += 1;
        self.oracle.push_back(x);
    }

    pub fn pop_front(&mut self) -> Result<NodeHandle, DequeError> {
        let x = self.deque.pop_front(&mut self.tree)?;
        self.lo += 1;
        self.oracle.pop_front();
        Ok(x)
    }

    pub fn pop_back(&mut self) -> Result<NodeHandle, DequeError> {
        let x = self.deque.pop_back(&mut self.tree)?;
        if let Some(r) = self.deque.root {
            self.tree.rotate_at(r);
        }
        self.hi -= 1;
        self.oracle.pop_back();
        Ok(x)
    }

    pub fn knuckle_roots(&self) -> Vec<NodeHandle> {
        self.knuckles.iter().flatten().copied().collect()
    }

    pub fn check(&self) -> Result<(), String> {
        let expected: Vec<NodeHandle> = self.oracle.iter().copied().collect();
        if self.deque.decode(&self.tree) != expected {
            return Err("decoded contents differ from the oracle".into());
        }
        let lookup = |h: NodeHandle| {
            let i = self.path.binary_search_by(|p| self.cmp_path(*p, h)).expect("path node");
            self.knuckles[i]
        };
        self.deque.check(&self.tree, &expected, &lookup)
    }

    fn cmp_path(&self, a: NodeHandle, b: NodeHandle) -> std::cmp::Ordering {
        match self.deque.orient {
            Orientation::Min => a.cmp(&b),
            Orientation::Max => b.cmp(&a),
        }
    }

    pub fn cost(&self) -> u64 {
        self.tree.meter.unit_ops
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(orient: Orientation, d: usize) -> DequeHarness {
        let mut h = DequeHarness::new(orient, &vec![1; 2 * d + 4]);
        for _ in 0..d {
            h.push_back();
            h.check().unwrap();
        }
        h
    }

    #[test]
    fn single_push_and_pop() {
        for orient in [Orientation::Min, Orientation::Max] {
            let mut h = DequeHarness::new(orient, &[1, 0, 2, 1]);
            h.push_front();
            h.check().unwrap();
            assert_eq!(h.deque.len(), 1);
            h.pop_front().unwrap();
            h.check().unwrap();
            assert!(h.deque.is_empty());
            assert_eq!(h.pop_back(), Err(DequeError::Empty));
        }
    }

    #[test]
    fn push_back_eight() {
        for orient in [Orientation::Min, Orientation::Max] {
            let h = filled(orient, 8);
            assert_eq!(h.deque.decode(&h.tree).len(), 8);
        }
    }

    #[test]
    fn balance_from_extremes() {
        for orient in [Orientation::Min, Orientation::Max] {
            // pushes at the back keep v = 1
            let mut h = filled(orient, 8);
            assert_eq!(h.deque.v, 1);
            let rot = h.deque.balance(&mut h.tree);
            assert!(rot > 0);
            assert_eq!(h.deque.v, 4);
            h.check().unwrap();
            assert_eq!(h.deque.balance(&mut h.tree), 0);

            let mut h = DequeHarness::new(orient, &vec![1; 30]);
            for _ in 0..9 {
                h.push_front();
            }
            assert_eq!(h.deque.v, 8);
            h.deque.balance(&mut h.tree);
            assert_eq!(h.deque.v, 4);
            h.check().unwrap();
        }
    }

    #[test]
    fn pop_front_triggers_balance() {
        for orient in [Orientation::Min, Orientation::Max] {
            let mut h = filled(orient, 7);
            assert_eq!(h.deque.v, 1);
            let first = h.oracle[0];
            assert_eq!(h.pop_front().unwrap(), first);
            h.check().unwrap();
        }
    }

    #[test]
    fn push_then_pop_is_identity() {
        for orient in [Orientation::Min, Orientation::Max] {
            let mut h = filled(orient, 6);
            let before = h.tree.snapshot_shape();
            h.push_front();
            h.pop_front().unwrap();
            assert_eq!(h.tree.snapshot_shape(), before);
            h.push_back();
            h.pop_back().unwrap();
            assert_eq!(h.tree.snapshot_shape(), before);
        }
    }
}
