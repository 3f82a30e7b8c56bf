//! Simulates a multifinger BST algorithm on a single-finger tree. The fingers and the
//! branching nodes between them (pseudofingers) form the hand; every hand edge is a
//! tendon kept in deques, so each multifinger operation costs O(1) amortized unit ops.

use std::collections::HashMap;

use crate::bst_vm::{NodeHandle, Side, TreeArena, UnitOp, VmError};
use crate::mf_vm::{route_in, view_of, FingerId, MfMachine, MfOperation, NodeView, Route};
use crate::tendon::{bit_side, Tendon, SIDE_TAG};

#[derive(Clone, Debug)]
struct Pf {
    node: NodeHandle,
    parent: Option<usize>,
    /// Tendon from the hand parent down to this node.
    above: Option<Tendon>,
    kids: [Option<usize>; 2],
}

fn slot(s: Side) -> usize {
    match s {
        Side::Left => 0,
        Side::Right => 1,
    }
}

/// Keys of a node's logical neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogicalView {
    pub parent: Option<u64>,
    pub left: Option<u64>,
    pub right: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct MfToBst {
    phys: TreeArena,
    /// The tree as the simulated algorithm sees it; used for views, routes and checks.
    shadow: TreeArena,
    fingers: Vec<NodeHandle>,
    pfs: Vec<Option<Pf>>,
    root: usize,
}

impl MfToBst {
    pub fn new(tree: TreeArena, fingers: usize) -> MfToBst {
        let root = tree.root();
        let mut phys = tree.clone();
        phys.place_finger(root);
        let pf = Pf { node: root, parent: None, above: None, kids: [None, None] };
        MfToBst { phys, shadow: tree, fingers: vec![root; fingers], pfs: vec![Some(pf)], root: 0 }
    }

    pub fn physical(&self) -> &TreeArena {
        &self.phys
    }

    pub fn logical(&self) -> &TreeArena {
        &self.shadow
    }

    pub fn set_aug_words(&mut self, words: usize) {
        self.phys.set_aug_words(words);
    }

    /// Records every key the physical finger touches.
    pub fn enable_trace(&mut self) {
        self.phys.enable_trace();
    }

    pub fn take_trace(&mut self) -> Vec<u64> {
        self.phys.take_trace()
    }

    pub fn trace_len(&self) -> usize {
        self.phys.trace_len()
    }

    pub fn pseudofinger_count(&self) -> usize {
        self.pfs.iter().flatten().count()
    }

    fn pf(&self, i: usize) -> &Pf {
        self.pfs[i].as_ref().expect("live pseudofinger")
    }

    fn pf_mut(&mut self, i: usize) -> &mut Pf {
        self.pfs[i].as_mut().expect("live pseudofinger")
    }

    fn find(&self, h: NodeHandle) -> Option<usize> {
        self.pfs.iter().position(|p| p.as_ref().is_some_and(|p| p.node == h))
    }

    fn alloc(&mut self, pf: Pf) -> usize {
        match self.pfs.iter().position(Option::is_none) {
            Some(i) => {
                self.pfs[i] = Some(pf);
                i
            }
            None => {
                self.pfs.push(Some(pf));
                self.pfs.len() - 1
            }
        }
    }

    fn above(&self, i: usize) -> &Tendon {
        self.pf(i).above.as_ref().expect("non-root pseudofinger")
    }

    /// Side of a pseudofinger's subtree under its hand parent.
    fn hand_side(&self, i: usize) -> Side {
        self.above(i).s0
    }

    fn hand_depth(&self, mut i: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.pf(i).parent {
            i = p;
            d += 1;
        }
        d
    }

    /// Makes the logical parent of pseudofinger `i` its hand parent, with an empty
    /// tendon between them. Returns the parent's index.
    fn expose_parent(&mut self, i: usize) -> usize {
        let parent = self.pf(i).parent.expect("non-root pseudofinger");
        if self.above(i).is_empty() {
            return parent;
        }
        let mut t = self.pf_mut(i).above.take().unwrap();
        let old_sy = t.sy;
        let below = t.bottom;
        let w = t.remove_child(&mut self.phys).expect("tendon is not empty");
        let side = t.s0;
        let mut kids = [None, None];
        kids[slot(old_sy)] = Some(i);
        let wi = self.alloc(Pf { node: w, parent: Some(parent), above: Some(t), kids });
        self.pf_mut(parent).kids[slot(side)] = Some(wi);
        let me = self.pf_mut(i);
        me.parent = Some(wi);
        me.above = Some(Tendon::empty(w, below, old_sy));
        wi
    }

    /// Makes the logical child of pseudofinger `i` on side `s` a pseudofinger that hangs
    /// right below it. Returns its index.
    fn expose_child(&mut self, i: usize, s: Side) -> usize {
        let u = self.pf(i).node;
        if let Some(q) = self.pf(i).kids[slot(s)] {
            if self.above(q).is_empty() {
                return q;
            }
            let mut t = self.pf_mut(q).above.take().unwrap();
            let c = t.remove_parent(&mut self.phys).expect("tendon is not empty");
            let mut kids = [None, None];
            kids[slot(t.s0)] = Some(q);
            let ci = self.alloc(Pf { node: c, parent: Some(i), above: Some(Tendon::empty(u, c, s)), kids });
            let qp = self.pf_mut(q);
            qp.parent = Some(ci);
            qp.above = Some(t);
            self.pf_mut(i).kids[slot(s)] = Some(ci);
            ci
        } else {
            self.phys.walk_to(u);
            let c = self.phys.child(u, s).expect("validated against the logical tree");
            let ci = self.alloc(Pf { node: c, parent: Some(i), above: Some(Tendon::empty(u, c, s)), kids: [None, None] });
            self.pf_mut(i).kids[slot(s)] = Some(ci);
            ci
        }
    }

    fn rotate(&mut self, i: usize) {
        let wi = self.expose_parent(i);
        let s = self.above(i).sy;
        let o = s.flip();
        if self.pf(i).kids[slot(o)].is_some() {
            self.expose_child(i, o);
        }
        let b = self.pf(i).kids[slot(o)];
        let u = self.pf(i).node;
        let w = self.pf(wi).node;
        self.phys.rotate_at(u);

        let above_w = self.pf_mut(wi).above.take();
        let grand = self.pf(wi).parent;
        let me = self.pf_mut(i);
        me.above = above_w.map(|mut t| {
            t.bottom = u;
            t
        });
        me.parent = grand;
        me.kids[slot(o)] = Some(wi);
        match grand {
            Some(g) => {
                let side = self.hand_side(i);
                self.pf_mut(g).kids[slot(side)] = Some(i);
            }
            None => self.root = i,
        }
        let wp = self.pf_mut(wi);
        wp.parent = Some(i);
        wp.above = Some(Tendon::empty(u, w, o));
        wp.kids[slot(s)] = b;
        if let Some(bi) = b {
            let bn = self.pf(bi).node;
            let bp = self.pf_mut(bi);
            bp.parent = Some(wi);
            bp.above = Some(Tendon::empty(w, bn, s));
        }
    }

    fn essential(&self, i: usize) -> bool {
        let p = self.pf(i);
        i == self.root || self.fingers.contains(&p.node) || p.kids.iter().all(Option::is_some)
    }

    /// Folds pseudofingers that are no longer needed into the neighbouring tendons.
    fn normalize(&mut self) {
        loop {
            let victim = (0..self.pfs.len())
                .filter(|&i| self.pfs[i].is_some() && !self.essential(i))
                .max_by_key(|&i| self.hand_depth(i));
            let Some(i) = victim else { return };
            let parent = self.pf(i).parent.expect("the root is essential");
            let up_side = self.hand_side(i);
            let kid = self.pf(i).kids.iter().flatten().copied().next();
            match kid {
                None => {
                    assert!(self.above(i).is_empty(), "leaf pseudofinger below a non-empty tendon");
                    self.pf_mut(parent).kids[slot(up_side)] = None;
                }
                Some(q) => {
                    let sy = self.above(i).sy;
                    let t = if self.above(i).is_empty() {
                        let pnode = self.pf(parent).node;
                        let mut t = self.pf_mut(q).above.take().unwrap();
                        t.add_parent(&mut self.phys, pnode, sy).expect("side bit fits the budget");
                        t
                    } else if self.above(q).is_empty() {
                        let qnode = self.pf(q).node;
                        let qside = self.above(q).sy;
                        let mut t = self.pf_mut(i).above.take().unwrap();
                        t.add_child(&mut self.phys, qnode, qside).expect("side bit fits the budget");
                        t
                    } else {
                        panic!("pseudofinger between two non-empty tendons");
                    };
                    let qp = self.pf_mut(q);
                    qp.above = Some(t);
                    qp.parent = Some(parent);
                    self.pf_mut(parent).kids[slot(up_side)] = Some(q);
                }
            }
            self.pfs[i] = None;
        }
    }

    /// Logical parent links recovered from the physical tree and the hand registers.
    pub fn decode_parents(&self) -> Vec<Option<NodeHandle>> {
        let t = &self.phys;
        let mut parent: Vec<Option<NodeHandle>> = vec![None; t.len()];
        let mut spine: HashMap<NodeHandle, [Option<NodeHandle>; 2]> = HashMap::new();
        for pf in self.pfs.iter().flatten() {
            spine.entry(pf.node).or_default();
            let Some(tend) = &pf.above else { continue };
            let mut prev = tend.top;
            spine.entry(prev).or_default();
            for h in tend.decode(t) {
                let side = bit_side(t.aug_at(h).get(SIDE_TAG).unwrap_or(0));
                parent[h.index()] = Some(prev);
                spine.entry(prev).or_default()[slot(side)] = Some(h);
                spine.entry(h).or_default();
                prev = h;
            }
            parent[pf.node.index()] = Some(prev);
            spine.entry(prev).or_default()[slot(tend.sy)] = Some(pf.node);
        }
        let mut order: Vec<NodeHandle> = spine.keys().copied().collect();
        order.sort_by_key(|&h| t.key(h));
        for i in 0..t.len() {
            let h = NodeHandle(i as u32);
            if spine.contains_key(&h) {
                continue;
            }
            let p = t.parent(h).expect("only a pseudofinger is the physical root");
            if !spine.contains_key(&p) {
                parent[i] = Some(p);
                continue;
            }
            let k = t.key(h);
            let at = order.partition_point(|&s| t.key(s) < k);
            parent[i] = Some(if at == 0 {
                order[0]
            } else if at == order.len() {
                order[at - 1]
            } else {
                let a = order[at - 1];
                if spine[&a][1].is_none() {
                    a
                } else {
                    order[at]
                }
            });
        }
        parent
    }

    /// Logical neighbours of `h` decoded from the physical layout.
    pub fn logical_view(&self, h: NodeHandle) -> LogicalView {
        let parents = self.decode_parents();
        let key = |x: NodeHandle| self.phys.key(x);
        let mut view = LogicalView { parent: parents[h.index()].map(key), left: None, right: None };
        for (i, p) in parents.iter().enumerate() {
            if *p == Some(h) {
                let c = NodeHandle(i as u32);
                if key(c) < key(h) {
                    view.left = Some(key(c));
                } else {
                    view.right = Some(key(c));
                }
            }
        }
        view
    }

    /// Walks finger `f` back to the logical root with parent moves.
    pub fn reset_finger_to_root(&mut self, f: FingerId) -> Result<(), VmError> {
        while self.shadow.parent(self.fingers[f]).is_some() {
            self.mf_apply(MfOperation::new(f, UnitOp::MoveParent))?;
        }
        Ok(())
    }

    fn phys_distance(&self, a: NodeHandle, b: NodeHandle) -> usize {
        let t = &self.phys;
        let (mut a, mut b) = (a, b);
        let (mut da, mut db) = (t.depth(a), t.depth(b));
        let mut d = 0;
        while da > db {
            a = t.parent(a).unwrap();
            da -= 1;
            d += 1;
        }
        while db > da {
            b = t.parent(b).unwrap();
            db -= 1;
            d += 1;
        }
        while a != b {
            a = t.parent(a).unwrap();
            b = t.parent(b).unwrap();
            d += 2;
        }
        d
    }

    /// Full consistency check of the physical layout against the logical tree.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.phys.check_invariants()?;
        if self.decode_parents() != self.shadow.parent_array() {
            return Err("decoded tree differs from the logical tree".into());
        }
        let lg = &self.shadow;
        if self.pf(self.root).node != lg.root() {
            return Err("root pseudofinger is not the logical root".into());
        }
        for &f in &self.fingers {
            if self.find(f).is_none() {
                return Err(format!("finger at {} is not a pseudofinger", lg.key(f)));
            }
        }
        let f = self.fingers.len();
        if self.pseudofinger_count() > 2 * f {
            return Err(format!("{} pseudofingers for {f} fingers", self.pseudofinger_count()));
        }
        let nodes: Vec<NodeHandle> = self.pfs.iter().flatten().map(|p| p.node).collect();
        for (j, &a) in nodes.iter().enumerate() {
            for &b in &nodes[j + 1..] {
                if self.phys_distance(a, b) > 8 * f {
                    return Err("two pseudofingers are too far apart".into());
                }
            }
        }
        for (i, pf) in self.pfs.iter().enumerate() {
            let Some(pf) = pf else { continue };
            if !self.essential(i) {
                return Err(format!("pseudofinger {} is not essential", lg.key(pf.node)));
            }
            if self.phys.depth(pf.node) > 3 * self.hand_depth(i) {
                return Err(format!("pseudofinger {} sits too deep", lg.key(pf.node)));
            }
            let Some(tend) = &pf.above else { continue };
            let mut path = Vec::new();
            let mut h = lg.parent(pf.node).ok_or("pseudofinger above the logical root")?;
            while h != tend.top {
                path.push((h, lg.side_of(h).unwrap()));
                h = lg.parent(h).ok_or("tendon top is not a logical ancestor")?;
            }
            path.reverse();
            if lg.side_of(pf.node) != Some(tend.sy) {
                return Err("tendon bottom side is stale".into());
            }
            let dirs: HashMap<NodeHandle, Side> = path
                .iter()
                .enumerate()
                .map(|(j, &(n, _))| (n, path.get(j + 1).map_or(tend.sy, |p| p.1)))
                .collect();
            let knuckle = |x: NodeHandle| lg.child(x, dirs[&x].flip());
            tend.check(&self.phys, &path, &knuckle)?;
        }
        Ok(())
    }

    fn validate(&self, op: MfOperation) -> Result<NodeHandle, VmError> {
        let u = *self.fingers.get(op.finger).ok_or(VmError::NoSuchFinger(op.finger))?;
        let lg = &self.shadow;
        match op.op {
            UnitOp::MoveParent | UnitOp::RotateWithParent if lg.parent(u).is_none() => Err(VmError::IllegalAtRoot),
            UnitOp::MoveLeft if lg.left(u).is_none() => Err(VmError::NoLeftChild),
            UnitOp::MoveRight if lg.right(u).is_none() => Err(VmError::NoRightChild),
            _ => Ok(u),
        }
    }
}

impl MfMachine for MfToBst {
    fn num_fingers(&self) -> usize {
        self.fingers.len()
    }

    fn len(&self) -> usize {
        self.shadow.len()
    }

    fn max_key(&self) -> u64 {
        self.shadow.key(NodeHandle(self.shadow.len() as u32 - 1))
    }

    fn mf_apply(&mut self, op: MfOperation) -> Result<u64, VmError> {
        let u = self.validate(op)?;
        let i = self.find(u).expect("fingers sit on pseudofingers");
        self.phys.walk_to(u);
        let touched = match op.op {
            UnitOp::MoveParent => {
                let w = self.expose_parent(i);
                self.pf(w).node
            }
            UnitOp::MoveLeft => {
                let c = self.expose_child(i, Side::Left);
                self.pf(c).node
            }
            UnitOp::MoveRight => {
                let c = self.expose_child(i, Side::Right);
                self.pf(c).node
            }
            UnitOp::RotateWithParent => {
                self.rotate(i);
                u
            }
        };
        self.phys.walk_to(touched);
        self.fingers[op.finger] = touched;
        self.shadow.place_finger(u);
        self.shadow.apply(op.op).expect("validated");
        self.normalize();
        Ok(self.shadow.key(touched))
    }

    fn view(&self, f: FingerId) -> NodeView {
        view_of(&self.shadow, self.fingers[f])
    }

    fn route(&self, f: FingerId, key: u64) -> Route {
        route_in(&self.shadow, self.fingers[f], key)
    }

    fn read_aug(&self, f: FingerId, tag: u16) -> Option<u128> {
        self.phys.aug_at(self.fingers[f]).get(tag)
    }

    fn write_aug(&mut self, f: FingerId, tag: u16, width: usize, value: u128) -> Result<(), VmError> {
        self.phys.set_aug_field(self.fingers[f], tag, width, value)
    }

    fn clear_aug(&mut self, f: FingerId, tag: u16) {
        self.phys.clear_aug_field(self.fingers[f], tag);
    }

    fn cost(&self) -> u64 {
        self.phys.meter.unit_ops
    }

    fn peak_aug_bits(&self) -> usize {
        self.phys.peak_aug_bits()
    }

    fn aug_capacity(&self) -> usize {
        self.phys.aug_capacity()
    }

    fn logical_shape(&self) -> String {
        self.shadow.snapshot_shape()
    }
}
