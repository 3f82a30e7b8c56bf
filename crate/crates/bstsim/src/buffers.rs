//! Buffers stored in the augmented bits of the tree: a doubly linked list of buffer
//! nodes that grows with the number of structural changes, plus the access, operation
//! history and tree-state buffers built on it.

use crate::bst_vm::{word_bits, Side, TreeArena, UnitOp, VmError};
use crate::mf_vm::FingerId;
use crate::proto::Ctx;

/// One Leftify step at finger `f`: a right child is rotated up (`Some(true)`), otherwise
/// the finger moves left (`Some(false)`). `None` once the finger is on a leaf.
pub async fn leftify_step(ctx: &Ctx, f: FingerId) -> Option<bool> {
    let v = ctx.view(f);
    if v.has_right {
        ctx.op(f, UnitOp::MoveRight).await;
        ctx.op(f, UnitOp::RotateWithParent).await;
        Some(true)
    } else if v.has_left {
        ctx.op(f, UnitOp::MoveLeft).await;
        Some(false)
    } else {
        None
    }
}

/// Turns the tree into a left path, starting with the finger at the root.
/// Returns the step bits; the finger ends on the smallest key.
pub fn leftify(t: &mut TreeArena) -> Vec<bool> {
    let root = t.root();
    t.walk_to(root);
    let mut steps = Vec::new();
    loop {
        let f = t.finger();
        if t.right(f).is_some() {
            t.apply(UnitOp::MoveRight).unwrap();
            t.apply(UnitOp::RotateWithParent).unwrap();
            steps.push(true);
        } else if t.left(f).is_some() {
            t.apply(UnitOp::MoveLeft).unwrap();
            steps.push(false);
        } else {
            return steps;
        }
    }
}

/// Undoes a Leftify run recorded as `steps`, with the finger at the bottom of the left path.
pub fn unleftify(t: &mut TreeArena, steps: &[bool]) {
    for &s in steps.iter().rev() {
        if s {
            t.apply(UnitOp::MoveLeft).unwrap();
            t.apply(UnitOp::RotateWithParent).unwrap();
        } else {
            t.apply(UnitOp::MoveParent).unwrap();
        }
    }
}

/// Number of unit ops a Leftify run with these steps takes.
pub fn leftify_cost(steps: &[bool]) -> usize {
    steps.iter().map(|&s| if s { 2 } else { 1 }).sum()
}

/// Essential operations allowed in epoch `i` of a tree with `n` nodes.
pub fn epoch_len(i: u32, n: usize) -> usize {
    if i == 0 {
        return 1;
    }
    if i - 1 >= usize::BITS - 1 {
        return n.max(1);
    }
    (1usize << (i - 1)).min(n.max(1))
}

/// Width in bits of a key field.
pub fn key_width(max_key: u64) -> usize {
    (64 - max_key.leading_zeros() as usize).max(1)
}

pub type CursorId = usize;

#[derive(Clone, Copy, Debug)]
struct Cursor {
    finger: FingerId,
    cell: usize,
    key: u64,
    prev: u64,
}

/// Tags used by one buffer layer, starting at its base. Links alternate between two
/// banks so a reallocation can read the old list while threading the new one.
const LINK: u16 = 0;
const FIRST_SLOT: u16 = 2;

/// A layer of buffer nodes `b_1..b_k` threaded through the tree in key order. Each node
/// stores the XOR of its neighbours' keys. Cells are addressed by index: cell `c` lives
/// in node `c mod n`, in stripe `c / n`.
pub struct Buf {
    ctx: Ctx,
    aux: [FingerId; 2],
    tag_base: u16,
    next_tag: u16,
    n: usize,
    key_bits: usize,
    epoch: u32,
    essential: usize,
    allocated: usize,
    first_key: u64,
    last_key: u64,
    cursors: Vec<Cursor>,
    slots: Vec<(u16, usize)>,
    bank: u16,
    written: usize,
    reallocations: usize,
    cell_bits: Option<usize>,
}

impl Buf {
    /// Allocates the first epoch's nodes and parks every cursor finger on `b_1`.
    pub async fn new(ctx: Ctx, aux: [FingerId; 2], cursor_fingers: &[FingerId], tag_base: u16) -> Buf {
        let n = ctx.len();
        let key_bits = key_width(ctx.machine().borrow().max_key());
        let cursors = cursor_fingers.iter().map(|&finger| Cursor { finger, cell: 0, key: 0, prev: 0 }).collect();
        let mut b = Buf {
            ctx,
            aux,
            tag_base,
            next_tag: tag_base + FIRST_SLOT,
            n,
            key_bits,
            epoch: 0,
            essential: 0,
            allocated: 0,
            first_key: 0,
            last_key: 0,
            cursors,
            slots: Vec::new(),
            bank: 0,
            written: 0,
            reallocations: 0,
            cell_bits: None,
        };
        b.reallocate().await;
        b
    }

    pub fn ctx(&self) -> &Ctx {
        &self.ctx
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn key_bits(&self) -> usize {
        self.key_bits
    }

    pub fn allocated(&self) -> usize {
        self.allocated
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn reallocations(&self) -> usize {
        self.reallocations
    }

    /// Limits every slot reserved from now on to `words` words of `⌈log2 n⌉` bits.
    pub fn set_cell_words(&mut self, words: usize) {
        self.cell_bits = Some(words * word_bits(self.n));
    }

    /// Reserves `stripes` consecutive tags of `width` bits; returns the first. A slot wider
    /// than the cell limit faults the run.
    pub fn alloc_slots(&mut self, width: usize, stripes: usize) -> u16 {
        if let Some(capacity) = self.cell_bits.filter(|&c| width > c) {
            self.ctx.raise(VmError::BudgetExceeded { bits: width, capacity });
        }
        let base = self.next_tag;
        for s in 0..stripes {
            self.slots.push((base + s as u16, width));
        }
        self.next_tag += stripes as u16;
        base
    }

    /// Bits per node this layer may use with the slots reserved so far.
    pub fn bits_per_node(&self) -> usize {
        2 * self.key_bits + self.slots.iter().map(|s| s.1).sum::<usize>()
    }

    pub fn cell(&self, c: CursorId) -> usize {
        self.cursors[c].cell
    }

    pub fn cursor_finger(&self, c: CursorId) -> FingerId {
        self.cursors[c].finger
    }

    fn stripe_tag(&self, c: CursorId, base: u16) -> u16 {
        base + (self.cursors[c].cell / self.n) as u16
    }

    pub fn read(&self, c: CursorId, base: u16) -> Option<u128> {
        self.ctx.read_aug(self.cursors[c].finger, self.stripe_tag(c, base))
    }

    pub fn write(&mut self, c: CursorId, base: u16, width: usize, value: u128) {
        let cell = self.cursors[c].cell;
        self.written = self.written.max(if cell >= self.n { self.n } else { cell + 1 });
        self.ctx.write_aug(self.cursors[c].finger, self.stripe_tag(c, base), width, value);
    }

    /// Counts one essential operation, starting a new epoch first if the current one is full.
    pub async fn essential(&mut self) {
        if self.essential == epoch_len(self.epoch, self.n) {
            self.epoch += 1;
            self.essential = 0;
            self.reallocate().await;
        }
        self.essential += 1;
    }

    pub async fn next_cell(&mut self, c: CursorId) {
        self.essential().await;
        let n = self.n;
        let cur = self.cursors[c];
        let p = cur.cell % n;
        let (key, prev) = if p + 1 < self.allocated {
            let link = self.read_link(cur.finger);
            (link ^ cur.prev, cur.key)
        } else {
            assert_eq!(self.allocated, n, "cursor ran past the allocated buffer");
            (self.first_key, 0)
        };
        self.ctx.seek(cur.finger, key).await;
        self.cursors[c] = Cursor { finger: cur.finger, cell: cur.cell + 1, key, prev };
    }

    pub async fn prev_cell(&mut self, c: CursorId) {
        if self.cursors[c].cell == 0 {
            return;
        }
        self.essential().await;
        let cur = self.cursors[c];
        let p = cur.cell % self.n;
        let (key, next) = if p > 0 { (cur.prev, cur.key) } else { (self.last_key, 0) };
        self.ctx.seek(cur.finger, key).await;
        let prev = self.read_link(cur.finger) ^ next;
        self.cursors[c] = Cursor { finger: cur.finger, cell: cur.cell - 1, key, prev };
    }

    fn read_link(&self, f: FingerId) -> u64 {
        self.ctx.read_aug(f, self.tag_base + LINK + self.bank).expect("buffer node without a link") as u64
    }

    fn copy_cells(&self, from: FingerId, to: FingerId) {
        for &(tag, width) in &self.slots {
            if let Some(v) = self.ctx.read_aug(from, tag) {
                self.ctx.write_aug(to, tag, width, v);
            }
        }
    }

    /// Rebuilds the buffer on the first nodes of a pre-order walk for the current epoch and
    /// moves every cursor to its new node. Uses no rotations.
    async fn reallocate(&mut self) {
        let n = self.n;
        if self.allocated == n {
            return;
        }
        let target = n.min(epoch_len(self.epoch + 1, n) + 1);
        self.reallocations += 1;
        let ctx = self.ctx.clone();
        let [g, h] = self.aux;
        let new_link = self.tag_base + LINK + (1 - self.bank);
        let (old_len, old_first) = (self.allocated, self.first_key);
        // One depth-first walk counts nodes in pre-order and threads the members in key
        // order; `h` trails one member behind and writes its link.
        let mut targets = vec![None; self.cursors.len()];
        let mut j = 0;
        let mut prev = 0;
        let mut first = 0;
        ctx.to_root(g).await;
        let mut count = 1;
        let mut phase = 0;
        loop {
            let v = ctx.view(g);
            match phase {
                0 if v.has_left && count < target => {
                    ctx.op(g, UnitOp::MoveLeft).await;
                    count += 1;
                }
                0 => phase = 1,
                1 => {
                    if j == 0 {
                        first = v.key;
                    } else {
                        let at = ctx.view(h).key;
                        ctx.write_aug(h, new_link, self.key_bits, (prev ^ v.key) as u128);
                        prev = at;
                    }
                    for (c, cur) in self.cursors.iter().enumerate() {
                        if cur.cell % n == j {
                            targets[c] = Some((v.key, prev));
                        }
                    }
                    ctx.seek(h, v.key).await;
                    j += 1;
                    if v.has_right && count < target {
                        ctx.op(g, UnitOp::MoveRight).await;
                        count += 1;
                        phase = 0;
                    } else {
                        phase = 2;
                    }
                }
                _ => {
                    let Some(side) = v.side else { break };
                    ctx.op(g, UnitOp::MoveParent).await;
                    phase = if side == Side::Left { 1 } else { 2 };
                }
            }
        }
        debug_assert_eq!(j, target);
        let last = ctx.view(h).key;
        ctx.write_aug(h, new_link, self.key_bits, prev as u128);
        let common = old_len.min(target).min(self.written);
        if common > 0 {
            self.move_cells(common, old_first, first).await;
        }
        self.bank = 1 - self.bank;
        self.allocated = target;
        self.first_key = first;
        self.last_key = last;
        for (c, t) in targets.into_iter().enumerate() {
            let (key, prev) = t.expect("cursor beyond the new buffer");
            let f = self.cursors[c].finger;
            ctx.seek(f, key).await;
            self.cursors[c].key = key;
            self.cursors[c].prev = prev;
        }
    }

    /// Copies cells `0..common` from the old buffer nodes to the new ones. Cells moving to
    /// smaller keys go front to back, the others back to front, so no cell is overwritten
    /// before it is read.
    async fn move_cells(&self, common: usize, old_first: u64, new_first: u64) {
        let ctx = &self.ctx;
        let [g, h] = self.aux;
        let old_tag = self.tag_base + LINK + self.bank;
        let new_tag = self.tag_base + LINK + (1 - self.bank);
        let link = |f: FingerId, tag: u16| ctx.read_aug(f, tag).expect("buffer node without a link") as u64;
        ctx.seek(g, new_first).await;
        ctx.seek(h, old_first).await;
        let (mut gp, mut hp) = (0, 0);
        for j in 0..common {
            let (kn, ko) = (ctx.view(g).key, ctx.view(h).key);
            if kn <= ko {
                self.copy_cells(h, g);
            }
            if j + 1 < common {
                let (gn, hn) = (link(g, new_tag) ^ gp, link(h, old_tag) ^ hp);
                gp = kn;
                hp = ko;
                ctx.seek(g, gn).await;
                ctx.seek(h, hn).await;
            }
        }
        let (mut gn, mut hn) = (link(g, new_tag) ^ gp, link(h, old_tag) ^ hp);
        for j in (0..common).rev() {
            let (kn, ko) = (ctx.view(g).key, ctx.view(h).key);
            if kn > ko {
                self.copy_cells(h, g);
            }
            if j > 0 {
                let (gb, hb) = (link(g, new_tag) ^ gn, link(h, old_tag) ^ hn);
                gn = kn;
                hn = ko;
                ctx.seek(g, gb).await;
                ctx.seek(h, hb).await;
            }
        }
    }
}

/// Access sequence buffer shared by two structures. Each has its own read cursor; a read
/// past the recorded prefix pulls the next key from the input and records it.
pub struct Asb {
    cursors: [CursorId; 2],
    count: [usize; 2],
    recorded: usize,
    last: Option<u64>,
    tag: u16,
}

impl Asb {
    pub fn new(buf: &mut Buf, cursors: [CursorId; 2], stripes: usize) -> Asb {
        let tag = buf.alloc_slots(buf.key_bits(), stripes);
        Asb { cursors, count: [0; 2], recorded: 0, last: None, tag }
    }

    /// Next key for structure `mu`, or `None` once the input is exhausted.
    pub async fn next(&mut self, buf: &mut Buf, mu: usize) -> Option<u64> {
        let c = self.cursors[mu];
        let i = self.count[mu];
        if i > 0 {
            buf.next_cell(c).await;
        }
        let key = if i == self.recorded {
            let key = buf.ctx().next_access().await?;
            buf.write(c, self.tag, buf.key_bits(), key as u128);
            self.recorded += 1;
            self.last = Some(key);
            key
        } else {
            buf.read(c, self.tag).expect("recorded access missing") as u64
        };
        self.count[mu] += 1;
        Some(key)
    }

    /// Accesses handed to structure `mu` so far.
    pub fn count(&self, mu: usize) -> usize {
        self.count[mu]
    }

    pub fn recorded(&self) -> usize {
        self.recorded
    }

    pub fn last(&self) -> Option<u64> {
        self.last
    }

    /// The structure that has read further, if any.
    pub fn ahead(&self) -> Option<usize> {
        match self.count[0].cmp(&self.count[1]) {
            std::cmp::Ordering::Greater => Some(0),
            std::cmp::Ordering::Less => Some(1),
            std::cmp::Ordering::Equal => None,
        }
    }
}

/// Entry of an operation history buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entry {
    Move(Side),
    /// Parent move from a child on this side.
    Up(Side),
    /// Rotation of a child on this side.
    Rotate(Side),
    /// An access that needed no operation.
    Null,
}

impl Entry {
    /// The entry for `op` applied at a node whose view is `v`.
    pub fn of(op: UnitOp, side: Option<Side>) -> Entry {
        match op {
            UnitOp::MoveLeft => Entry::Move(Side::Left),
            UnitOp::MoveRight => Entry::Move(Side::Right),
            UnitOp::MoveParent => Entry::Up(side.expect("parent move at the root")),
            UnitOp::RotateWithParent => Entry::Rotate(side.expect("rotation at the root")),
        }
    }

    fn code(self) -> u128 {
        match self {
            Entry::Move(Side::Left) => 1,
            Entry::Move(Side::Right) => 2,
            Entry::Up(Side::Left) => 3,
            Entry::Up(Side::Right) => 4,
            Entry::Rotate(Side::Left) => 5,
            Entry::Rotate(Side::Right) => 6,
            Entry::Null => 7,
        }
    }

    fn decode(code: u128) -> Entry {
        match code {
            1 => Entry::Move(Side::Left),
            2 => Entry::Move(Side::Right),
            3 => Entry::Up(Side::Left),
            4 => Entry::Up(Side::Right),
            5 => Entry::Rotate(Side::Left),
            6 => Entry::Rotate(Side::Right),
            7 => Entry::Null,
            c => panic!("bad history code {c}"),
        }
    }

    pub fn redo(self) -> Vec<UnitOp> {
        match self {
            Entry::Move(s) => vec![UnitOp::move_to(s)],
            Entry::Up(_) => vec![UnitOp::MoveParent],
            Entry::Rotate(_) => vec![UnitOp::RotateWithParent],
            Entry::Null => vec![],
        }
    }

    pub fn undo(self) -> Vec<UnitOp> {
        match self {
            Entry::Move(_) => vec![UnitOp::MoveParent],
            Entry::Up(s) => vec![UnitOp::move_to(s)],
            Entry::Rotate(s) => {
                let o = s.flip();
                vec![UnitOp::move_to(o), UnitOp::RotateWithParent, UnitOp::move_to(s)]
            }
            Entry::Null => vec![],
        }
    }
}

/// Operation history buffer: entries tagged with the finger they ran at.
pub struct Ohb {
    cursor: CursorId,
    tag: u16,
    width: usize,
    finger_bits: usize,
    capacity: usize,
    len: usize,
    pos: usize,
}

impl Ohb {
    pub fn new(buf: &mut Buf, cursor: CursorId, stripes: usize, fingers: usize) -> Ohb {
        let finger_bits = if fingers <= 1 { 0 } else { key_width(fingers as u64 - 1) };
        let width = 3 + finger_bits;
        let tag = buf.alloc_slots(width, stripes);
        Ohb { cursor, tag, width, finger_bits, capacity: stripes * buf.n(), len: 0, pos: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Entries in front of the cursor.
    pub fn pos(&self) -> usize {
        self.pos
    }

    async fn forward(&mut self, buf: &mut Buf) {
        self.pos += 1;
        if self.pos < self.capacity {
            buf.next_cell(self.cursor).await;
        }
    }

    async fn backward(&mut self, buf: &mut Buf) {
        if self.pos < self.capacity {
            buf.prev_cell(self.cursor).await;
        }
        self.pos -= 1;
    }

    /// Appends an entry at the cursor, which must be at the end.
    pub async fn record(&mut self, buf: &mut Buf, finger: FingerId, e: Entry) {
        assert_eq!(self.pos, self.len);
        assert!(self.len < self.capacity, "operation history buffer is full");
        let v = e.code() | (finger as u128) << 3;
        buf.write(self.cursor, self.tag, self.width, v);
        self.len += 1;
        self.forward(buf).await;
    }

    fn entry(&self, buf: &Buf) -> (FingerId, Entry) {
        let v = buf.read(self.cursor, self.tag).expect("history entry missing");
        let f = (v >> 3) as usize & ((1 << self.finger_bits) - 1);
        (f, Entry::decode(v & 7))
    }

    /// Reads the entry under the cursor and steps forward.
    pub async fn redo_next(&mut self, buf: &mut Buf) -> (FingerId, Entry) {
        assert!(self.pos < self.len);
        let e = self.entry(buf);
        self.forward(buf).await;
        e
    }

    /// Steps back and reads the entry there.
    pub async fn undo_next(&mut self, buf: &mut Buf) -> (FingerId, Entry) {
        assert!(self.pos > 0);
        self.backward(buf).await;
        self.entry(buf)
    }

    /// Forgets the recorded entries from the cursor on.
    pub fn truncate(&mut self) {
        self.len = self.pos;
    }
}

/// Tree state buffer: the Leftify steps that turn a saved tree into a left path, two per cell.
pub struct Tsb {
    cursor: CursorId,
    tag: u16,
    len: Option<usize>,
}

impl Tsb {
    pub fn new(buf: &mut Buf, cursor: CursorId) -> Tsb {
        let tag = buf.alloc_slots(2, 1);
        Tsb { cursor, tag, len: None }
    }

    pub fn is_saved(&self) -> bool {
        self.len.is_some()
    }

    async fn rewind(&self, buf: &mut Buf) {
        while buf.cell(self.cursor) > 0 {
            buf.prev_cell(self.cursor).await;
        }
    }

    /// Records the current shape. The tree is restored afterwards and `lf` ends at the root.
    pub async fn save(&mut self, buf: &mut Buf, lf: FingerId) {
        self.rewind(buf).await;
        let ctx = buf.ctx().clone();
        ctx.to_root(lf).await;
        let mut s = 0;
        loop {
            let v = ctx.view(lf);
            let bit = if v.has_right {
                ctx.op(lf, UnitOp::MoveRight).await;
                buf.essential().await;
                ctx.op(lf, UnitOp::RotateWithParent).await;
                1
            } else if v.has_left {
                ctx.op(lf, UnitOp::MoveLeft).await;
                0
            } else {
                break;
            };
            let old = if s % 2 == 1 { buf.read(self.cursor, self.tag).unwrap_or(0) & 1 } else { 0 };
            buf.write(self.cursor, self.tag, 2, old | bit << (s % 2));
            if s % 2 == 1 {
                buf.next_cell(self.cursor).await;
            }
            s += 1;
        }
        self.len = Some(s);
        self.unwind(buf, lf, s).await;
    }

    /// Restores the saved shape from any tree. `lf` ends at the root.
    pub async fn load(&mut self, buf: &mut Buf, lf: FingerId) {
        let len = self.len.expect("loading an empty tree state buffer");
        let ctx = buf.ctx().clone();
        ctx.to_root(lf).await;
        loop {
            let v = ctx.view(lf);
            if v.has_right {
                ctx.op(lf, UnitOp::MoveRight).await;
                buf.essential().await;
                ctx.op(lf, UnitOp::RotateWithParent).await;
            } else if v.has_left {
                ctx.op(lf, UnitOp::MoveLeft).await;
            } else {
                break;
            }
        }
        self.unwind(buf, lf, len).await;
    }

    /// Undoes the recorded Leftify steps, with `lf` at the bottom of the left path.
    async fn unwind(&mut self, buf: &mut Buf, lf: FingerId, len: usize) {
        if len == 0 {
            return;
        }
        let ctx = buf.ctx().clone();
        let last = (len - 1) / 2;
        while buf.cell(self.cursor) > last {
            buf.prev_cell(self.cursor).await;
        }
        while buf.cell(self.cursor) < last {
            buf.next_cell(self.cursor).await;
        }
        for s in (0..len).rev() {
            let bits = buf.read(self.cursor, self.tag).expect("tree state cell missing");
            if bits >> (s % 2) & 1 == 1 {
                ctx.op(lf, UnitOp::MoveLeft).await;
                buf.essential().await;
                ctx.op(lf, UnitOp::RotateWithParent).await;
            } else {
                ctx.op(lf, UnitOp::MoveParent).await;
            }
            if s % 2 == 0 && s > 0 {
                buf.prev_cell(self.cursor).await;
            }
        }
    }
}
