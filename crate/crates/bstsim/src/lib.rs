//! Binary search tree machines: a single-finger BST model, a multifinger simulation on
//! top of it, traversable buffers in augmented node data, and a combiner that runs two
//! online BST algorithms so the cost tracks the cheaper one.

pub mod algorithms;
pub mod bst_vm;
pub mod buffers;
pub mod combiner;
pub mod deque;
pub mod mf_vm;
pub mod multifinger;
pub mod proto;
pub mod tendon;
pub mod workload;

pub use bst_vm::{AugPayload, NodeHandle, Side, TreeArena, TreeShape, UnitOp, VmError};
pub use mf_vm::{FingerId, MfMachine, MfOperation, NodeView, RefMachine, Route};
