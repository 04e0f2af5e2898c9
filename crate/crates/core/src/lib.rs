//! Hamiltonian learning: forward-in-time, optimal-control-based online
//! learning for neural networks.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! numerics; file formats, datasets, and the CLI live in the companion
//! `hamlearn-harness` crate.
//!
//! Layout:
//!
//! - [`tensor`] and [`tape`]: dense `f64` tensors and a reverse-mode AD tape.
//! - [`netspec`]: the state network `f^h`, the output network `f^y`, and the
//!   residual / grouped wrappers around them.
//! - [`hamiltonian`]: the robust Hamiltonian, the four Hamilton equations and
//!   the per-sample learning step.
//! - [`stream`]: timestamped sample streams, token sequences and reverse replay.
//! - [`oracles`]: momentum SGD, BPTT and the optimizer-parameter mapping.
//! - [`recovery`]: configurations under which the Hamiltonian step reproduces
//!   backprop and BPTT.
//! - [`reversible`]: midpoint-rule state integration with activation-free
//!   backward passes.
#![cfg_attr(not(feature = "std"), no_std)]
// Negated comparisons are how NaN is rejected in parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod math;

pub mod hamiltonian;
pub mod netspec;
pub mod oracles;
pub mod recovery;
pub mod reversible;
pub mod stream;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use hamiltonian::{hl_step, Costate, CostatePart, HlConfig, Learner, LossKind, Ordering, Phi, Sign, StepContext};
pub use netspec::{
    Activation, Dense, InitialState, ModelState, NetSpec, OutputNet, RecurrentCell, ResidualMode, Source, StateNet,
};
pub use oracles::{BufferInit, MappedParams, SgdConfig};
pub use recovery::{ModeKind, OmegaReset, RecoveryMode, RunRecord, RunRow};
pub use stream::{Sequence, Stream, StreamItem};
pub use tape::{Gradients, Op, Tape, Var};
pub use tensor::Tensor;
