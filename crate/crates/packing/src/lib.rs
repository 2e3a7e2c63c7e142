//! Row-major slot packing of real matrices and the rotation kernels built on it.
//!
//! A padded `rows x cols` matrix (both powers of two) sits at slots
//! `r * cols + c` and is tiled periodically across the whole slot vector, so
//! cyclic rotations behave as if the ciphertext held exactly one copy.
//!
//! Kernels are generic over [`Backend`]: [`FheBackend`] runs them on
//! ciphertexts and [`PlainBackend`] replays the same level and scale checks on
//! plain slot vectors, which makes it both a correctness oracle and a cheap
//! operation counter.

mod backend;
mod kernels;
mod matrix;

pub use backend::{Backend, FheBackend, OpCounts, OpTally, PlainBackend, PlainCt, Section};
pub use kernels::{col_sum_rotate, mask_first_column, replicate_first_column, row_sum_rotate};
pub use matrix::{pack_gh_pairs, unpack_gh_pairs, Layout, SlotMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PackError {
    #[error("layout {rows}x{cols} needs {need} slots but only {slots} are available")]
    SlotBudget { rows: usize, cols: usize, need: usize, slots: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Fhe(#[from] ckks::FheError),
}

pub type Result<T> = std::result::Result<T, PackError>;
