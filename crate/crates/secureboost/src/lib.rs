//! Vertically federated gradient-boosted trees over encrypted gradients.
//!
//! The active party holds labels, computes per-sample gradient pairs, and
//! sends them encrypted to passive parties, which return encrypted bucket
//! histograms for each node. Split thresholds never leave their owner: the
//! shared model only names `(owner, record id)` per internal node.

mod gh;
mod histogram;
mod infer;
mod model;
mod plain;
mod split;
mod train;
mod wire;

pub use gh::{compute_gh, sigmoid, GhPair};
pub use histogram::{aggregate_encrypted_gh, sibling_subtract_encrypted, HistGroup, HistLayout, MASK_BITS};
pub use infer::{check_chain, classic_infer, node_list, psi_infer, InferOutput};
pub use model::{
    predict_centralized, predict_proba, FedTree, FedTreeModel, FedTreeNode, LookupTable, NodeKind, Record, Shards,
    MODEL_VERSION,
};
pub use plain::train_plain;
pub use split::{
    best_split, leaf_weight, plain_histogram, quantile_splits, rank_splits, sibling_subtract, split_gain, Buckets,
    HistogramPair, SplitCandidate, SplitConfig,
};
pub use train::{train_ensemble, ActiveData, TrainOutput};
pub use wire::{from_bitmap, to_bitmap};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SbError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Fhe(#[from] ckks::FheError),
    #[error(transparent)]
    Pack(#[from] packed_matrix::PackError),
    #[error(transparent)]
    Net(#[from] simnet::NetError),
    #[error(transparent)]
    Psi(#[from] psi::PsiError),
}

pub type Result<T> = std::result::Result<T, SbError>;
