//! Equal-width binning, weight of evidence and SMOTE oversampling, each
//! with a plaintext reference and a two-party encrypted protocol.

mod bins;
mod smote;
mod wire;
mod woe;

pub use bins::{equal_width_bins, one_hot, BinMatrix, BinSpec};
pub use smote::{
    apply_plan, nearest_minority, smote_fhe, smote_plain, smote_plan, SmoteActive, SmoteConfig, SmoteFheOutput,
    SmoteOutput, SmotePassive, SmotePlan, MASK_RANGE,
};
pub use woe::{woe_fhe, woe_from_counts, woe_plain, WoeFheOutput, WoeTable, SMOOTHING};

#[derive(Debug, thiserror::Error)]
pub enum PrepError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Fhe(#[from] ckks::FheError),
    #[error(transparent)]
    Pack(#[from] packed_matrix::PackError),
    #[error(transparent)]
    Net(#[from] simnet::NetError),
    #[error("encoding: {0}")]
    Encoding(String),
}

pub type Result<T> = std::result::Result<T, PrepError>;
