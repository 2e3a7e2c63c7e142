//! Encrypted logistic regression: two packed gradient pipelines, an operation
//! counter, and horizontal/vertical federated training and evaluation.
//!
//! Labels are `-1/+1` throughout. Feature matrices passed in exclude the bias
//! column; it is prepended as feature 0 where needed.

mod config;
mod hfl;
mod model;
mod plain;
mod sigmoid;
mod step;
mod vfl;
mod wire;

pub use config::{LrConfig, Schedule};
pub use hfl::{hfl_evaluate, hfl_train, ClientData, HflOutput};
pub use model::{LrModel, Standardizer};
pub use plain::{
    accuracy, batch_indices, shadow_hfl, shadow_vfl, signed_labels, surrogate_gradient, surrogate_loss, train_plain,
    with_bias,
};
pub use sigmoid::{fit_sigmoid_poly, SigmoidPoly};
pub use step::{
    count_ops, data_scale, grad_step_baseline, grad_step_improved, plain_step, signed_rows, table_formula, BatchShape, OpReport,
    Procedure, CONST_BITS,
};
pub use vfl::{vfl_evaluate, vfl_train, VflActive, TIE_BAND, VflEval, VflOutput, VflPassive};

#[derive(Debug, thiserror::Error)]
pub enum LrError {
    #[error("invalid configuration: {0}")]
    Config(String),
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
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LrError>;
