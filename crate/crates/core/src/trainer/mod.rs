//! Desk-scale training demonstration: a small MLP on synthetic Gaussian
//! blobs, trained with cross-entropy or focal loss plus the AUCOC loss.

pub mod data;
pub mod mlp;
pub mod objective;
pub mod permutation;
pub mod train;

pub use data::{generate_blobs, Dataset, Splits, SyntheticSpec};
pub use mlp::Mlp;
pub use objective::{ce_loss_and_grad, fl_loss_and_grad, PrimaryLoss};
pub use permutation::permutation_test;
pub use train::{
    batch_objective, compare, evaluate, predict, run_seed, train, Comparison, EpochRecord, TrainConfig, TrainOutcome,
};
