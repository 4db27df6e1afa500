//! Deep autoencoders for rating prediction.
//!
//! A user is represented by the sparse vector of their ratings over all
//! items. The autoencoder reconstructs a dense vector whose entries at
//! unrated positions are the predictions. Training minimizes a masked MSE
//! over observed ratings and can optionally re-feed the dense output as a
//! fully observed example after every update.

pub mod activation;
pub mod arch;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod experiments;
pub mod init;
pub mod loss;
pub mod model;
pub mod optim;
pub mod real;
pub mod synth;
pub mod train;

pub use activation::Activation;
pub use arch::{parse_architecture, ArchitectureSpec};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointRecord};
pub use data::{parse_ratings, time_split, EvalSet, RatingDataset, RatingRecord, SplitSpec};
pub use error::{Error, Result};
pub use loss::{masked_mse, masked_mse_gradient, rmse_from_mmse, Batch};
pub use model::{Autoencoder, Mode, Parameters};
pub use optim::{Optimizer, SgdMomentum};
pub use real::Real;
pub use train::{evaluate, fit, train_step, EpochMetrics, FitOutcome, TrainConfig};
