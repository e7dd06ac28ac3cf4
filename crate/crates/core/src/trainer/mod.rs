//! Skip-gram with negative sampling: vocabulary, subsampling, noise
//! distribution, gradient steps and the epoch loop.

mod matrix;
mod sampling;
mod sgns;
mod train;
mod vocab;

pub use matrix::{cosine, dot, norm, EmbeddingMatrix};
pub use sampling::{subsample_keep_probability, NegativeSampler};
pub use sgns::{log_sigmoid, sgns_gradient, sgns_loss, sgns_step, sigmoid, Objective};
pub use train::{fine_tune, init_layers, train_epochs, TrainConfig, TrainOptions, TrainReport};
pub use vocab::{closest_words, Vocabulary};

pub(crate) use train::INIT_STREAM;
