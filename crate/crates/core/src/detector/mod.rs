//! Neural next-value predictor with a loss-derived alarm threshold, plus a
//! k-nearest-neighbour baseline.

pub mod knn;
pub mod mlp;
pub mod model_io;

pub use knn::{knn_detect, knn_scores, KnnScores};
pub use mlp::{
    accumulate_gradient, detect, forward, loss_and_gradient, sample_losses, threshold, train,
    Hyperparams, MlpParams, TrainedModel, DEFAULT_ALPHA,
};
pub use model_io::{read_model, write_model};
