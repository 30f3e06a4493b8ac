//! The trainable answer head and everything needed to fit it.

mod checkpoint;
mod loss;
mod model;
mod optim;
mod train;

pub use checkpoint::{decode_params, encode_params, load_model, save_model, sidecar_path};
pub use loss::{focal_loss, softmax, FocalLoss, FocalParams};
pub use model::{
    backward, backward_into, forward, init_params, xavier_bound, ForwardCache, Gradients,
    ModelDims, ModelInputs, ModelParams, Prediction, NUM_CLASSES, TENSOR_NAMES,
};
pub use optim::{cosine_anneal, AdamState};
pub use train::{
    predict, predict_features, train, train_on_features, AlphaMode, EpochStats, FeaturePipeline,
    SampleFeatures, TrainConfig, TrainHistory,
};
