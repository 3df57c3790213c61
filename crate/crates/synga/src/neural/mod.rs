//! Minimal dense-network engine: exact gradients, Adam, losses, NAM head.

mod io;
mod nam;
mod net;

pub use io::{read_model, write_model, ModelFile, MODEL_MAGIC, MODEL_VERSION};
pub use nam::{
    nam_score, ranknet_loss, spearman, train_nam, EpochLog, NamExample, NamLoss, NamModel,
    NamTrainConfig, NamTrainReport, SpearmanResult,
};
pub use net::{bce_with_logits, Activation, AdamState, DenseNet, ForwardTrace, LayerSpec, NetSpec};

pub(crate) use nam::ranks;
pub(crate) use net::sigmoid;
