//! Neural profilers and their shared training loop.

pub mod ae;
pub mod emb;
pub mod training;

pub use ae::{ae_train, draw_dropout_mask, AeBatchProbe, AeConfig, AeModel};
pub use emb::{emb_train, EmbBatchProbe, EmbConfig, EmbModel};
pub use training::{plan_epoch, EarlyStopping, EpochLog, StopDecision, TrainingLog, TrainingSummary};
