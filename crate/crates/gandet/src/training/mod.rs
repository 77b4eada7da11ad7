//! Two-phase training: contrastive pretraining over augmented view pairs,
//! then supervised fine-tuning of the whole network.

mod loss;
mod optim;
mod trainer;

pub use loss::{bce_loss, nt_xent_loss, partner};
pub use optim::{Optimizer, PlateauConfig, PlateauState};
pub use trainer::{finetune, pretrain, EpochStats, FinetuneConfig, PretrainConfig, TrainReport};
