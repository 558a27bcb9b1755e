//! Back-end training: layers with analytic gradients, SGD with momentum,
//! the plateau schedule, augmentation, Gaussian-noise training and
//! distillation.

pub mod augment;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
mod trainer;


pub use augment::{augment, augment_geometric, gnt_draw, gnt_inject, normalize, AugmentPolicy, GntConfig};
pub use layers::{LayerSpec, ParamRole, NORM_EPS};
pub use loss::{cross_entropy_loss, distill_loss, log_softmax, DistillWeights};
pub use model::{Architecture, BackendModel, Grads, ParamInfo, Tape};
pub use optim::{plateau_schedule, sgd_step, PlateauScheduler};
pub use trainer::{
    train, CheckpointMeta, Classifier, DistillConfig, EpochRecord, FrontendCache, Teacher, TeacherTable,
    TrainConfig, TrainOutcome, TrainingLog, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
