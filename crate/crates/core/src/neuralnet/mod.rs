//! A small convolutional classifier engine: layer graph, forward pass, exact
//! gradients, momentum SGD and checkpoints.

mod arch;
mod checkpoint;
mod gradcheck;
mod layers;
pub(crate) mod network;
mod optim;

pub use arch::{ArchSpec, LayerPlan, LayerSpec, Shape};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcheck::{
    analytic_gradient, compare_gradients, grad_check, kink_margin, numeric_gradient, random_check_case, GradCheckCase,
    GRADIENT_FLOOR, MAX_GRADCHECK_PARAMS, MIN_KINK_MARGIN,
};
pub use network::{argmax, build_network, forward, loss_and_grad, set_threads, threads, Network};
pub use optim::{sgd_step, sgd_update, train, EpochStats, LabeledPatch, TrainConfig};
