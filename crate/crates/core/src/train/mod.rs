//! Loss, reverse-mode gradients, Adam and the epoch loop.

mod adam;
mod gradcheck;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use gradcheck::{
    choose_probes, grad_check, probe_gradients, relative_error, GradCheckReport, GradProbe,
    MIN_PROBES,
};
pub use loss::{batch_loss, loss_and_grad, mae, mse, sse};
pub use trainer::{
    norm_from_samples, train, EpochRecord, History, TrainConfig, TrainOutcome, TrainingSet,
};
