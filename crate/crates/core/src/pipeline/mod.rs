//! Coherence training (two fresh frames per step) and online inference
//! (composite features carried from frame to frame).

mod infer;
mod optim;
mod train;
mod validate;

pub use infer::{
    stylize_first_frame, stylize_next_frame, stylize_next_frame_detailed, stylize_video_baseline,
    stylize_video_coherent, CoherenceState, FrameOutput, Oracle,
};
pub use optim::{Adam, AdamConfig, StepDecay};
pub use train::{evaluate_losses, train, train_step, LossReport, TrainConfig, Trainer, TrainingPair};
pub use validate::{validate, ValidationReport};
