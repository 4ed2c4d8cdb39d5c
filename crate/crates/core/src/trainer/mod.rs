//! Training loop, evaluation, checkpoints and reports.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod model;
pub mod report;
pub mod step;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use config::{lr_at, TrainConfig};
pub use eval::{evaluate, psnr, ssim, EvalReport};
pub use model::Model;
pub use report::{kernel_motion_report, KernelReport, MetricsLog, MetricsRecord};
pub use step::{resolve_mgs, StepOutput, Trainer};
