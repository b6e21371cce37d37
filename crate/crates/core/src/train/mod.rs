//! Fitting the mapping and atlas fields to a view set.

pub mod adamw;
mod config;
mod fit;
pub mod gradcheck;
pub mod loss;

pub use adamw::AdamW;
pub use config::TrainConfig;
pub use gradcheck::{gradient_check, GradCheck, Probe};
pub use fit::{fit, sample_batch, write_loss_csv, FitResult, Trainer};
pub use loss::{evaluate, Batch, FlowPixel, LossReport, LossWeights, Pixel, Term};
