//! Losses, optimizers, schedules and the training loops.

mod config;
mod metrics;
mod optim;
mod run;
mod schedule;

pub use config::TrainConfig;
pub use metrics::{argmax_rows, class_accuracy, l1_loss, rounded_accuracy, Direction};
pub use optim::{adam_step, sgd_momentum_step, AdamConfig, Optimizer, OptimizerKind};
pub use run::{
    evaluate_sequences, predict_sequences, train_node_model, train_sequence_model, MetricKind, MetricsRecord,
    TrainOutcome,
};
pub use schedule::{EarlyStopping, Plateau, PlateauConfig};
