//! Synthetic set-function tasks over randomly embedded integers.

mod dataset;
mod targets;

pub use dataset::{generate_dataset, EmbeddingSpec, EmbeddingTable, SequenceDataset, Split, SplitSizes, TaskData};
pub use targets::{target_maxmin, target_range, target_variance, Task};
