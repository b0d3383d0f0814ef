//! DeepSets and Set Twister set representations.
//!
//! The efficient path evaluates every `φ` bank once per input row, pools the
//! bank outputs with a sparse membership matrix, and multiplies pooled
//! vectors together per coefficient index. The `oracle` functions evaluate
//! the same quantities by brute force over element tuples.

mod checkpoint;
mod coefficients;
mod config;
mod counting;
mod model;
mod oracle;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointMeta};
pub use coefficients::{
    binomial, entry_count, full_indices, simplex_full_merge, simplex_indices, CoefficientEntry, CoefficientTable,
};
pub use config::{Architecture, CoefficientMode, Pooling, RhoSpec, SetTwisterConfig};
pub use counting::{flop_count, param_count, param_count_with_rho_input, FlopCount, ParamCount};
pub use model::{
    deepsets_forward, phi_banks_var, pool_bank, pool_var, represent_var, rho_var, set_twister_forward, twist_combine,
    twist_var, OutputAffine, SetBatch, SetModel, SetModelParams, ALPHA_INIT_NOISE,
};
pub use oracle::{kary_oracle, naive_expand, DEFAULT_ORACLE_BOUND};
