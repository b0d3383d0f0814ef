//! Closed-form parameter and operation counts.
//!
//! Operation convention, per forward pass of one sequence of length `n_h`:
//! - an affine layer costs `in·out` multiply-adds per row, plus `out` adds
//!   when it has a bias; activations are free;
//! - pooling costs `(n_h − 1)·d_rep` adds per bank, plus `d_rep` divisions
//!   per bank under mean pooling;
//! - each coefficient term `α ⊙ p_{u_1} ⊙ … ⊙ p_{u_k}` costs `k·d_rep`
//!   multiplies and summing `T` terms costs `(T − 1)·d_rep` adds.
//!
//! DeepSets has no coefficient stage, so its counts equal those of an
//! `M = k = 1` Set Twister minus the single `α` vector.

use serde::Serialize;

use super::coefficients::entry_count;
use super::config::{Architecture, Pooling, SetTwisterConfig};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub phi: u128,
    pub alpha: u128,
    pub rho: u128,
    pub without_rho: u128,
    pub with_rho: u128,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FlopCount {
    pub phi: u128,
    pub pool: u128,
    pub twist: u128,
    pub rho: u128,
    pub without_rho: u128,
    pub with_rho: u128,
}

fn alpha_terms(arch: Architecture, config: &SetTwisterConfig) -> u128 {
    match arch {
        Architecture::DeepSets => 0,
        Architecture::SetTwister => entry_count(config.coefficient_mode, config.m, config.k),
    }
}

/// Trainable scalars of a sequence model whose ρ reads `rho_input` values.
pub fn param_count_with_rho_input(arch: Architecture, config: &SetTwisterConfig, rho_input: usize) -> Result<ParamCount> {
    config.validate_for(arch)?;
    let phi = config.m as u128 * config.phi_spec().param_count() as u128;
    let alpha = alpha_terms(arch, config) * config.d_rep as u128;
    let rho = config.rho.mlp_spec(rho_input).map_or(0, |s| s.param_count() as u128);
    Ok(ParamCount {
        phi,
        alpha,
        rho,
        without_rho: phi + alpha,
        with_rho: phi + alpha + rho,
    })
}

/// Trainable scalars of a sequence model (ρ reads the `d_rep` representation).
pub fn param_count(arch: Architecture, config: &SetTwisterConfig) -> Result<ParamCount> {
    param_count_with_rho_input(arch, config, config.d_rep)
}

/// Operations of one forward pass over a sequence of length `n_h`.
pub fn flop_count(arch: Architecture, config: &SetTwisterConfig, n_h: usize) -> Result<FlopCount> {
    config.validate_for(arch)?;
    let n_h = n_h.max(1) as u128;
    let (m, k, d) = (config.m as u128, config.k as u128, config.d_rep as u128);
    let phi = m * n_h * config.phi_spec().flops_per_row() as u128;
    let mut pool = m * (n_h - 1) * d;
    if config.pooling == Pooling::Mean {
        pool += m * d;
    }
    let terms = alpha_terms(arch, config);
    let twist = if terms == 0 { 0 } else { terms * k * d + (terms - 1) * d };
    let rho = config
        .rho
        .mlp_spec(config.d_rep)
        .map_or(0, |s| s.flops_per_row() as u128);
    let without_rho = phi + pool + twist;
    Ok(FlopCount {
        phi,
        pool,
        twist,
        rho,
        without_rho,
        with_rho: without_rho + rho,
    })
}
