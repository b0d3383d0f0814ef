//! Brute-force evaluations used to cross-check the linear-time combiner.

use super::config::{Pooling, SetTwisterConfig};
use super::model::SetModelParams;
use crate::autodiff::{mlp_forward, Tensor};
use crate::error::{Error, Result};

/// Default cap on the number of ordered tuples an oracle may visit.
pub const DEFAULT_ORACLE_BOUND: u128 = 1_000_000;

fn tuple_count(n: usize, k: usize, bound: u128) -> Result<u128> {
    let terms = (n as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if terms > bound {
        return Err(Error::OracleSize { terms, bound });
    }
    Ok(terms)
}

/// Calls `visit` on every ordered `k`-tuple of indices into `0..n`, with the
/// last position varying fastest.
fn for_each_tuple(n: usize, k: usize, mut visit: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    let mut idx = vec![0usize; k];
    loop {
        visit(&idx)?;
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// `Σ_{i_1..i_k} f(h_{i_1}, …, h_{i_k})` over all `n_h^k` ordered tuples.
pub fn kary_oracle<T, F>(h: &[T], k: usize, bound: u128, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[&T]) -> Vec<f64>,
{
    if h.is_empty() {
        return Err(Error::EmptyInput("kary_oracle"));
    }
    tuple_count(h.len(), k, bound)?;
    let mut total: Option<Vec<f64>> = None;
    let mut args: Vec<&T> = Vec::with_capacity(k);
    for_each_tuple(h.len(), k, |idx| {
        args.clear();
        args.extend(idx.iter().map(|&i| &h[i]));
        let v = f(&args);
        match &mut total {
            None => total = Some(v),
            Some(t) => {
                if t.len() != v.len() {
                    return Err(Error::dim("kary_oracle", &[t.len()], &[v.len()]));
                }
                t.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
            }
        }
        Ok(())
    })?;
    Ok(total.unwrap_or_default())
}

/// The twisted representation expanded over element tuples:
/// `Σ_{i_1..i_k} Σ_idx α_idx ⊙ φ_{u_1}(h_{i_1}) ⊙ … ⊙ φ_{u_k}(h_{i_k})`.
///
/// Each `φ_u(h_i)` is evaluated on its own, so nothing is shared with the
/// pooled path. Costs `O(n_h^k)`; meant for testing.
pub fn naive_expand<R: AsRef<[f64]>>(
    config: &SetTwisterConfig,
    params: &SetModelParams,
    h: &[R],
    bound: u128,
) -> Result<Vec<f64>> {
    if h.is_empty() {
        return Err(Error::EmptyInput("naive_expand"));
    }
    let alpha = params
        .alpha
        .as_ref()
        .ok_or_else(|| Error::Config("naive_expand needs a coefficient table".into()))?;
    let k = alpha.k;
    tuple_count(h.len(), k, bound)?;
    let spec = config.phi_spec();
    let scale = match config.pooling {
        Pooling::Sum => 1.0,
        Pooling::Mean => 1.0 / h.len() as f64,
    };
    // phi_out[u][i] = φ_{u+1}(h_i), scaled for mean pooling.
    let mut phi_out = Vec::with_capacity(params.phi.len());
    for bank in &params.phi {
        let mut per_elem = Vec::with_capacity(h.len());
        for x in h {
            let y = mlp_forward(&spec, bank, &Tensor::vector(x.as_ref().to_vec()))?;
            per_elem.push(y.data().iter().map(|v| v * scale).collect::<Vec<f64>>());
        }
        phi_out.push(per_elem);
    }
    let d = alpha.d_rep;
    let mut total = vec![0.0; d];
    let mut term = vec![0.0; d];
    for_each_tuple(h.len(), k, |elems| {
        for entry in &alpha.entries {
            term.copy_from_slice(entry.value.data());
            for (&u, &i) in entry.index.iter().zip(elems) {
                for (t, v) in term.iter_mut().zip(&phi_out[u - 1][i]) {
                    *t *= v;
                }
            }
            total.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
        }
        Ok(())
    })?;
    Ok(total)
}
