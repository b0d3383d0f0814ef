use std::sync::Arc;

use rand::Rng;

use super::store::Graph;
use crate::autodiff::{mlp_forward, CsrMatrix, Graph as Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::setrep::{
    phi_banks_var, pool_bank, pool_var, rho_var, twist_combine, twist_var, Architecture, Pooling, SetModelParams,
    SetTwisterConfig,
};

/// Width of `ρ`'s input: `M` self-bank embeddings plus the neighborhood
/// representation. DeepSets (`M = 1`) gets `2·d_rep`.
pub fn node_rho_input(config: &SetTwisterConfig) -> usize {
    (config.m + 1) * config.d_rep
}

/// Row `v` of bank `u`'s result is `Σ_{w ∈ N(v)} bank_outputs[u][w]`, or the
/// mean under mean pooling. Isolated nodes get zero rows.
pub fn masked_aggregate(graph: &Graph, bank_outputs: &[Tensor], pooling: Pooling) -> Result<Vec<Tensor>> {
    let adj = graph.adjacency(pooling == Pooling::Mean);
    bank_outputs
        .iter()
        .map(|b| {
            if b.rank() != 2 || b.rows() != graph.num_nodes() {
                return Err(Error::dim("masked_aggregate", b.shape(), &[graph.num_nodes(), 0]));
            }
            Tensor::matrix(b.rows(), b.cols(), adj.mul_dense(b.data(), b.cols()))
        })
        .collect()
}

/// Single-hop node classifier:
/// `ρ(φ_1(X_v), …, φ_M(X_v), f̄(h(v)))` with `f̄` the Set Twister combiner,
/// or `ρ(φ(X_v), Σ_{u∈N(v)} φ(X_u))` for DeepSets.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeModel {
    pub arch: Architecture,
    pub config: SetTwisterConfig,
    pub params: SetModelParams,
}

impl NodeModel {
    pub fn init(arch: Architecture, config: SetTwisterConfig, rng: &mut impl Rng) -> Result<Self> {
        let params = SetModelParams::init(arch, &config, node_rho_input(&config), rng)?;
        Ok(NodeModel { arch, config, params })
    }

    pub fn rho_input(&self) -> usize {
        node_rho_input(&self.config)
    }

    pub fn num_outputs(&self) -> usize {
        self.config.rho.output_width(self.rho_input())
    }

    pub fn check(&self) -> Result<()> {
        self.params.check(self.arch, &self.config, self.rho_input())
    }

    fn check_graph(&self, graph: &Graph) -> Result<()> {
        if graph.feature_dim() != self.config.d_in {
            return Err(Error::dim("node features", &[graph.feature_dim()], &[self.config.d_in]));
        }
        Ok(())
    }

    /// Records the batched forward pass over every node, giving
    /// `num_nodes × outputs`. `adjacency` must come from
    /// `graph.adjacency(pooling == Mean)`.
    pub fn forward_var(
        &self,
        g: &mut Tape,
        bound: &SetModelParams<Var>,
        graph: &Graph,
        adjacency: &Arc<CsrMatrix>,
    ) -> Result<Var> {
        self.check_graph(graph)?;
        let x = g.constant(graph.features.clone());
        let banks = phi_banks_var(g, &self.config.phi_spec(), &bound.phi, x)?;
        let pooled = pool_var(g, adjacency, &banks)?;
        let neigh = match self.arch {
            Architecture::DeepSets => pooled[0],
            Architecture::SetTwister => {
                let alpha = bound
                    .alpha
                    .as_ref()
                    .ok_or_else(|| Error::Config("Set Twister needs a coefficient table".into()))?;
                twist_var(g, alpha, &pooled)?
            }
        };
        let mut parts = banks;
        parts.push(neigh);
        let joined = g.concat(&parts, 1)?;
        rho_var(g, &self.config, bound.rho.as_ref(), joined)
    }

    /// Class scores for every node via masked aggregation.
    pub fn predict_all(&self, graph: &Graph) -> Result<Tensor> {
        let adj = Arc::new(graph.adjacency(self.config.pooling == Pooling::Mean));
        let mut g = Tape::new();
        let bound = self.params.map(&mut |t| g.constant(t.clone()));
        let out = self.forward_var(&mut g, &bound, graph, &adj)?;
        Ok(g.tensor(out))
    }

    /// Class scores for node `v`, evaluated on its own neighborhood sequence.
    /// Isolated nodes use a zero neighborhood term (and are logged).
    pub fn node_rep(&self, graph: &Graph, v: usize) -> Result<Vec<f64>> {
        self.check()?;
        self.check_graph(graph)?;
        let h = graph.neighborhood_sequence(v)?;
        let spec = self.config.phi_spec();
        let x_v = Tensor::vector(graph.features.row(v).to_vec());
        let mut input = Vec::with_capacity(self.rho_input());
        for bank in &self.params.phi {
            input.extend_from_slice(mlp_forward(&spec, bank, &x_v)?.data());
        }
        if h.is_empty() {
            input.extend(std::iter::repeat_n(0.0, self.config.d_rep));
        } else {
            let pooled = pool_bank(&self.config, &self.params, &h)?;
            match self.arch {
                Architecture::DeepSets => input.extend_from_slice(&pooled[0]),
                Architecture::SetTwister => {
                    let alpha = self
                        .params
                        .alpha
                        .as_ref()
                        .ok_or_else(|| Error::Config("Set Twister needs a coefficient table".into()))?;
                    input.extend(twist_combine(&pooled, alpha, self.config.k)?);
                }
            }
        }
        match (self.config.rho.mlp_spec(self.rho_input()), &self.params.rho) {
            (None, _) => Ok(input),
            (Some(spec), Some(rho)) => Ok(mlp_forward(&spec, rho, &Tensor::vector(input))?.into_data()),
            (Some(_), None) => Err(Error::Config("ρ spec without ρ parameters".into())),
        }
    }
}

/// DeepSets node representation for `v`.
pub fn node_rep_deepsets(graph: &Graph, config: &SetTwisterConfig, params: &SetModelParams, v: usize) -> Result<Vec<f64>> {
    NodeModel {
        arch: Architecture::DeepSets,
        config: config.clone(),
        params: params.clone(),
    }
    .node_rep(graph, v)
}

/// Set Twister node representation for `v`.
pub fn node_rep_set_twister(
    graph: &Graph,
    config: &SetTwisterConfig,
    params: &SetModelParams,
    v: usize,
) -> Result<Vec<f64>> {
    NodeModel {
        arch: Architecture::SetTwister,
        config: config.clone(),
        params: params.clone(),
    }
    .node_rep(graph, v)
}
