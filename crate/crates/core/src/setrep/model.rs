use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::coefficients::CoefficientTable;
use super::config::{Architecture, Pooling, SetTwisterConfig};
use crate::autodiff::{mlp_forward_var, CsrMatrix, Graph, MlpParams, MlpSpec, Tensor, Var};
use crate::error::{Error, Result};

/// Noise added around the all-ones coefficient initialization.
pub const ALPHA_INIT_NOISE: f64 = 0.1;

/// Parameters of a DeepSets or Set Twister model.
///
/// DeepSets has a single `phi` bank and no coefficient table.
#[derive(Clone, Debug, PartialEq)]
pub struct SetModelParams<P = Tensor> {
    pub phi: Vec<MlpParams<P>>,
    pub alpha: Option<CoefficientTable<P>>,
    pub rho: Option<MlpParams<P>>,
}

impl<P> SetModelParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> SetModelParams<Q> {
        SetModelParams {
            phi: self.phi.iter().map(|p| p.map(f)).collect(),
            alpha: self.alpha.as_ref().map(|a| a.map(f)),
            rho: self.rho.as_ref().map(|r| r.map(f)),
        }
    }

    /// Every parameter in a fixed order: banks, coefficients, then ρ.
    pub fn iter(&self) -> impl Iterator<Item = &P> {
        self.phi
            .iter()
            .flat_map(MlpParams::iter)
            .chain(self.alpha.iter().flat_map(|a| a.entries.iter().map(|e| &e.value)))
            .chain(self.rho.iter().flat_map(MlpParams::iter))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut P> {
        self.phi
            .iter_mut()
            .flat_map(MlpParams::iter_mut)
            .chain(self.alpha.iter_mut().flat_map(|a| a.entries.iter_mut().map(|e| &mut e.value)))
            .chain(self.rho.iter_mut().flat_map(MlpParams::iter_mut))
    }

    /// Parameter names in [`iter`](Self::iter) order.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mlp_labels = |prefix: &str, p: &MlpParams<P>, out: &mut Vec<String>| {
            for (l, layer) in p.layers.iter().enumerate() {
                out.push(format!("{prefix}.layer{l}.weight"));
                if layer.bias.is_some() {
                    out.push(format!("{prefix}.layer{l}.bias"));
                }
            }
        };
        for (u, p) in self.phi.iter().enumerate() {
            mlp_labels(&format!("phi{}", u + 1), p, &mut out);
        }
        if let Some(a) = &self.alpha {
            for e in &a.entries {
                let idx: Vec<String> = e.index.iter().map(ToString::to_string).collect();
                out.push(format!("alpha[{}]", idx.join(",")));
            }
        }
        if let Some(r) = &self.rho {
            mlp_labels("rho", r, &mut out);
        }
        out
    }
}

impl SetModelParams<Tensor> {
    /// Fresh parameters; `rho_input` is the width ρ receives.
    pub fn init(arch: Architecture, config: &SetTwisterConfig, rho_input: usize, rng: &mut impl Rng) -> Result<Self> {
        config.validate_for(arch)?;
        let phi_spec = config.phi_spec();
        let phi = (0..config.m).map(|_| phi_spec.init(rng)).collect::<Result<Vec<_>>>()?;
        let alpha = match arch {
            Architecture::DeepSets => None,
            Architecture::SetTwister => Some(CoefficientTable::init(
                config.coefficient_mode,
                config.m,
                config.k,
                config.d_rep,
                ALPHA_INIT_NOISE,
                rng,
            )?),
        };
        let rho = config.rho.mlp_spec(rho_input).map(|s| s.init(rng)).transpose()?;
        Ok(SetModelParams { phi, alpha, rho })
    }

    pub fn bind(&self, g: &mut Graph) -> SetModelParams<Var> {
        self.map(&mut |t| g.param(t))
    }

    pub fn scalar_count(&self) -> usize {
        self.iter().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        self.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Pulls the gradients computed by the last `backward` into the tensors.
    pub fn accumulate_grads(&mut self, g: &Graph, bound: &SetModelParams<Var>) -> Result<()> {
        for (t, &v) in self.iter_mut().zip(bound.iter()) {
            g.accumulate_into(v, t)?;
        }
        Ok(())
    }

    pub fn check(&self, arch: Architecture, config: &SetTwisterConfig, rho_input: usize) -> Result<()> {
        config.validate_for(arch)?;
        if self.phi.len() != config.m {
            return Err(Error::Config(format!("{} φ banks for M = {}", self.phi.len(), config.m)));
        }
        let spec = config.phi_spec();
        for p in &self.phi {
            p.check(&spec)?;
        }
        match (arch, &self.alpha) {
            (Architecture::DeepSets, None) => {}
            (Architecture::SetTwister, Some(a)) => {
                if a.mode != config.coefficient_mode || a.m != config.m || a.k != config.k || a.d_rep != config.d_rep {
                    return Err(Error::Config("coefficient table does not match the config".into()));
                }
                a.check()?;
            }
            (Architecture::DeepSets, Some(_)) => {
                return Err(Error::Config("DeepSets takes no coefficient table".into()))
            }
            (Architecture::SetTwister, None) => {
                return Err(Error::Config("Set Twister needs a coefficient table".into()))
            }
        }
        match (config.rho.mlp_spec(rho_input), &self.rho) {
            (None, None) => Ok(()),
            (Some(spec), Some(p)) => p.check(&spec),
            _ => Err(Error::Config("ρ parameters do not match the ρ spec".into())),
        }
    }
}

/// A batch of sequences sharing one matrix of input rows.
///
/// Row `b` of `members` lists, in element order, the input rows that make up
/// sequence `b`; rows may be shared or repeated. Dense inputs use one row per
/// element, while sequences over a finite embedded vocabulary can point every
/// element at its vocabulary row, so `φ` is evaluated once per distinct input.
#[derive(Clone, Debug)]
pub struct SetBatch {
    pub rows: Tensor,
    pub members: Arc<CsrMatrix>,
    pub pooling: Pooling,
}

impl SetBatch {
    pub fn new<G: AsRef<[usize]>>(rows: Tensor, groups: &[G], pooling: Pooling) -> Result<Self> {
        if rows.rank() != 2 {
            return Err(Error::dim("set batch", rows.shape(), &[0, 0]));
        }
        if groups.iter().any(|g| g.as_ref().is_empty()) {
            return Err(Error::EmptyInput("set batch"));
        }
        let members = CsrMatrix::from_groups(rows.rows(), groups, pooling == Pooling::Mean)?;
        Ok(SetBatch {
            rows,
            members: Arc::new(members),
            pooling,
        })
    }

    /// One sequence given as a list of element vectors.
    pub fn single<R: AsRef<[f64]>>(h: &[R], pooling: Pooling) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::EmptyInput("sequence"));
        }
        let rows = Tensor::from_rows(h)?;
        let group: Vec<usize> = (0..h.len()).collect();
        Self::new(rows, &[group], pooling)
    }

    pub fn len(&self) -> usize {
        self.members.num_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Evaluates every bank on `rows` (`R × d_in`), giving `R × d_rep` each.
pub fn phi_banks_var(g: &mut Graph, spec: &MlpSpec, phi: &[MlpParams<Var>], rows: Var) -> Result<Vec<Var>> {
    phi.iter().map(|p| mlp_forward_var(g, spec, p, rows)).collect()
}

/// Pools bank outputs through a membership matrix.
pub fn pool_var(g: &mut Graph, members: &Arc<CsrMatrix>, banks: &[Var]) -> Result<Vec<Var>> {
    banks.iter().map(|&b| g.spmm(Arc::clone(members), b)).collect()
}

/// `Σ_idx α_idx ⊙ pooled[u_1] ⊙ … ⊙ pooled[u_k]` over the table's indices,
/// for `pooled` vectors of shape `B × d_rep`.
pub fn twist_var(g: &mut Graph, alpha: &CoefficientTable<Var>, pooled: &[Var]) -> Result<Var> {
    if pooled.len() != alpha.m {
        return Err(Error::Config(format!(
            "{} pooled banks for a table over M = {}",
            pooled.len(),
            alpha.m
        )));
    }
    let mut total: Option<Var> = None;
    for entry in &alpha.entries {
        if entry.index.len() != alpha.k || entry.index.iter().any(|&u| u == 0 || u > alpha.m) {
            return Err(Error::Config(format!("bad coefficient index {:?}", entry.index)));
        }
        let mut term = g.hadamard_row(pooled[entry.index[0] - 1], entry.value)?;
        for &u in &entry.index[1..] {
            term = g.hadamard(term, pooled[u - 1])?;
        }
        total = Some(match total {
            None => term,
            Some(t) => g.add(t, term)?,
        });
    }
    total.ok_or_else(|| Error::Config("empty coefficient table".into()))
}

/// The pre-ρ set representation (`B × d_rep`).
pub fn represent_var(
    g: &mut Graph,
    arch: Architecture,
    config: &SetTwisterConfig,
    params: &SetModelParams<Var>,
    rows: Var,
    members: &Arc<CsrMatrix>,
) -> Result<Var> {
    let banks = phi_banks_var(g, &config.phi_spec(), &params.phi, rows)?;
    let pooled = pool_var(g, members, &banks)?;
    match arch {
        Architecture::DeepSets => Ok(pooled[0]),
        Architecture::SetTwister => {
            let alpha = params
                .alpha
                .as_ref()
                .ok_or_else(|| Error::Config("Set Twister needs a coefficient table".into()))?;
            twist_var(g, alpha, &pooled)
        }
    }
}

pub fn rho_var(g: &mut Graph, config: &SetTwisterConfig, rho: Option<&MlpParams<Var>>, x: Var) -> Result<Var> {
    let input = g.shape(x)[1];
    match (config.rho.mlp_spec(input), rho) {
        (None, _) => Ok(x),
        (Some(spec), Some(p)) => mlp_forward_var(g, &spec, p, x),
        (Some(_), None) => Err(Error::Config("ρ spec without ρ parameters".into())),
    }
}

/// Fixed map `scale·y + shift` on the model output. Lets a regression head
/// work at unit scale while predictions stay in target units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputAffine {
    pub shift: f64,
    pub scale: f64,
}

impl Default for OutputAffine {
    fn default() -> Self {
        OutputAffine { shift: 0.0, scale: 1.0 }
    }
}

impl OutputAffine {
    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    pub fn apply_var(&self, g: &mut Graph, y: Var) -> Result<Var> {
        if self.is_identity() {
            return Ok(y);
        }
        let width = g.shape(y)[1];
        let scaled = g.scale(y, self.scale)?;
        let shift = g.constant(Tensor::vector(vec![self.shift; width]));
        g.add_row(scaled, shift)
    }
}

/// A model with its architecture, hyperparameters, and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SetModel {
    pub arch: Architecture,
    pub config: SetTwisterConfig,
    pub params: SetModelParams,
    pub output: OutputAffine,
}

impl SetModel {
    pub fn init(arch: Architecture, config: SetTwisterConfig, rng: &mut impl Rng) -> Result<Self> {
        let params = SetModelParams::init(arch, &config, config.d_rep, rng)?;
        Ok(SetModel {
            arch,
            config,
            params,
            output: OutputAffine::default(),
        })
    }

    pub fn check(&self) -> Result<()> {
        self.params.check(self.arch, &self.config, self.config.d_rep)
    }

    pub fn output_width(&self) -> usize {
        self.config.rho.output_width(self.config.d_rep)
    }

    /// Records the forward pass of a batch, giving `B × out`.
    pub fn forward_var(&self, g: &mut Graph, bound: &SetModelParams<Var>, batch: &SetBatch) -> Result<Var> {
        if batch.pooling != self.config.pooling {
            return Err(Error::Config(format!(
                "batch pooled with {:?}, model expects {:?}",
                batch.pooling, self.config.pooling
            )));
        }
        let rows = g.constant(batch.rows.clone());
        let rep = represent_var(g, self.arch, &self.config, bound, rows, &batch.members)?;
        let out = rho_var(g, &self.config, bound.rho.as_ref(), rep)?;
        self.output.apply_var(g, out)
    }

    pub fn predict(&self, batch: &SetBatch) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let out = self.forward_var(&mut g, &bound, batch)?;
        Ok(g.tensor(out))
    }
}

fn check_sequence<R: AsRef<[f64]>>(config: &SetTwisterConfig, h: &[R]) -> Result<()> {
    if h.is_empty() {
        return Err(Error::EmptyInput("sequence"));
    }
    if let Some(bad) = h.iter().find(|x| x.as_ref().len() != config.d_in) {
        return Err(Error::dim("sequence element", &[config.d_in], &[bad.as_ref().len()]));
    }
    Ok(())
}

/// Pooled bank vectors `Σ_i φ_u(h_i)` (divided by `n_h` under mean pooling).
pub fn pool_bank<R: AsRef<[f64]>>(
    config: &SetTwisterConfig,
    params: &SetModelParams,
    h: &[R],
) -> Result<Vec<Vec<f64>>> {
    check_sequence(config, h)?;
    let batch = SetBatch::single(h, config.pooling)?;
    let mut g = Graph::new();
    let bound = params.map(&mut |t| g.constant(t.clone()));
    let rows = g.constant(batch.rows.clone());
    let banks = phi_banks_var(&mut g, &config.phi_spec(), &bound.phi, rows)?;
    let pooled = pool_var(&mut g, &batch.members, &banks)?;
    Ok(pooled.iter().map(|&p| g.value(p).to_vec()).collect())
}

/// Combines pooled bank vectors with a coefficient table of order `k`.
pub fn twist_combine(pooled: &[Vec<f64>], alpha: &CoefficientTable, k: usize) -> Result<Vec<f64>> {
    if alpha.k != k {
        return Err(Error::Config(format!("table has order {}, asked for k = {k}", alpha.k)));
    }
    alpha.check()?;
    if let Some(bad) = pooled.iter().find(|p| p.len() != alpha.d_rep) {
        return Err(Error::dim("twist_combine", &[alpha.d_rep], &[bad.len()]));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = pooled
        .iter()
        .map(|p| g.constant(Tensor::matrix(1, p.len(), p.clone()).expect("row vector")))
        .collect();
    let bound = alpha.map(&mut |t| g.constant(t.clone()));
    let out = twist_var(&mut g, &bound, &vars)?;
    Ok(g.value(out).to_vec())
}

fn forward_single<R: AsRef<[f64]>>(
    arch: Architecture,
    config: &SetTwisterConfig,
    params: &SetModelParams,
    h: &[R],
) -> Result<Vec<f64>> {
    check_sequence(config, h)?;
    params.check(arch, config, config.d_rep)?;
    let batch = SetBatch::single(h, config.pooling)?;
    let mut g = Graph::new();
    let bound = params.map(&mut |t| g.constant(t.clone()));
    let rows = g.constant(batch.rows.clone());
    let rep = represent_var(&mut g, arch, config, &bound, rows, &batch.members)?;
    let out = rho_var(&mut g, config, bound.rho.as_ref(), rep)?;
    Ok(g.value(out).to_vec())
}

/// `ρ_ST(f̄_{M,k}(h))` for one sequence.
pub fn set_twister_forward<R: AsRef<[f64]>>(
    config: &SetTwisterConfig,
    params: &SetModelParams,
    h: &[R],
) -> Result<Vec<f64>> {
    forward_single(Architecture::SetTwister, config, params, h)
}

/// `ρ_DS(Σ_j φ(h_j))` for one sequence.
pub fn deepsets_forward<R: AsRef<[f64]>>(
    config: &SetTwisterConfig,
    params: &SetModelParams,
    h: &[R],
) -> Result<Vec<f64>> {
    forward_single(Architecture::DeepSets, config, params, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, Linear};
    use crate::setrep::CoefficientMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_phi(d: usize) -> MlpParams {
        let mut w = vec![0.0; d * d];
        for i in 0..d {
            w[i * d + i] = 1.0;
        }
        MlpParams {
            layers: vec![Linear {
                weight: Tensor::matrix(d, d, w).unwrap(),
                bias: Some(Tensor::vector(vec![0.0; d])),
            }],
        }
    }

    fn identity_config(d: usize) -> SetTwisterConfig {
        SetTwisterConfig::new(1, 1, d, d).with_activation(Activation::Identity)
    }

    #[test]
    fn identity_bank_sums_elements() {
        let config = identity_config(2);
        let params = SetModelParams {
            phi: vec![identity_phi(2)],
            alpha: None,
            rho: None,
        };
        let h = [vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(pool_bank(&config, &params, &h).unwrap(), vec![vec![4.0, 6.0]]);
        let mean = config.clone().with_pooling(Pooling::Mean);
        assert_eq!(pool_bank(&mean, &params, &h).unwrap(), vec![vec![2.0, 3.0]]);
    }

    #[test]
    fn empty_sequence_rejected() {
        let config = identity_config(2);
        let params = SetModelParams {
            phi: vec![identity_phi(2)],
            alpha: None,
            rho: None,
        };
        let h: [Vec<f64>; 0] = [];
        assert!(matches!(pool_bank(&config, &params, &h), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn single_term_unit_coefficient() {
        let alpha = CoefficientTable::ones(CoefficientMode::Simplex, 1, 1, 2).unwrap();
        assert_eq!(twist_combine(&[vec![4.0, 6.0]], &alpha, 1).unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn three_term_simplex_sum() {
        let alpha = CoefficientTable::ones(CoefficientMode::Simplex, 2, 2, 1).unwrap();
        let out = twist_combine(&[vec![2.0], vec![3.0]], &alpha, 2).unwrap();
        assert_eq!(out, vec![19.0]);
    }

    #[test]
    fn twist_rejects_mismatched_order() {
        let alpha = CoefficientTable::ones(CoefficientMode::Simplex, 2, 2, 1).unwrap();
        assert!(matches!(
            twist_combine(&[vec![2.0], vec![3.0]], &alpha, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn no_rho_identity_model_sums() {
        let config = identity_config(2);
        let params = SetModelParams {
            phi: vec![identity_phi(2)],
            alpha: Some(CoefficientTable::ones(CoefficientMode::Simplex, 1, 1, 2).unwrap()),
            rho: None,
        };
        let h = [vec![1.0, -2.0], vec![0.5, 4.0], vec![3.0, 1.0]];
        assert_eq!(set_twister_forward(&config, &params, &h).unwrap(), vec![4.5, 3.0]);
    }

    #[test]
    fn deepsets_identity_sum() {
        let config = identity_config(1).with_rho(crate::setrep::RhoSpec::Linear { out: 1, bias: true });
        let params = SetModelParams {
            phi: vec![identity_phi(1)],
            alpha: None,
            rho: Some(identity_phi(1)),
        };
        let h = [vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(deepsets_forward(&config, &params, &h).unwrap(), vec![6.0]);
    }

    #[test]
    fn labels_follow_iteration_order() {
        let config = SetTwisterConfig::new(2, 2, 3, 2)
            .with_phi_hidden(vec![4])
            .with_rho(crate::setrep::RhoSpec::Linear { out: 1, bias: false });
        let m = SetModel::init(Architecture::SetTwister, config, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let labels = m.params.labels();
        assert_eq!(labels.len(), m.params.iter().count());
        assert_eq!(labels[0], "phi1.layer0.weight");
        assert!(labels.contains(&"alpha[1,2]".to_string()));
        assert_eq!(labels.last().unwrap(), "rho.layer0.weight");
        m.check().unwrap();
    }

    #[test]
    fn alpha_init_is_ones_plus_small_noise() {
        let config = SetTwisterConfig::new(3, 2, 2, 5);
        let m = SetModel::init(Architecture::SetTwister, config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for e in &m.params.alpha.unwrap().entries {
            assert!(e.value.data().iter().all(|x| (x - 1.0).abs() <= ALPHA_INIT_NOISE));
        }
    }
}
