use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, MlpSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    DeepSets,
    SetTwister,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deepsets" | "deep-sets" => Ok(Architecture::DeepSets),
            "set-twister" | "settwister" | "st" => Ok(Architecture::SetTwister),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::DeepSets => "deepsets",
            Architecture::SetTwister => "set-twister",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Sum,
    /// Each pooled bank sum divided by the sequence length.
    Mean,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Pooling::Sum),
            "mean" => Ok(Pooling::Mean),
            other => Err(Error::Config(format!("unknown pooling `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientMode {
    /// One coefficient vector per nondecreasing multi-index `u_1 ≤ … ≤ u_k`.
    Simplex,
    /// One coefficient vector per ordered pair; only for `k = 2`.
    Full,
}

impl std::str::FromStr for CoefficientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplex" => Ok(CoefficientMode::Simplex),
            "full" => Ok(CoefficientMode::Full),
            other => Err(Error::Config(format!("unknown coefficient mode `{other}`"))),
        }
    }
}

/// Output network applied to the pooled representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RhoSpec {
    /// The pooled representation is the output.
    None,
    /// A single affine map.
    Linear { out: usize, bias: bool },
    Mlp {
        hidden: Vec<usize>,
        out: usize,
        activation: Activation,
        bias: bool,
    },
}

impl RhoSpec {
    /// Network shape for a given input width, or `None` without ρ.
    pub fn mlp_spec(&self, input: usize) -> Option<MlpSpec> {
        match self {
            RhoSpec::None => None,
            RhoSpec::Linear { out, bias } => {
                let spec = MlpSpec::new(vec![input, *out], Activation::Identity);
                Some(if *bias { spec } else { spec.without_bias() })
            }
            RhoSpec::Mlp {
                hidden,
                out,
                activation,
                bias,
            } => {
                let mut widths = Vec::with_capacity(hidden.len() + 2);
                widths.push(input);
                widths.extend_from_slice(hidden);
                widths.push(*out);
                let spec = MlpSpec::new(widths, *activation);
                Some(if *bias { spec } else { spec.without_bias() })
            }
        }
    }

    pub fn output_width(&self, input: usize) -> usize {
        match self {
            RhoSpec::None => input,
            RhoSpec::Linear { out, .. } | RhoSpec::Mlp { out, .. } => *out,
        }
    }
}

/// Hyperparameters shared by DeepSets and Set Twister models.
///
/// DeepSets uses `m = k = 1` and ignores the coefficient settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetTwisterConfig {
    pub m: usize,
    pub k: usize,
    pub d_in: usize,
    pub d_rep: usize,
    /// Reference DeepSets width when the model was sized with
    /// `d_rep = d_ds_rep / m`.
    pub d_ds_rep: Option<usize>,
    pub phi_hidden: Vec<usize>,
    pub phi_bias: bool,
    pub activation: Activation,
    pub phi_output_activation: Activation,
    pub pooling: Pooling,
    pub coefficient_mode: CoefficientMode,
    pub rho: RhoSpec,
}

impl SetTwisterConfig {
    pub fn new(m: usize, k: usize, d_in: usize, d_rep: usize) -> Self {
        SetTwisterConfig {
            m,
            k,
            d_in,
            d_rep,
            d_ds_rep: None,
            phi_hidden: Vec::new(),
            phi_bias: true,
            activation: Activation::Tanh,
            phi_output_activation: Activation::Identity,
            pooling: Pooling::Sum,
            coefficient_mode: CoefficientMode::Simplex,
            rho: RhoSpec::None,
        }
    }

    /// DeepSets-shaped config (`m = k = 1`).
    pub fn deepsets(d_in: usize, d_rep: usize) -> Self {
        Self::new(1, 1, d_in, d_rep)
    }

    /// Splits a DeepSets width across `m` banks: `d_rep = d_ds_rep / m`.
    pub fn sized_from_deepsets(m: usize, k: usize, d_in: usize, d_ds_rep: usize) -> Result<Self> {
        if m == 0 || d_ds_rep % m != 0 {
            return Err(Error::Config(format!(
                "M = {m} does not divide the DeepSets width {d_ds_rep}"
            )));
        }
        let mut c = Self::new(m, k, d_in, d_ds_rep / m);
        c.d_ds_rep = Some(d_ds_rep);
        Ok(c)
    }

    pub fn with_phi_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.phi_hidden = hidden;
        self
    }

    pub fn with_rho(mut self, rho: RhoSpec) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_pooling(mut self, pooling: Pooling) -> Self {
        self.pooling = pooling;
        self
    }

    pub fn with_coefficient_mode(mut self, mode: CoefficientMode) -> Self {
        self.coefficient_mode = mode;
        self
    }

    pub fn with_activation(mut self, act: Activation) -> Self {
        self.activation = act;
        self
    }

    pub fn without_phi_bias(mut self) -> Self {
        self.phi_bias = false;
        self
    }

    pub fn phi_spec(&self) -> MlpSpec {
        let mut widths = Vec::with_capacity(self.phi_hidden.len() + 2);
        widths.push(self.d_in);
        widths.extend_from_slice(&self.phi_hidden);
        widths.push(self.d_rep);
        let spec = MlpSpec::new(widths, self.activation).with_output_activation(self.phi_output_activation);
        if self.phi_bias {
            spec
        } else {
            spec.without_bias()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::Config(format!("M and k must be ≥ 1 (M = {}, k = {})", self.m, self.k)));
        }
        if self.k > self.m {
            return Err(Error::Config(format!("k = {} exceeds M = {}", self.k, self.m)));
        }
        if self.d_rep == 0 || self.d_in == 0 {
            return Err(Error::Config("d_in and d_rep must be ≥ 1".into()));
        }
        if self.coefficient_mode == CoefficientMode::Full && self.k != 2 {
            return Err(Error::Config(format!(
                "full coefficient mode needs k = 2, got k = {}",
                self.k
            )));
        }
        if let Some(ds) = self.d_ds_rep {
            if ds % self.m != 0 || ds / self.m != self.d_rep {
                return Err(Error::Config(format!(
                    "d_rep = {} is not d_ds_rep / M = {ds} / {}",
                    self.d_rep, self.m
                )));
            }
        }
        self.phi_spec().validate()?;
        if let Some(rho) = self.rho.mlp_spec(self.d_rep) {
            rho.validate()?;
        }
        Ok(())
    }

    pub fn validate_for(&self, arch: Architecture) -> Result<()> {
        self.validate()?;
        if arch == Architecture::DeepSets && (self.m != 1 || self.k != 1) {
            return Err(Error::Config(format!(
                "DeepSets needs M = k = 1, got M = {}, k = {}",
                self.m, self.k
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizing_rule() {
        let c = SetTwisterConfig::sized_from_deepsets(3, 2, 10, 12).unwrap();
        assert_eq!(c.d_rep, 4);
        c.validate().unwrap();
        assert!(SetTwisterConfig::sized_from_deepsets(5, 2, 10, 12).is_err());
        let mut bad = c.clone();
        bad.d_rep = 5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn k_above_m_is_rejected() {
        assert!(SetTwisterConfig::new(2, 3, 4, 4).validate().is_err());
        assert!(SetTwisterConfig::new(0, 1, 4, 4).validate().is_err());
        assert!(SetTwisterConfig::new(3, 3, 4, 4).validate().is_ok());
    }

    #[test]
    fn full_mode_only_for_pairs() {
        let c = SetTwisterConfig::new(3, 3, 2, 2).with_coefficient_mode(CoefficientMode::Full);
        assert!(c.validate().is_err());
        let c = SetTwisterConfig::new(3, 2, 2, 2).with_coefficient_mode(CoefficientMode::Full);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn deepsets_needs_unit_m_and_k() {
        let c = SetTwisterConfig::new(2, 2, 3, 3);
        assert!(c.validate_for(Architecture::DeepSets).is_err());
        assert!(SetTwisterConfig::deepsets(3, 3)
            .validate_for(Architecture::DeepSets)
            .is_ok());
    }
}
