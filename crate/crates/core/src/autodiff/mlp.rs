use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::Identity => Ok(x),
        }
    }
}

/// Shape of a feed-forward network: `widths[0]` inputs, `widths.last()`
/// outputs, one affine layer per adjacent pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    /// Hidden-layer activation.
    pub activation: Activation,
    /// Activation after the last layer.
    pub output_activation: Activation,
    /// One flag per affine layer.
    pub bias: Vec<bool>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Self {
        let layers = widths.len().saturating_sub(1);
        MlpSpec {
            widths,
            activation,
            output_activation: Activation::Identity,
            bias: vec![true; layers],
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias.iter_mut().for_each(|b| *b = false);
        self
    }

    pub fn with_output_activation(mut self, act: Activation) -> Self {
        self.output_activation = act;
        self
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Config("an MLP needs at least two widths".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config(format!("MLP widths must be positive: {:?}", self.widths)));
        }
        if self.bias.len() != self.num_layers() {
            return Err(Error::Config(format!(
                "{} bias flags for {} layers",
                self.bias.len(),
                self.num_layers()
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .zip(&self.bias)
            .map(|(w, &b)| w[0] * w[1] + if b { w[1] } else { 0 })
            .sum()
    }

    /// Multiply-adds for one input row, plus one add per biased output.
    pub fn flops_per_row(&self) -> usize {
        self.param_count()
    }

    /// Uniform `±1/√fan_in` initialization for weights and biases.
    pub fn init(&self, rng: &mut impl Rng) -> Result<MlpParams> {
        self.validate()?;
        let layers = self
            .widths
            .windows(2)
            .zip(&self.bias)
            .map(|(w, &b)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = |n: usize| -> Vec<f64> {
                    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
                };
                let weight = Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out))
                    .expect("sized above")
                    .with_grad();
                let bias = b.then(|| Tensor::vector(draw(fan_out)).with_grad());
                Linear { weight, bias }
            })
            .collect();
        Ok(MlpParams { layers })
    }
}

/// One affine layer `y = x·W + b`, with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<P = Tensor> {
    pub weight: P,
    pub bias: Option<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<P = Tensor> {
    pub layers: Vec<Linear<P>>,
}

impl<P> MlpParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> MlpParams<Q> {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    weight: f(&l.weight),
                    bias: l.bias.as_ref().map(&mut *f),
                })
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &P> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::once(&l.weight).chain(l.bias.as_ref()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut P> {
        self.layers
            .iter_mut()
            .flat_map(|l| std::iter::once(&mut l.weight).chain(l.bias.as_mut()))
    }
}

impl MlpParams<Tensor> {
    pub fn bind(&self, g: &mut Graph) -> MlpParams<Var> {
        self.map(&mut |t| g.param(t))
    }

    /// Checks that every tensor matches `spec`.
    pub fn check(&self, spec: &MlpSpec) -> Result<()> {
        spec.validate()?;
        if self.layers.len() != spec.num_layers() {
            return Err(Error::Config(format!(
                "{} parameter layers for a {}-layer spec",
                self.layers.len(),
                spec.num_layers()
            )));
        }
        for (i, (l, (w, &b))) in self
            .layers
            .iter()
            .zip(spec.widths.windows(2).zip(&spec.bias))
            .enumerate()
        {
            if l.weight.shape() != [w[0], w[1]] {
                return Err(Error::Config(format!(
                    "layer {i} weight is {:?}, spec wants {:?}",
                    l.weight.shape(),
                    [w[0], w[1]]
                )));
            }
            match (&l.bias, b) {
                (Some(bias), true) if bias.numel() == w[1] => {}
                (None, false) => {}
                _ => return Err(Error::Config(format!("layer {i} bias does not match the spec"))),
            }
        }
        Ok(())
    }
}

/// Applies the network to a `rows × in` matrix node.
pub fn forward_var(g: &mut Graph, spec: &MlpSpec, params: &MlpParams<Var>, x: Var) -> Result<Var> {
    let last = params.layers.len().saturating_sub(1);
    let mut h = x;
    for (i, layer) in params.layers.iter().enumerate() {
        h = g.matmul(h, layer.weight)?;
        if let Some(b) = layer.bias {
            h = g.add_row(h, b)?;
        }
        let act = if i == last {
            spec.output_activation
        } else {
            spec.activation
        };
        h = act.apply(g, h)?;
    }
    Ok(h)
}

/// Evaluates the network on a single vector (`[in]`) or a batch (`[rows, in]`).
pub fn mlp_forward(spec: &MlpSpec, params: &MlpParams, x: &Tensor) -> Result<Tensor> {
    params.check(spec)?;
    let single = x.rank() == 1;
    let width = *x.shape().last().unwrap_or(&0);
    if width != spec.input_width() || x.rank() > 2 {
        return Err(Error::dim("mlp_forward", x.shape(), &[spec.input_width()]));
    }
    let mut g = Graph::new();
    let input = g.constant(x.reshaped(vec![x.numel() / width, width])?);
    let bound = params.bind(&mut g);
    let out = forward_var(&mut g, spec, &bound, input)?;
    let t = g.tensor(out);
    if single {
        t.reshaped(vec![spec.output_width()])
    } else {
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(w: Vec<f64>, shape: [usize; 2], b: Vec<f64>) -> Linear {
        Linear {
            weight: Tensor::matrix(shape[0], shape[1], w).unwrap(),
            bias: Some(Tensor::vector(b)),
        }
    }

    #[test]
    fn linear_sum() {
        let spec = MlpSpec::new(vec![2, 1], Activation::Identity);
        let params = MlpParams {
            layers: vec![linear(vec![1.0, 1.0], [2, 1], vec![0.0])],
        };
        let y = mlp_forward(&spec, &params, &Tensor::vector(vec![3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn tanh_of_zero() {
        let spec = MlpSpec::new(vec![1, 1], Activation::Tanh).with_output_activation(Activation::Tanh);
        let params = MlpParams {
            layers: vec![linear(vec![0.0], [1, 1], vec![0.0])],
        };
        let y = mlp_forward(&spec, &params, &Tensor::vector(vec![5.0])).unwrap();
        assert_eq!(y.data(), &[0.0]);
    }

    #[test]
    fn param_count_matches_tensors() {
        let spec = MlpSpec {
            widths: vec![3, 5, 2],
            activation: Activation::Relu,
            output_activation: Activation::Identity,
            bias: vec![true, false],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = spec.init(&mut rng).unwrap();
        assert_eq!(spec.param_count(), 3 * 5 + 5 + 5 * 2);
        assert_eq!(p.iter().map(Tensor::numel).sum::<usize>(), spec.param_count());
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let spec = MlpSpec::new(vec![16, 4], Activation::Tanh);
        let a = spec.init(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = spec.init(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flat_map(|t| t.data()).all(|x| x.abs() <= 0.25));
    }

    #[test]
    fn spec_mismatch_is_config_error() {
        let spec = MlpSpec::new(vec![2, 3], Activation::Tanh);
        let other = MlpSpec::new(vec![2, 4], Activation::Tanh)
            .init(&mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let err = mlp_forward(&spec, &other, &Tensor::vector(vec![1.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(MlpSpec::new(vec![4], Activation::Tanh).validate().is_err());
    }
}
