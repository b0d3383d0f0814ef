use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::store::Graph;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::tasks::Split;

/// Planted-partition graph parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGraphConfig {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub feature_dim: usize,
    /// Norm of each class-mean feature vector.
    pub signal_strength: f64,
    pub seed: u64,
}

impl Default for SyntheticGraphConfig {
    fn default() -> Self {
        SyntheticGraphConfig {
            num_nodes: 1000,
            num_classes: 4,
            intra_p: 0.05,
            inter_p: 0.005,
            feature_dim: 16,
            signal_strength: 1.5,
            seed: 0,
        }
    }
}

impl SyntheticGraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < 2 || self.num_classes == 0 || self.num_classes > self.num_nodes || self.feature_dim == 0 {
            return Err(Error::Config(format!(
                "degenerate graph: {} nodes, {} classes, {} features",
                self.num_nodes, self.num_classes, self.feature_dim
            )));
        }
        if !(0.0 <= self.inter_p && self.inter_p < self.intra_p && self.intra_p <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 ≤ inter_p < intra_p ≤ 1, got inter {} intra {}",
                self.inter_p, self.intra_p
            )));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return Err(Error::Config("signal_strength must be finite and ≥ 0".into()));
        }
        Ok(())
    }

    /// Expected degree when classes are balanced:
    /// `n·(p_intra/C + p_inter·(C−1)/C)`, ignoring the missing self-pair.
    pub fn expected_degree(&self) -> f64 {
        let n = self.num_nodes as f64;
        let c = self.num_classes as f64;
        n * (self.intra_p / c + self.inter_p * (c - 1.0) / c)
    }
}

/// Draws a planted-partition graph.
///
/// Classes are balanced and randomly assigned. Each node's features are its
/// class mean (a random direction scaled to `signal_strength`) plus standard
/// Gaussian noise. Within each class, 60% of nodes go to train, 20% to
/// validation and the rest to test.
pub fn generate_synthetic_graph(cfg: &SyntheticGraphConfig) -> Result<Graph> {
    cfg.validate()?;
    let (n, c, d) = (cfg.num_nodes, cfg.num_classes, cfg.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "graph.labels"));
    let mut labels: Vec<usize> = (0..n).map(|v| v % c).collect();
    labels.shuffle(&mut rng);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "graph.edges"));
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { cfg.intra_p } else { cfg.inter_p };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "graph.features"));
    let means: Vec<Vec<f64>> = (0..c)
        .map(|_| {
            let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            dir.iter().map(|x| x / norm * cfg.signal_strength).collect()
        })
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for &l in &labels {
        for &m in &means[l] {
            data.push(m + rng.sample::<f64, _>(StandardNormal));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "graph.split"));
    let mut split = vec![None; n];
    for class in 0..c {
        let mut members: Vec<usize> = (0..n).filter(|&v| labels[v] == class).collect();
        members.shuffle(&mut rng);
        let n_train = members.len() * 3 / 5;
        let n_val = members.len() / 5;
        for (i, &v) in members.iter().enumerate() {
            split[v] = Some(if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            });
        }
    }
    let mut g = Graph::new(n, &edges, Tensor::matrix(n, d, data)?, labels, split)?;
    g.num_classes = c;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cliques_without_cross_edges() {
        let cfg = SyntheticGraphConfig {
            num_nodes: 20,
            num_classes: 2,
            intra_p: 1.0,
            inter_p: 0.0,
            ..Default::default()
        };
        let g = generate_synthetic_graph(&cfg).unwrap();
        for (u, v) in g.edges() {
            assert_eq!(g.labels[u], g.labels[v]);
        }
        assert_eq!(g.num_directed_edges(), 2 * 2 * (10 * 9 / 2));
    }

    #[test]
    fn stratified_split_proportions() {
        let g = generate_synthetic_graph(&SyntheticGraphConfig::default()).unwrap();
        assert_eq!(g.nodes_in(Split::Train).len(), 600);
        assert_eq!(g.nodes_in(Split::Validation).len(), 200);
        assert_eq!(g.nodes_in(Split::Test).len(), 200);
        g.check().unwrap();
    }

    #[test]
    fn rejects_inverted_probabilities() {
        let cfg = SyntheticGraphConfig {
            intra_p: 0.01,
            inter_p: 0.1,
            ..Default::default()
        };
        assert!(generate_synthetic_graph(&cfg).is_err());
    }

    #[test]
    fn seeded() {
        let cfg = SyntheticGraphConfig {
            num_nodes: 50,
            ..Default::default()
        };
        assert_eq!(generate_synthetic_graph(&cfg).unwrap(), generate_synthetic_graph(&cfg).unwrap());
    }
}
