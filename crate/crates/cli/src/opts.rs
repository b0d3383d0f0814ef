//! Training options: command-line flags layered over a TOML file, resolved
//! into one effective configuration that is echoed and hashed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use set_twister::autodiff::Activation;
use set_twister::setrep::{Architecture, CoefficientMode, Pooling, RhoSpec, SetTwisterConfig};
use set_twister::train::{OptimizerKind, PlateauConfig, TrainConfig};
use sha2::{Digest, Sha256};

/// Every field is optional so a flag can override the file and the file can
/// override the defaults.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainOpts {
    /// Directory written by `gen` (sequence task or graph).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `deepsets` or `set-twister`.
    #[arg(long)]
    pub model: Option<String>,
    /// Number of φ banks.
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<usize>,
    /// Order of the coefficient products.
    #[arg(long)]
    pub k: Option<usize>,
    /// Width of each bank's representation.
    #[arg(long)]
    pub d_rep: Option<usize>,
    /// DeepSets reference width; sets `d-rep` to this divided by `M`.
    #[arg(long)]
    pub d_ds_rep: Option<usize>,
    /// `sum` or `mean`.
    #[arg(long)]
    pub pooling: Option<String>,
    /// `simplex` or `full`.
    #[arg(long)]
    pub coeff_mode: Option<String>,
    /// Hidden widths of φ, comma separated (`-` for none).
    #[arg(long)]
    pub phi_hidden: Option<String>,
    /// `tanh`, `relu` or `identity`.
    #[arg(long)]
    pub activation: Option<String>,
    /// `none`, `linear` or `mlp:<hidden widths>`.
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `adam` or `sgd-momentum`.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Plateau scheduler patience in epochs (0 disables it).
    #[arg(long)]
    pub scheduler_patience: Option<usize>,
    #[arg(long)]
    pub scheduler_factor: Option<f64>,
    /// Early stopping patience in epochs (0 disables it).
    #[arg(long)]
    pub early_stopping: Option<usize>,
    /// Train regression outputs at unit scale.
    #[arg(long)]
    pub standardize: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Free-form label copied into the summary for side-by-side reports.
    #[arg(long)]
    pub tag: Option<String>,
}

impl TrainOpts {
    /// Reads a TOML key-value file using the same keys as the long flags.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: TrainOpts) -> Result<Self> {
        let top = serde_json::to_value(self)?;
        let mut merged = serde_json::to_value(base)?;
        let (Some(top), Some(dst)) = (top.as_object(), merged.as_object_mut()) else {
            unreachable!("options serialize to maps");
        };
        for (k, v) in top {
            if !v.is_null() {
                dst.insert(k.clone(), v.clone());
            }
        }
        Ok(serde_json::from_value(merged)?)
    }
}

/// What a data directory holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Sequence,
    Graph,
}

pub fn data_kind(dir: &Path) -> Result<DataKind> {
    if dir.join("embedding.json").is_file() {
        Ok(DataKind::Sequence)
    } else if dir.join("edges.txt").is_file() {
        Ok(DataKind::Graph)
    } else if !dir.exists() {
        bail!("data directory {} does not exist", dir.display())
    } else {
        bail!(
            "{} holds neither a sequence dataset (embedding.json) nor a graph (edges.txt)",
            dir.display()
        )
    }
}

/// The effective configuration of a training run, with every default
/// filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Resolved {
    pub data: PathBuf,
    pub kind: DataKind,
    pub model: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub k: usize,
    pub d_rep: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_ds_rep: Option<usize>,
    pub pooling: String,
    pub coeff_mode: String,
    pub phi_hidden: String,
    pub activation: String,
    pub rho: String,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: String,
    pub momentum: f64,
    pub weight_decay: f64,
    pub scheduler_patience: usize,
    pub scheduler_factor: f64,
    pub early_stopping: usize,
    pub standardize: bool,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

pub fn parse_widths(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if s.is_empty() || s == "-" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|w| w.trim().parse::<usize>().with_context(|| format!("bad width `{w}` in `{s}`")))
        .collect()
}

pub fn parse_rho(s: &str, out: usize, activation: Activation) -> Result<RhoSpec> {
    match s.trim() {
        "none" => Ok(RhoSpec::None),
        "linear" => Ok(RhoSpec::Linear { out, bias: true }),
        other => match other.strip_prefix("mlp:") {
            Some(widths) => Ok(RhoSpec::Mlp {
                hidden: parse_widths(widths)?,
                out,
                activation,
                bias: true,
            }),
            None => bail!("rho must be `none`, `linear` or `mlp:<widths>`, got `{other}`"),
        },
    }
}

impl Resolved {
    pub fn new(opts: TrainOpts) -> Result<Self> {
        let data = opts.data.context("no dataset given (use --data or `data` in the config file)")?;
        let kind = data_kind(&data)?;
        let graph = kind == DataKind::Graph;
        let model = opts.model.unwrap_or_else(|| "set-twister".into());
        let arch: Architecture = model.parse()?;
        let (m, k) = match arch {
            Architecture::DeepSets => {
                if opts.m.is_some_and(|m| m != 1) || opts.k.is_some_and(|k| k != 1) {
                    bail!("DeepSets has M = k = 1");
                }
                (1, 1)
            }
            Architecture::SetTwister => (opts.m.unwrap_or(2), opts.k.unwrap_or(2)),
        };
        let d_rep = match (opts.d_ds_rep, opts.d_rep) {
            (Some(ds), None) => {
                if m == 0 || ds % m != 0 {
                    bail!("M = {m} does not divide d-ds-rep = {ds}");
                }
                ds / m
            }
            (Some(_), Some(_)) => bail!("give d-rep or d-ds-rep, not both"),
            (None, d) => d.unwrap_or(16),
        };
        let sched_patience = opts.scheduler_patience.unwrap_or(0);
        Ok(Resolved {
            data,
            kind,
            model: arch.to_string(),
            m,
            k,
            d_rep,
            d_ds_rep: opts.d_ds_rep,
            pooling: opts.pooling.unwrap_or_else(|| "sum".into()),
            coeff_mode: opts.coeff_mode.unwrap_or_else(|| "simplex".into()),
            phi_hidden: opts.phi_hidden.unwrap_or_else(|| "64".into()),
            activation: opts.activation.unwrap_or_else(|| "tanh".into()),
            rho: opts.rho.unwrap_or_else(|| "mlp:64".into()),
            epochs: opts.epochs.unwrap_or(if graph { 1000 } else { 300 }),
            learning_rate: opts.learning_rate.unwrap_or(if graph { 5e-3 } else { 5e-4 }),
            batch_size: opts.batch_size.unwrap_or(128),
            optimizer: opts.optimizer.unwrap_or_else(|| "adam".into()),
            momentum: opts.momentum.unwrap_or(0.9),
            weight_decay: opts.weight_decay.unwrap_or(if graph { 5e-4 } else { 0.0 }),
            scheduler_patience: sched_patience,
            scheduler_factor: opts.scheduler_factor.unwrap_or(PlateauConfig::default().factor),
            early_stopping: opts.early_stopping.unwrap_or(if graph { 200 } else { 0 }),
            standardize: opts.standardize.unwrap_or(!graph),
            seed: opts.seed.unwrap_or(0),
            tag: opts.tag,
        })
    }

    pub fn arch(&self) -> Result<Architecture> {
        Ok(self.model.parse()?)
    }

    pub fn activation(&self) -> Result<Activation> {
        Ok(self.activation.parse()?)
    }

    /// Model hyperparameters for inputs of width `d_in` and `out` outputs.
    pub fn set_config(&self, d_in: usize, out: usize) -> Result<SetTwisterConfig> {
        let act = self.activation()?;
        let mut c = SetTwisterConfig::new(self.m, self.k, d_in, self.d_rep)
            .with_phi_hidden(parse_widths(&self.phi_hidden)?)
            .with_activation(act)
            .with_pooling(self.pooling.parse::<Pooling>()?)
            .with_coefficient_mode(self.coeff_mode.parse::<CoefficientMode>()?)
            .with_rho(parse_rho(&self.rho, out, act)?);
        c.d_ds_rep = self.d_ds_rep;
        c.validate_for(self.arch()?)?;
        Ok(c)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut t = match self.kind {
            DataKind::Sequence => TrainConfig::sequence_default(),
            DataKind::Graph => TrainConfig::node_default(),
        };
        t.optimizer = self.optimizer.parse::<OptimizerKind>()?;
        t.learning_rate = self.learning_rate;
        t.momentum = self.momentum;
        t.batch_size = self.batch_size;
        t.epochs = self.epochs;
        t.weight_decay = self.weight_decay;
        t.scheduler = (self.scheduler_patience > 0).then_some(PlateauConfig {
            factor: self.scheduler_factor,
            patience: self.scheduler_patience,
        });
        t.early_stopping_patience = (self.early_stopping > 0).then_some(self.early_stopping);
        t.standardize_targets = self.standardize;
        t.seed = self.seed;
        t.validate()?;
        Ok(t)
    }

    /// TOML echo of the effective configuration.
    pub fn echo(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
