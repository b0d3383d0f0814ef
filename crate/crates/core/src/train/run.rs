use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::{class_accuracy, l1_loss, rounded_accuracy, Direction};
use super::optim::Optimizer;
use super::schedule::{EarlyStopping, Plateau};
use crate::autodiff::Graph as Tape;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeModel};
use crate::seeds::derive_seed;
use crate::setrep::{OutputAffine, SetModel};
use crate::tasks::{EmbeddingTable, SequenceDataset, Split, Task, TaskData};

/// Sequences per evaluation batch.
const EVAL_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Mae,
    RoundedAccuracy,
    Accuracy,
}

impl MetricKind {
    pub fn for_task(task: Task) -> Self {
        if task.integer_valued() {
            MetricKind::RoundedAccuracy
        } else {
            MetricKind::Mae
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            MetricKind::Mae => Direction::Minimize,
            _ => Direction::Maximize,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Mae => "mae",
            MetricKind::RoundedAccuracy => "rounded_accuracy",
            MetricKind::Accuracy => "accuracy",
        }
    }
}

/// One epoch's metrics. Epoch 0 is the untrained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_metric: f64,
    pub test_metric: f64,
    /// Epoch with the best validation metric so far.
    pub best_epoch: usize,
    /// Test metric of the model from `best_epoch`.
    pub test_at_best: f64,
    pub learning_rate: f64,
    pub wall_time_secs: f64,
}

impl MetricsRecord {
    /// Equality of everything except wall time.
    pub fn same_metrics(&self, other: &Self) -> bool {
        let strip = |r: &Self| MetricsRecord {
            wall_time_secs: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    pub metric: MetricKind,
    pub history: Vec<MetricsRecord>,
    pub best_epoch: usize,
    pub best_validation: f64,
    pub test_at_best: f64,
    /// The model as of `best_epoch`.
    pub best: M,
    pub stopped_early: bool,
}

impl<M> TrainOutcome<M> {
    /// Histories agree on every field but wall time.
    pub fn same_history(&self, other: &Self) -> bool {
        self.history.len() == other.history.len()
            && self.history.iter().zip(&other.history).all(|(a, b)| a.same_metrics(b))
    }
}

/// Tracks the best validation epoch and the model from it.
struct Tracker<M> {
    direction: Direction,
    best_epoch: usize,
    best_validation: f64,
    test_at_best: f64,
    best: Option<M>,
}

impl<M: Clone> Tracker<M> {
    fn new(direction: Direction) -> Self {
        Tracker {
            direction,
            best_epoch: 0,
            best_validation: direction.worst(),
            test_at_best: f64::NAN,
            best: None,
        }
    }

    fn observe(&mut self, epoch: usize, validation: f64, test: f64, model: &M) {
        if self.best.is_none() || self.direction.improves(validation, self.best_validation) {
            self.best_epoch = epoch;
            self.best_validation = validation;
            self.test_at_best = test;
            self.best = Some(model.clone());
        }
    }

    fn record(&self, epoch: usize, train_loss: f64, validation: f64, test: f64, lr: f64, secs: f64) -> MetricsRecord {
        MetricsRecord {
            epoch,
            train_loss,
            validation_metric: validation,
            test_metric: test,
            best_epoch: self.best_epoch,
            test_at_best: self.test_at_best,
            learning_rate: lr,
            wall_time_secs: secs,
        }
    }
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::Divergence {
            epoch,
            detail: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

fn finite_loss(epoch: usize, loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Divergence {
            epoch,
            detail: format!("training loss is {loss}"),
        })
    }
}

/// Scalar predictions for every sequence of `ds`.
pub fn predict_sequences(model: &SetModel, ds: &SequenceDataset, emb: &EmbeddingTable) -> Result<Vec<f64>> {
    if model.output_width() != 1 {
        return Err(Error::Config(format!(
            "sequence tasks need a scalar output, model gives {}",
            model.output_width()
        )));
    }
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut out = Vec::with_capacity(ds.len());
    for chunk in idx.chunks(EVAL_CHUNK) {
        let batch = ds.batch(chunk, emb, model.config.pooling)?;
        out.extend(model.predict(&batch)?.into_data());
    }
    Ok(out)
}

/// The task metric of `model` on `ds`.
pub fn evaluate_sequences(model: &SetModel, ds: &SequenceDataset, emb: &EmbeddingTable, metric: MetricKind) -> Result<f64> {
    let pred = predict_sequences(model, ds, emb)?;
    match metric {
        MetricKind::Mae => l1_loss(&pred, &ds.targets),
        MetricKind::RoundedAccuracy => Ok(rounded_accuracy(&pred, &ds.targets)),
        MetricKind::Accuracy => Err(Error::Config("class accuracy does not apply to sequence tasks".into())),
    }
}

/// Minibatch L1 training on the train split, selecting the epoch with the
/// best validation metric (MAE for variance, rounded accuracy otherwise).
///
/// Shuffling draws from the `shuffle` sub-seed of `cfg.seed`; the model's
/// initial weights are taken as given.
pub fn train_sequence_model(
    mut model: SetModel,
    data: &TaskData,
    emb: &EmbeddingTable,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<SetModel>> {
    cfg.validate_batched()?;
    model.check()?;
    let train = &data.train;
    if train.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    if cfg.standardize_targets {
        let n = train.len() as f64;
        let mean = train.targets.iter().sum::<f64>() / n;
        let var = train.targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        model.output = OutputAffine { shift: mean, scale };
    }
    let metric = MetricKind::for_task(train.task);
    let eval = |m: &SetModel, split: Split| evaluate_sequences(m, data.get(split), emb, metric);

    let mut tracker = Tracker::new(metric.direction());
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let start = Instant::now();
    let init_loss = l1_loss(&predict_sequences(&model, train, emb).map_err(diverged(0))?, &train.targets)?;
    let (val, test) = (eval(&model, Split::Validation)?, eval(&model, Split::Test)?);
    tracker.observe(0, val, test, &model);
    let mut lr = cfg.learning_rate;
    history.push(tracker.record(0, finite_loss(0, init_loss)?, val, test, lr, start.elapsed().as_secs_f64()));

    let mut opt = Optimizer::new(cfg.optimizer, cfg.adam, cfg.momentum, cfg.weight_decay);
    let mut plateau = cfg.scheduler.map(|s| Plateau::new(s, metric.direction()));
    let mut stopper = cfg.early_stopping_patience.map(|p| EarlyStopping::new(p, metric.direction()));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.batch(chunk, emb, model.config.pooling)?;
            let targets = train.targets_of(chunk);
            let mut g = Tape::new();
            let bound = model.params.bind(&mut g);
            let out = model.forward_var(&mut g, &bound, &batch).map_err(diverged(epoch))?;
            let loss = g.l1_loss(out, &targets).map_err(diverged(epoch))?;
            loss_sum += finite_loss(epoch, g.value(loss)[0])? * chunk.len() as f64;
            g.backward(loss).map_err(diverged(epoch))?;
            model.params.zero_grad();
            model.params.accumulate_grads(&g, &bound)?;
            opt.step(model.params.iter_mut(), lr)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let (val, test) = (
            eval(&model, Split::Validation).map_err(diverged(epoch))?,
            eval(&model, Split::Test).map_err(diverged(epoch))?,
        );
        tracker.observe(epoch, val, test, &model);
        history.push(tracker.record(epoch, train_loss, val, test, lr, t0.elapsed().as_secs_f64()));
        log::debug!("epoch {epoch}: train {train_loss:.4} val {val:.4} test {test:.4}");
        if let Some(p) = &mut plateau {
            lr = p.step(val, lr);
        }
        if stopper.as_mut().is_some_and(|s| s.update(val)) {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        metric,
        best_epoch: tracker.best_epoch,
        best_validation: tracker.best_validation,
        test_at_best: tracker.test_at_best,
        best: tracker.best.expect("epoch 0 is always observed"),
        history,
        stopped_early,
    })
}

/// Node metrics from one batched evaluation: (train loss, validation
/// accuracy, test accuracy).
fn node_eval(model: &NodeModel, graph: &Graph, train_rows: &[usize], train_labels: &[usize]) -> Result<(f64, f64, f64)> {
    let scores = model.predict_all(graph)?;
    let c = model.num_outputs();
    let mut g = Tape::new();
    let s = g.constant(scores.clone());
    let loss = g.softmax_cross_entropy(s, train_rows, train_labels)?;
    let acc = |split| class_accuracy(scores.data(), c, &graph.nodes_in(split), &graph.labels);
    Ok((g.value(loss)[0], acc(Split::Validation), acc(Split::Test)))
}

/// Full-batch softmax cross-entropy training on the train nodes, selecting
/// the epoch with the best validation accuracy.
pub fn train_node_model(mut model: NodeModel, graph: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome<NodeModel>> {
    cfg.validate()?;
    model.check()?;
    if model.num_outputs() < graph.num_classes {
        return Err(Error::Config(format!(
            "{} class scores for {} classes",
            model.num_outputs(),
            graph.num_classes
        )));
    }
    let train_rows = graph.nodes_in(Split::Train);
    if train_rows.is_empty() {
        return Err(Error::EmptyInput("training nodes"));
    }
    let train_labels: Vec<usize> = train_rows.iter().map(|&v| graph.labels[v]).collect();
    let adjacency = Arc::new(graph.adjacency(model.config.pooling == crate::setrep::Pooling::Mean));
    let metric = MetricKind::Accuracy;

    let mut tracker = Tracker::new(metric.direction());
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let start = Instant::now();
    let (loss0, val, test) = node_eval(&model, graph, &train_rows, &train_labels).map_err(diverged(0))?;
    tracker.observe(0, val, test, &model);
    let mut lr = cfg.learning_rate;
    history.push(tracker.record(0, finite_loss(0, loss0)?, val, test, lr, start.elapsed().as_secs_f64()));

    let mut opt = Optimizer::new(cfg.optimizer, cfg.adam, cfg.momentum, cfg.weight_decay);
    let mut plateau = cfg.scheduler.map(|s| Plateau::new(s, metric.direction()));
    let mut stopper = cfg.early_stopping_patience.map(|p| EarlyStopping::new(p, metric.direction()));
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let mut g = Tape::new();
        let bound = model.params.bind(&mut g);
        let logits = model
            .forward_var(&mut g, &bound, graph, &adjacency)
            .map_err(diverged(epoch))?;
        let loss = g
            .softmax_cross_entropy(logits, &train_rows, &train_labels)
            .map_err(diverged(epoch))?;
        let train_loss = finite_loss(epoch, g.value(loss)[0])?;
        g.backward(loss).map_err(diverged(epoch))?;
        model.params.zero_grad();
        model.params.accumulate_grads(&g, &bound)?;
        opt.step(model.params.iter_mut(), lr)?;

        let (_, val, test) = node_eval(&model, graph, &train_rows, &train_labels).map_err(diverged(epoch))?;
        tracker.observe(epoch, val, test, &model);
        history.push(tracker.record(epoch, train_loss, val, test, lr, t0.elapsed().as_secs_f64()));
        if let Some(p) = &mut plateau {
            lr = p.step(val, lr);
        }
        if stopper.as_mut().is_some_and(|s| s.update(val)) {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        metric,
        best_epoch: tracker.best_epoch,
        best_validation: tracker.best_validation,
        test_at_best: tracker.test_at_best,
        best: tracker.best.expect("epoch 0 is always observed"),
        history,
        stopped_early,
    })
}
