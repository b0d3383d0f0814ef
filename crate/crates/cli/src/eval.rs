use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;
use set_twister::graph::{load_graph, GraphFiles, NodeModel};
use set_twister::setrep::{load_checkpoint, SetModel};
use set_twister::tasks::Split;
use set_twister::train::{class_accuracy, evaluate_sequences, MetricKind};

use crate::train::load_sequence_data;

#[derive(Serialize)]
struct Report {
    head: String,
    split: &'static str,
    metric: &'static str,
    value: f64,
    count: usize,
}

/// Scores a saved model on one split and prints a JSON report.
pub fn run(checkpoint: &Path, data: &Path, split: Split) -> Result<()> {
    let (meta, params) = load_checkpoint(checkpoint)?;
    let report = match meta.head.as_str() {
        "sequence" => {
            let (tasks, emb) = load_sequence_data(data)?;
            let ds = tasks.get(split);
            let model = SetModel {
                arch: meta.arch,
                config: meta.config,
                params,
                output: meta.output,
            };
            let metric = MetricKind::for_task(ds.task);
            Report {
                head: meta.head,
                split: split.name(),
                metric: metric.name(),
                value: evaluate_sequences(&model, ds, &emb, metric)?,
                count: ds.len(),
            }
        }
        "node" => {
            let graph = load_graph(&GraphFiles::in_dir(data))?;
            let model = NodeModel {
                arch: meta.arch,
                config: meta.config,
                params,
            };
            let scores = model.predict_all(&graph)?;
            let nodes = graph.nodes_in(split);
            Report {
                head: meta.head,
                split: split.name(),
                metric: MetricKind::Accuracy.name(),
                value: class_accuracy(scores.data(), model.num_outputs(), &nodes, &graph.labels),
                count: nodes.len(),
            }
        }
        other => bail!("checkpoint has unknown head `{other}`"),
    };
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}
