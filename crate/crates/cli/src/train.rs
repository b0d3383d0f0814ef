use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use set_twister::graph::{load_graph, GraphFiles, NodeModel};
use set_twister::seeds::derive_seed;
use set_twister::setrep::{save_checkpoint, CheckpointMeta, SetModel};
use set_twister::tasks::{EmbeddingTable, SequenceDataset, Split, TaskData};
use set_twister::train::{train_node_model, train_sequence_model, MetricKind, MetricsRecord, TrainOutcome};

use crate::opts::{sha256_hex, DataKind, Resolved, TrainOpts};

pub fn load_sequence_data(dir: &Path) -> Result<(TaskData, EmbeddingTable)> {
    let load = |split: Split| SequenceDataset::load(&dir.join(format!("{}.jsonl", split.name())), split);
    let data = TaskData {
        train: load(Split::Train)?,
        validation: load(Split::Validation)?,
        test: load(Split::Test)?,
    };
    let emb = EmbeddingTable::load(&dir.join("embedding.json"))?;
    Ok((data, emb))
}

#[derive(Serialize)]
struct Summary<'a> {
    tag: Option<&'a str>,
    model: &'a str,
    data: &'a Path,
    seed: u64,
    config_hash: &'a str,
    metric: &'static str,
    params: usize,
    epochs_run: usize,
    stopped_early: bool,
    best_epoch: usize,
    best_validation: f64,
    test_at_best: f64,
    config: &'a Resolved,
}

fn write_metrics(path: &Path, history: &[MetricsRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in history {
        serde_json::to_writer(&mut f, r)?;
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

/// Trains one model and writes `config.toml`, `metrics.jsonl`,
/// `summary.json` and `model.ckpt` into a fresh run directory.
pub fn run(cli: TrainOpts, config_file: Option<&Path>, out: Option<&Path>, root: &Path) -> Result<PathBuf> {
    let file = match config_file {
        Some(p) => TrainOpts::from_file(p)?,
        None => TrainOpts::default(),
    };
    let resolved = Resolved::new(cli.over(file)?)?;
    let echo = resolved.echo()?;
    let hash = sha256_hex(&echo);
    let run_dir = match out {
        Some(p) => p.to_path_buf(),
        None => root.join(format!("{}-s{}-{}", resolved.model, resolved.seed, &hash[..12])),
    };
    std::fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    std::fs::write(run_dir.join("config.toml"), format!("# config-hash = \"{hash}\"\n{echo}"))?;

    let arch = resolved.arch()?;
    let tcfg = resolved.train_config()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(resolved.seed, "init"));
    let (history, summary_bits, ckpt): (Vec<MetricsRecord>, (MetricKind, usize, bool, usize, f64, f64), _) =
        match resolved.kind {
            DataKind::Sequence => {
                let (data, emb) = load_sequence_data(&resolved.data)?;
                let config = resolved.set_config(emb.dim, 1)?;
                let model = SetModel::init(arch, config, &mut init_rng)?;
                let params = model.params.scalar_count();
                let o: TrainOutcome<SetModel> = train_sequence_model(model, &data, &emb, &tcfg)?;
                let meta = CheckpointMeta {
                    arch,
                    config: o.best.config.clone(),
                    rho_input: o.best.config.d_rep,
                    head: "sequence".into(),
                    output: o.best.output,
                };
                (
                    o.history.clone(),
                    (o.metric, params, o.stopped_early, o.best_epoch, o.best_validation, o.test_at_best),
                    (meta, o.best.params),
                )
            }
            DataKind::Graph => {
                let graph = load_graph(&GraphFiles::in_dir(&resolved.data))?;
                let config = resolved.set_config(graph.feature_dim(), graph.num_classes)?;
                let model = NodeModel::init(arch, config, &mut init_rng)?;
                let params = model.params.scalar_count();
                let o = train_node_model(model, &graph, &tcfg)?;
                let meta = CheckpointMeta {
                    arch,
                    config: o.best.config.clone(),
                    rho_input: o.best.rho_input(),
                    head: "node".into(),
                    output: Default::default(),
                };
                (
                    o.history.clone(),
                    (o.metric, params, o.stopped_early, o.best_epoch, o.best_validation, o.test_at_best),
                    (meta, o.best.params),
                )
            }
        };
    let (metric, params, stopped_early, best_epoch, best_validation, test_at_best) = summary_bits;
    write_metrics(&run_dir.join("metrics.jsonl"), &history)?;
    save_checkpoint(&run_dir.join("model.ckpt"), &ckpt.0, &ckpt.1)?;
    let summary = Summary {
        tag: resolved.tag.as_deref(),
        model: &resolved.model,
        data: &resolved.data,
        seed: resolved.seed,
        config_hash: &hash,
        metric: metric.name(),
        params,
        epochs_run: history.len() - 1,
        stopped_early,
        best_epoch,
        best_validation,
        test_at_best,
        config: &resolved,
    };
    std::fs::write(run_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!(
        "{}{}: best epoch {best_epoch}, validation {} {best_validation:.6}, test {test_at_best:.6} -> {}",
        resolved.model,
        resolved.tag.as_deref().map(|t| format!(" [{t}]")).unwrap_or_default(),
        metric.name(),
        run_dir.display()
    );
    Ok(run_dir)
}
