use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use set_twister::graph::{generate_synthetic_graph, save_graph, GraphFiles, SyntheticGraphConfig};
use set_twister::seeds::derive_seed;
use set_twister::tasks::{EmbeddingTable, Split, SplitSizes, Task, TaskData};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GenTask {
    Variance,
    Range,
    Maxmin,
    /// Planted-partition node classification graph.
    Graph,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub task: GenTask,
    /// Vocabulary size (labels are `0..vocab`).
    #[arg(long, default_value_t = 100)]
    pub vocab: usize,
    /// Sequence length `n_h`.
    #[arg(long = "len", default_value_t = 10)]
    pub len: usize,
    /// Embedding width.
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = SplitSizes::DESK.train)]
    pub train: usize,
    /// Defaults to a tenth of `--train`.
    #[arg(long)]
    pub validation: Option<usize>,
    /// Defaults to a tenth of `--train`.
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub nodes: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.05)]
    pub intra_p: f64,
    #[arg(long, default_value_t = 0.005)]
    pub inter_p: f64,
    #[arg(long, default_value_t = 16)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 1.5)]
    pub signal: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (default: `<output root>/data-<task>-s<seed>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SequenceManifest<'a> {
    task: GenTask,
    vocab_size: usize,
    n_h: usize,
    embedding_dim: usize,
    sizes: SplitSizes,
    seed: u64,
    files: [&'a str; 4],
}

pub fn run(args: &GenArgs, root: &Path) -> Result<PathBuf> {
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| root.join(format!("data-{}-s{}", task_name(args.task), args.seed)));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match args.task {
        GenTask::Graph => {
            let cfg = SyntheticGraphConfig {
                num_nodes: args.nodes,
                num_classes: args.classes,
                intra_p: args.intra_p,
                inter_p: args.inter_p,
                feature_dim: args.feature_dim,
                signal_strength: args.signal,
                seed: args.seed,
            };
            let g = generate_synthetic_graph(&cfg)?;
            save_graph(&g, &GraphFiles::in_dir(&out))?;
            std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
            println!(
                "graph: {} nodes, {} undirected edges, {} classes -> {}",
                g.num_nodes(),
                g.num_directed_edges() / 2,
                g.num_classes,
                out.display()
            );
        }
        seq => {
            let task = match seq {
                GenTask::Variance => Task::Variance,
                GenTask::Range => Task::Range,
                GenTask::Maxmin => Task::Maxmin,
                GenTask::Graph => unreachable!(),
            };
            let sizes = SplitSizes {
                train: args.train,
                validation: args.validation.unwrap_or(args.train / 10),
                test: args.test.unwrap_or(args.train / 10),
            };
            let data = TaskData::generate(task, args.vocab, args.len, sizes, args.seed)?;
            let emb = EmbeddingTable::generate(args.vocab, args.dim, derive_seed(args.seed, "embedding"))?;
            for split in Split::ALL {
                data.get(split).save(&out.join(format!("{}.jsonl", split.name())))?;
            }
            emb.save(&out.join("embedding.json"))?;
            let manifest = SequenceManifest {
                task: seq,
                vocab_size: args.vocab,
                n_h: args.len,
                embedding_dim: args.dim,
                sizes,
                seed: args.seed,
                files: ["train.jsonl", "validation.jsonl", "test.jsonl", "embedding.json"],
            };
            std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
            println!(
                "{task}: {}/{}/{} sequences of length {} -> {}",
                sizes.train,
                sizes.validation,
                sizes.test,
                args.len,
                out.display()
            );
        }
    }
    Ok(out)
}

fn task_name(t: GenTask) -> &'static str {
    match t {
        GenTask::Variance => "variance",
        GenTask::Range => "range",
        GenTask::Maxmin => "maxmin",
        GenTask::Graph => "graph",
    }
}
