use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::targets::Task;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::setrep::{Pooling, SetBatch};

/// Fixed random vectors for the integers `0..vocab_size`, entries uniform in
/// `[-1, 1]`. Fully determined by `(vocab_size, dim, seed)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub vocab_size: usize,
    pub dim: usize,
    pub seed: u64,
    vectors: Tensor,
}

/// What gets written to disk: the vectors are regenerated from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub vocab_size: usize,
    pub dim: usize,
    pub seed: u64,
    pub distribution: String,
}

const DISTRIBUTION: &str = "chacha8-uniform[-1,1]";

impl EmbeddingTable {
    pub fn generate(vocab_size: usize, dim: usize, seed: u64) -> Result<Self> {
        if vocab_size == 0 || dim == 0 {
            return Err(Error::Config("embedding needs vocab_size, dim ≥ 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..vocab_size * dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Ok(EmbeddingTable {
            vocab_size,
            dim,
            seed,
            vectors: Tensor::matrix(vocab_size, dim, data)?,
        })
    }

    pub fn vectors(&self) -> &Tensor {
        &self.vectors
    }

    pub fn row(&self, label: usize) -> Result<&[f64]> {
        if label >= self.vocab_size {
            return Err(Error::Index {
                what: "label",
                index: label,
                len: self.vocab_size,
            });
        }
        Ok(self.vectors.row(label))
    }

    /// The element vectors of one labelled sequence.
    pub fn embed(&self, labels: &[usize]) -> Result<Vec<Vec<f64>>> {
        labels.iter().map(|&y| self.row(y).map(<[f64]>::to_vec)).collect()
    }

    pub fn spec(&self) -> EmbeddingSpec {
        EmbeddingSpec {
            vocab_size: self.vocab_size,
            dim: self.dim,
            seed: self.seed,
            distribution: DISTRIBUTION.into(),
        }
    }

    pub fn from_spec(spec: &EmbeddingSpec) -> Result<Self> {
        if spec.distribution != DISTRIBUTION {
            return Err(Error::Config(format!("unknown embedding distribution `{}`", spec.distribution)));
        }
        Self::generate(spec.vocab_size, spec.dim, spec.seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.spec())?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: EmbeddingSpec = serde_json::from_str(&text).map_err(|e| Error::Ingest {
            file: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        Self::from_spec(&spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" | "valid" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Labelled integer sequences with one target each.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceDataset {
    pub task: Task,
    pub vocab_size: usize,
    pub n_h: usize,
    pub split: Split,
    pub sequences: Vec<Vec<usize>>,
    pub targets: Vec<f64>,
}

/// One line of a dataset file.
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    labels: Vec<usize>,
    target: f64,
    task: Task,
    vocab_size: usize,
    n_h: usize,
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Re-derives every target and checks every label.
    pub fn check(&self) -> Result<()> {
        if self.sequences.len() != self.targets.len() {
            return Err(Error::dim("dataset", &[self.sequences.len()], &[self.targets.len()]));
        }
        for (i, (seq, &t)) in self.sequences.iter().zip(&self.targets).enumerate() {
            if let Some(&y) = seq.iter().find(|&&y| y >= self.vocab_size) {
                return Err(Error::Index {
                    what: "label",
                    index: y,
                    len: self.vocab_size,
                });
            }
            let want = self.task.target(seq)?;
            if want != t {
                return Err(Error::Contract(format!(
                    "sequence {i}: stored target {t} but {} gives {want}",
                    self.task
                )));
            }
        }
        Ok(())
    }

    /// Batch over the whole embedding vocabulary: each element points at its
    /// label's row, so `φ` runs once per vocabulary entry.
    pub fn batch(&self, indices: &[usize], emb: &EmbeddingTable, pooling: Pooling) -> Result<SetBatch> {
        if emb.vocab_size < self.vocab_size {
            return Err(Error::Config(format!(
                "embedding covers {} labels, dataset uses {}",
                emb.vocab_size, self.vocab_size
            )));
        }
        let groups = indices
            .iter()
            .map(|&i| {
                self.sequences.get(i).map(Vec::as_slice).ok_or(Error::Index {
                    what: "sequence",
                    index: i,
                    len: self.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SetBatch::new(emb.vectors().clone(), &groups, pooling)
    }

    pub fn targets_of(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.targets[i]).collect()
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        let io = |e| Error::io("<dataset>", e);
        for (labels, &target) in self.sequences.iter().zip(&self.targets) {
            let rec = Record {
                labels: labels.clone(),
                target,
                task: self.task,
                vocab_size: self.vocab_size,
                n_h: labels.len(),
            };
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a JSONL dataset; blank lines are skipped. The targets are
    /// re-derived and must match.
    pub fn load(path: &Path, split: Split) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let ingest = |line: usize, msg: String| Error::Ingest {
            file: path.to_path_buf(),
            line,
            msg,
        };
        let mut ds: Option<SequenceDataset> = None;
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| ingest(lineno, e.to_string()))?;
            if rec.labels.len() != rec.n_h {
                return Err(ingest(lineno, format!("n_h = {} but {} labels", rec.n_h, rec.labels.len())));
            }
            if let Some(&y) = rec.labels.iter().find(|&&y| y >= rec.vocab_size) {
                return Err(ingest(lineno, format!("label {y} outside vocabulary of {}", rec.vocab_size)));
            }
            let want = rec.task.target(&rec.labels).map_err(|e| ingest(lineno, e.to_string()))?;
            if want != rec.target {
                return Err(ingest(lineno, format!("target {} but {} gives {want}", rec.target, rec.task)));
            }
            let d = ds.get_or_insert_with(|| SequenceDataset {
                task: rec.task,
                vocab_size: rec.vocab_size,
                n_h: rec.n_h,
                split,
                sequences: Vec::new(),
                targets: Vec::new(),
            });
            if d.task != rec.task || d.vocab_size != rec.vocab_size {
                return Err(ingest(lineno, "task or vocabulary differs from earlier records".into()));
            }
            d.n_h = d.n_h.max(rec.n_h);
            d.sequences.push(rec.labels);
            d.targets.push(rec.target);
        }
        ds.ok_or_else(|| ingest(0, "no records".into()))
    }
}

/// `count` sequences of `n_h` labels drawn uniformly with replacement from
/// `0..vocab_size`.
pub fn generate_dataset(task: Task, vocab_size: usize, n_h: usize, count: usize, seed: u64, split: Split) -> Result<SequenceDataset> {
    if count == 0 || vocab_size == 0 {
        return Err(Error::Config("dataset needs count, vocab_size ≥ 1".into()));
    }
    if n_h < task.min_len() {
        return Err(Error::InsufficientLength {
            op: "generate_dataset",
            needed: task.min_len(),
            got: n_h,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let labels: Vec<usize> = (0..n_h).map(|_| rng.random_range(0..vocab_size)).collect();
        targets.push(task.target(&labels)?);
        sequences.push(labels);
    }
    Ok(SequenceDataset {
        task,
        vocab_size,
        n_h,
        split,
        sequences,
        targets,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    pub const DESK: SplitSizes = SplitSizes {
        train: 20_000,
        validation: 2_000,
        test: 2_000,
    };
    /// Full-scale splits, five times the desk sizes.
    pub const FULL: SplitSizes = SplitSizes {
        train: 100_000,
        validation: 10_000,
        test: 10_000,
    };

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

/// A task's three splits, each from its own sub-seed of `seed`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub train: SequenceDataset,
    pub validation: SequenceDataset,
    pub test: SequenceDataset,
}

impl TaskData {
    pub fn generate(task: Task, vocab_size: usize, n_h: usize, sizes: SplitSizes, seed: u64) -> Result<Self> {
        let make = |split: Split| {
            let sub = derive_seed(seed, &format!("data.{}", split.name()));
            generate_dataset(task, vocab_size, n_h, sizes.get(split), sub, split)
        };
        Ok(TaskData {
            train: make(Split::Train)?,
            validation: make(Split::Validation)?,
            test: make(Split::Test)?,
        })
    }

    pub fn get(&self, split: Split) -> &SequenceDataset {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_is_seeded_and_bounded() {
        let a = EmbeddingTable::generate(10, 4, 3).unwrap();
        let b = EmbeddingTable::from_spec(&a.spec()).unwrap();
        assert_eq!(a, b);
        assert!(a.vectors().data().iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_ne!(a, EmbeddingTable::generate(10, 4, 4).unwrap());
        assert!(a.row(10).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(Task::Range, 100, 5, 50, 9, Split::Train).unwrap();
        let b = generate_dataset(Task::Range, 100, 5, 50, 9, Split::Train).unwrap();
        assert_eq!(a, b);
        a.check().unwrap();
    }

    #[test]
    fn maxmin_needs_two_elements() {
        assert!(generate_dataset(Task::Maxmin, 10, 1, 5, 0, Split::Train).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let a = generate_dataset(Task::Variance, 100, 10, 20, 1, Split::Test).unwrap();
        let mut buf = Vec::new();
        a.write_jsonl(&mut buf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.jsonl");
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(SequenceDataset::load(&path, Split::Test).unwrap(), a);
    }

    #[test]
    fn tampered_target_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = r#"{"labels":[1,2],"target":1.0,"task":"range","vocab_size":10,"n_h":2}"#;
        let bad = r#"{"labels":[1,5],"target":1.0,"task":"range","vocab_size":10,"n_h":2}"#;
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        match SequenceDataset::load(&path, Split::Train) {
            Err(Error::Ingest { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected ingest error, got {other:?}"),
        }
    }

    #[test]
    fn splits_use_distinct_streams() {
        let d = TaskData::generate(Task::Range, 100, 5, SplitSizes { train: 5, validation: 5, test: 5 }, 1).unwrap();
        assert_ne!(d.train.sequences, d.validation.sequences);
        assert_ne!(d.validation.sequences, d.test.sequences);
    }
}
