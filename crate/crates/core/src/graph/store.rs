use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::autodiff::{CsrMatrix, Tensor};
use crate::error::{Error, Result};
use crate::tasks::Split;

/// An undirected attributed graph with a train/validation/test node split.
///
/// Adjacency is stored in CSR form with both directions of every edge,
/// neighbors sorted ascending, no duplicates and no self-loops.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// `None` for nodes outside every split.
    pub split: Vec<Option<Split>>,
}

impl Graph {
    /// Builds a graph from an edge list, symmetrizing and deduplicating it
    /// and dropping self-loops.
    pub fn new(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Tensor,
        labels: Vec<usize>,
        split: Vec<Option<Split>>,
    ) -> Result<Self> {
        if features.rank() != 2 || features.rows() != num_nodes {
            return Err(Error::dim("graph features", features.shape(), &[num_nodes, 0]));
        }
        if labels.len() != num_nodes || split.len() != num_nodes {
            return Err(Error::dim("graph labels/split", &[labels.len(), split.len()], &[num_nodes, num_nodes]));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= num_nodes {
                    return Err(Error::Index {
                        what: "edge endpoint",
                        index: w,
                        len: num_nodes,
                    });
                }
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        let num_classes = labels.iter().max().map_or(0, |&c| c + 1);
        Ok(Graph {
            num_nodes,
            offsets,
            neighbors,
            features,
            labels,
            num_classes,
            split,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Directed CSR entries (twice the undirected edge count).
    pub fn num_directed_edges(&self) -> usize {
        self.neighbors.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.num_nodes {
            return Err(Error::Index {
                what: "node",
                index: v,
                len: self.num_nodes,
            });
        }
        Ok(())
    }

    /// Neighbors of `v` in ascending id order.
    pub fn neighbors(&self, v: usize) -> Result<&[usize]> {
        self.check_node(v)?;
        Ok(&self.neighbors[self.offsets[v]..self.offsets[v + 1]])
    }

    pub fn degree(&self, v: usize) -> Result<usize> {
        Ok(self.neighbors(v)?.len())
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).is_ok_and(|n| n.binary_search(&v).is_ok())
    }

    /// Undirected edges `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes)
            .flat_map(|u| {
                self.neighbors[self.offsets[u]..self.offsets[u + 1]]
                    .iter()
                    .filter(move |&&v| v > u)
                    .map(move |&v| (u, v))
            })
            .collect()
    }

    /// Neighbor feature vectors of `v`, ascending by neighbor id. Empty for
    /// isolated nodes, which are logged.
    pub fn neighborhood_sequence(&self, v: usize) -> Result<Vec<Vec<f64>>> {
        let nbrs = self.neighbors(v)?;
        if nbrs.is_empty() {
            log::warn!("node {v} has no neighbors; its neighborhood sequence is empty");
        }
        Ok(nbrs.iter().map(|&u| self.features.row(u).to_vec()).collect())
    }

    /// Sparse indicator of `A` (weights `1`), or `D⁻¹A` when `mean`.
    /// Isolated nodes give empty rows.
    pub fn adjacency(&self, mean: bool) -> CsrMatrix {
        let groups: Vec<&[usize]> = (0..self.num_nodes)
            .map(|v| &self.neighbors[self.offsets[v]..self.offsets[v + 1]])
            .collect();
        CsrMatrix::from_groups(self.num_nodes, &groups, mean).expect("neighbors are valid node ids")
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes).filter(|&v| self.split[v] == Some(split)).collect()
    }

    /// Fraction of `split` nodes in the most common class among training nodes.
    pub fn majority_rate(&self, split: Split) -> f64 {
        let mut counts = vec![0usize; self.num_classes.max(1)];
        for v in self.nodes_in(Split::Train) {
            counts[self.labels[v]] += 1;
        }
        let majority = (0..counts.len()).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);
        let nodes = self.nodes_in(split);
        if nodes.is_empty() {
            return 0.0;
        }
        nodes.iter().filter(|&&v| self.labels[v] == majority).count() as f64 / nodes.len() as f64
    }

    /// The same graph without the undirected edge `(u, v)`.
    pub fn without_edge(&self, u: usize, v: usize) -> Result<Graph> {
        self.check_node(u)?;
        self.check_node(v)?;
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .filter(|&(a, b)| (a, b) != (u.min(v), u.max(v)))
            .collect();
        Graph::new(
            self.num_nodes,
            &edges,
            self.features.clone(),
            self.labels.clone(),
            self.split.clone(),
        )
    }

    /// Checks the structural invariants.
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Contract(format!("graph: {m}")));
        if self.offsets.windows(2).any(|w| w[0] > w[1]) || self.offsets.last() != Some(&self.neighbors.len()) {
            return bad("offsets");
        }
        for u in 0..self.num_nodes {
            let n = &self.neighbors[self.offsets[u]..self.offsets[u + 1]];
            if n.windows(2).any(|w| w[0] >= w[1]) || n.contains(&u) {
                return bad("neighbor order, duplicate or self-loop");
            }
            if n.iter().any(|&v| !self.has_edge(v, u)) {
                return bad("asymmetric edge");
            }
        }
        Ok(())
    }
}

/// Paths of the four plain-text files describing a graph.
#[derive(Clone, Debug)]
pub struct GraphFiles {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub split: PathBuf,
}

impl GraphFiles {
    /// `edges.txt`, `features.txt`, `labels.txt`, `split.txt` under `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        GraphFiles {
            edges: dir.join("edges.txt"),
            features: dir.join("features.txt"),
            labels: dir.join("labels.txt"),
            split: dir.join("split.txt"),
        }
    }
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push((i + 1, t.to_string()));
        }
    }
    Ok(out)
}

fn ingest(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Ingest {
        file: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| ingest(path, line, format!("cannot parse {what} `{tok}`")))
}

/// Reads `node id → fields` lines, requiring each id at most once.
fn keyed(path: &Path) -> Result<BTreeMap<usize, (usize, Vec<String>)>> {
    let mut out = BTreeMap::new();
    for (line, text) in data_lines(path)? {
        let mut toks = text.split_whitespace();
        let id: usize = parse(path, line, toks.next().expect("line is non-blank"), "node id")?;
        let rest = toks.map(str::to_string).collect();
        if out.insert(id, (line, rest)).is_some() {
            return Err(ingest(path, line, format!("node {id} listed twice")));
        }
    }
    Ok(out)
}

/// Loads a graph. The feature file defines the node set, which must be
/// `0..n`; every node needs a label, and nodes missing from the split file
/// belong to no split.
pub fn load_graph(files: &GraphFiles) -> Result<Graph> {
    let feats = keyed(&files.features)?;
    let n = feats.len();
    if let Some((&id, &(line, _))) = feats.iter().find(|(&id, _)| id >= n) {
        return Err(ingest(&files.features, line, format!("node ids must be 0..{n}, found {id}")));
    }
    let mut width = None;
    let mut data = Vec::new();
    for (line, vals) in feats.values() {
        if *width.get_or_insert(vals.len()) != vals.len() {
            return Err(ingest(
                &files.features,
                *line,
                format!("{} feature values, earlier rows have {}", vals.len(), width.unwrap()),
            ));
        }
        for tok in vals {
            let x: f64 = parse(&files.features, *line, tok, "feature")?;
            if !x.is_finite() {
                return Err(ingest(&files.features, *line, "non-finite feature"));
            }
            data.push(x);
        }
    }
    let width = width.unwrap_or(0);
    if n == 0 || width == 0 {
        return Err(ingest(&files.features, 0, "no nodes or zero-width features"));
    }
    let features = Tensor::matrix(n, width, data)?;

    let node = |path: &Path, line: usize, tok: &str| -> Result<usize> {
        let id: usize = parse(path, line, tok, "node id")?;
        if id >= n {
            return Err(ingest(path, line, format!("dangling node id {id} (graph has {n} nodes)")));
        }
        Ok(id)
    };

    let mut edges = Vec::new();
    for (line, text) in data_lines(&files.edges)? {
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(ingest(&files.edges, line, format!("expected 2 node ids, found {}", toks.len())));
        }
        edges.push((node(&files.edges, line, toks[0])?, node(&files.edges, line, toks[1])?));
    }

    let mut labels = vec![None; n];
    for (id, (line, rest)) in keyed(&files.labels)? {
        node(&files.labels, line, &id.to_string())?;
        if rest.len() != 1 {
            return Err(ingest(&files.labels, line, "expected node id and one class"));
        }
        labels[id] = Some(parse::<usize>(&files.labels, line, &rest[0], "class")?);
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| ingest(&files.labels, 0, format!("node {v} has no label"))))
        .collect::<Result<Vec<_>>>()?;

    let mut split = vec![None; n];
    for (id, (line, rest)) in keyed(&files.split)? {
        node(&files.split, line, &id.to_string())?;
        if rest.len() != 1 {
            return Err(ingest(&files.split, line, "expected node id and one split name"));
        }
        split[id] = Some(
            rest[0]
                .parse::<Split>()
                .map_err(|e| ingest(&files.split, line, e.to_string()))?,
        );
    }
    Graph::new(n, &edges, features, labels, split)
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes the four files. Floats use the shortest round-trip decimal form,
/// so loading gives back an identical graph.
pub fn save_graph(g: &Graph, files: &GraphFiles) -> Result<()> {
    write_file(&files.edges, |w| {
        writeln!(w, "# undirected edges, one per line")?;
        for (u, v) in g.edges() {
            writeln!(w, "{u} {v}")?;
        }
        Ok(())
    })?;
    write_file(&files.features, |w| {
        for v in 0..g.num_nodes() {
            write!(w, "{v}")?;
            for x in g.features.row(v) {
                write!(w, " {x:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write_file(&files.labels, |w| {
        for (v, l) in g.labels.iter().enumerate() {
            writeln!(w, "{v} {l}")?;
        }
        Ok(())
    })?;
    write_file(&files.split, |w| {
        for (v, s) in g.split.iter().enumerate() {
            if let Some(s) = s {
                writeln!(w, "{v} {}", s.name())?;
            }
        }
        Ok(())
    })
}
