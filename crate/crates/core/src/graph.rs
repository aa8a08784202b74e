//! Undirected simple graphs: construction, Erdős–Rényi sampling, matrix views
//! and the edge-list text format.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::matrix::DenseMatrix;
use crate::{Error, Result};

pub const DEFAULT_MAX_RETRIES: usize = 1000;

/// Undirected graph on nodes `0..n` with no self-loops or parallel edges.
///
/// Adjacency lists are kept sorted, so iteration order is deterministic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Self-loops and repeated pairs
    /// (in either orientation) are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for &(a, b) in edges {
            for index in [a, b] {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop on node {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidParameter(format!("duplicate edge {{{a},{b}}}")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Self { adj })
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path edges are valid")
    }

    pub fn cycle(n: usize) -> Self {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Self::from_edges(n, &edges).expect("cycle edges are valid")
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        Self::from_edges(n, &edges).expect("complete edges are valid")
    }

    /// Star with center 0 and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        let edges: Vec<_> = (1..=leaves).map(|j| (0, j)).collect();
        Self::from_edges(leaves + 1, &edges).expect("star edges are valid")
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(i, j)` with `i < j`, sorted lexicographically.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj.get(i).is_some_and(|list| list.binary_search(&j).is_ok())
    }

    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        self.adj
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::NodeOutOfRange { index: i, n: self.node_count() })
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Breadth-first reachability from node 0. The empty graph counts as connected.
    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == n
    }

    pub fn require_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(Error::NotConnected)
        }
    }

    pub fn adjacency(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.node_count());
        for (i, j) in self.edges() {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> DenseMatrix {
        let mut l = DenseMatrix::zeros(self.node_count());
        for (i, list) in self.adj.iter().enumerate() {
            l[(i, i)] = list.len() as f64;
            for &j in list {
                l[(i, j)] = -1.0;
            }
        }
        l
    }

    /// SHA-256 over the canonical edge list, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.node_count() as u64).to_le_bytes());
        for (i, j) in self.edges() {
            hasher.update((i as u64).to_le_bytes());
            hasher.update((j as u64).to_le_bytes());
        }
        hex(&hasher.finalize())
    }

    /// Writes the edge-list format: a `nodes <n>` header then sorted `i j` pairs with `i < j`.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("nodes {}\n", self.node_count());
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    /// Parses the edge-list format.
    ///
    /// With a `nodes <n>` header, labels are taken as indices in `0..n` (so
    /// isolated nodes are representable). Without it, the distinct labels are
    /// remapped to `0..n` in sorted order. Repeated pairs collapse into one
    /// edge. The result may be disconnected; callers check [`Graph::is_connected`].
    pub fn parse_edge_list(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { path: source.to_string(), line, message };
        let mut declared: Option<usize> = None;
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "nodes" {
                if declared.is_some() || !pairs.is_empty() {
                    return Err(err(lineno, "`nodes` header must come first and only once".into()));
                }
                if fields.len() != 2 {
                    return Err(err(lineno, "expected `nodes <n>`".into()));
                }
                let n = fields[1].parse().map_err(|_| err(lineno, format!("bad node count `{}`", fields[1])))?;
                declared = Some(n);
                continue;
            }
            if fields.len() != 2 {
                return Err(err(lineno, format!("expected two labels, found {}", fields.len())));
            }
            let parse = |s: &str| s.parse::<u64>().map_err(|_| err(lineno, format!("bad node label `{s}`")));
            let (a, b) = (parse(fields[0])?, parse(fields[1])?);
            if a == b {
                return Err(err(lineno, format!("self-loop on node {a}")));
            }
            pairs.push((lineno, a, b));
        }

        let (n, index): (usize, BTreeMap<u64, usize>) = match declared {
            Some(n) => {
                if let Some(&(lineno, a, b)) = pairs.iter().find(|(_, a, b)| *a.max(b) >= n as u64) {
                    return Err(err(lineno, format!("label {} not below declared node count {n}", a.max(b))));
                }
                (n, (0..n as u64).map(|l| (l, l as usize)).collect())
            }
            None => {
                let labels: BTreeSet<u64> = pairs.iter().flat_map(|&(_, a, b)| [a, b]).collect();
                (labels.len(), labels.into_iter().enumerate().map(|(i, l)| (l, i)).collect())
            }
        };
        let edges: BTreeSet<(usize, usize)> = pairs
            .iter()
            .map(|&(_, a, b)| {
                let (i, j) = (index[&a], index[&b]);
                (i.min(j), i.max(j))
            })
            .collect();
        Self::from_edges(n, &edges.into_iter().collect::<Vec<_>>())
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text, &path.display().to_string())
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }
}

/// Samples G(n, edge_prob) until a connected sample appears.
///
/// A single ChaCha stream seeded with `seed` feeds every attempt, so each
/// retry consumes fresh draws and the whole procedure is a pure function of
/// `(n, edge_prob, seed, max_retries)`.
pub fn erdos_renyi(n: usize, edge_prob: f64, seed: u64, max_retries: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("erdos_renyi needs n >= 2, got {n}")));
    }
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(Error::InvalidParameter(format!("edge_prob must lie in (0, 1], got {edge_prob}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_retries.max(1) {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < edge_prob {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_edges(n, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GenerationFailed { n, edge_prob, retries: max_retries.max(1) })
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
