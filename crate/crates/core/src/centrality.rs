//! Node-importance scores and the broadcast-probability vector built from them.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::graph::{hex, Graph};
use crate::{Error, Result};

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_PAGERANK_TOL: f64 = 1e-10;
pub const DEFAULT_PAGERANK_MAX_ITER: usize = 10_000;

/// Tolerance on `sum(p) == K` accepted by [`ProbabilityVector::with_budget`].
pub const BUDGET_TOL: f64 = 1e-9;

/// Per-node nonnegative scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

/// Broadcast probabilities `p` with budget `K = sum(p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    p: Vec<f64>,
    budget: f64,
}

impl ProbabilityVector {
    /// Checks `p` against `[0,1]^N` and `sum(p) = budget` within [`BUDGET_TOL`].
    pub fn with_budget(p: Vec<f64>, budget: f64) -> Result<Self> {
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("p[{i}] = {v} outside [0, 1]")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - budget).abs() > BUDGET_TOL * budget.abs().max(1.0) {
            return Err(Error::InvalidParameter(format!("sum(p) = {sum} differs from budget {budget}")));
        }
        Ok(Self { p, budget })
    }

    /// Takes the budget to be the sum of `p`.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let budget = p.iter().sum();
        Self::with_budget(p, budget)
    }

    /// Full communication: every node broadcasts every round.
    pub fn ones(n: usize) -> Self {
        Self { p: vec![1.0; n], budget: n as f64 }
    }

    pub fn zeros(n: usize) -> Self {
        Self { p: vec![0.0; n], budget: 0.0 }
    }

    /// `(K/N) * 1`.
    pub fn uniform(n: usize, budget: f64) -> Result<Self> {
        check_budget(budget, n)?;
        Ok(Self { p: vec![budget / n as f64; n], budget })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.p
    }

    /// SHA-256 over the IEEE-754 bit patterns, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.p {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex(&hasher.finalize())
    }

    /// One `index probability` pair per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.p.iter().enumerate() {
            let _ = writeln!(out, "{i} {v:?}");
        }
        out
    }

    pub fn parse_text(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { path: source.to_string(), line, message };
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(i), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(err(lineno + 1, "expected `index probability`".into()));
            };
            let i: usize = i.parse().map_err(|_| err(lineno + 1, format!("bad index `{i}`")))?;
            let v: f64 = v.parse().map_err(|_| err(lineno + 1, format!("bad probability `{v}`")))?;
            entries.push((lineno + 1, i, v));
        }
        let mut p = vec![f64::NAN; entries.len()];
        for (line, i, v) in entries {
            match p.get_mut(i) {
                Some(slot) if slot.is_nan() => *slot = v,
                Some(_) => return Err(err(line, format!("index {i} repeated"))),
                None => return Err(err(line, format!("index {i} out of range"))),
            }
        }
        Self::new(p)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn check_budget(budget: f64, n: usize) -> Result<()> {
    if !(budget > 0.0) {
        return Err(Error::InvalidParameter(format!("budget K must be positive, got {budget}")));
    }
    if budget > n as f64 {
        return Err(Error::BudgetExceedsNodes { budget, n });
    }
    Ok(())
}

pub fn degree_scores(g: &Graph) -> ScoreVector {
    ScoreVector(g.degrees().into_iter().map(|d| d as f64).collect())
}

/// PageRank on the undirected graph, each edge used in both directions.
///
/// Power iteration on `pr_i = (1-d)/N + d * sum_{j ~ i} pr_j / deg_j`, with
/// the mass of isolated nodes spread uniformly. Stops once the max-norm change
/// between sweeps drops below `tol`.
pub fn pagerank_scores(g: &Graph, damping: f64, tol: f64, max_iter: usize) -> Result<ScoreVector> {
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::InvalidParameter(format!("damping must lie in (0, 1), got {damping}")));
    }
    let n = g.node_count();
    if n == 0 {
        return Ok(ScoreVector(Vec::new()));
    }
    let deg = g.degrees();
    let mut pr = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let dangling: f64 = (0..n).filter(|&i| deg[i] == 0).map(|i| pr[i]).sum();
        let base = (1.0 - damping) / n as f64 + damping * dangling / n as f64;
        for (i, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = g.neighbors(i)?.iter().map(|&j| pr[j] / deg[j] as f64).sum();
            *slot = base + damping * inflow;
        }
        residual = pr.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut pr, &mut next);
        if residual < tol {
            let total: f64 = pr.iter().sum();
            return Ok(ScoreVector(pr.into_iter().map(|v| v / total).collect()));
        }
    }
    Err(Error::PageRankNotConverged { iterations: max_iter, residual })
}

/// Brandes betweenness: for each source, BFS then back-propagate pair
/// dependencies. Each unordered pair is counted once (raw pair counts, not
/// normalized), so endpoints and leaves score exactly zero.
pub fn betweenness_scores(g: &Graph) -> ScoreVector {
    let n = g.node_count();
    let mut bc = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();

    for s in 0..n {
        sigma.iter_mut().for_each(|v| *v = 0.0);
        dist.iter_mut().for_each(|v| *v = usize::MAX);
        delta.iter_mut().for_each(|v| *v = 0.0);
        preds.iter_mut().for_each(Vec::clear);
        order.clear();

        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in g.neighbors(v).expect("index in range") {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    ScoreVector(bc.into_iter().map(|v| v / 2.0).collect())
}

/// Adds `beta` to every score so that zero-betweenness nodes keep a positive probability.
pub fn shifted_scores(s: &ScoreVector, beta: f64) -> Result<ScoreVector> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    Ok(ScoreVector(s.0.iter().map(|v| v + beta).collect()))
}

/// `0.01 * max(score)`, or `0.01` when every score is zero.
pub fn default_beta(s: &ScoreVector) -> f64 {
    let max = s.max();
    1e-2 * if max > 0.0 { max } else { 1.0 }
}

/// `p_i = min(1, gamma * s_i)` with `gamma` chosen so that `sum(p) = K`.
///
/// The sum is piecewise linear and increasing in `gamma` with breakpoints at
/// `1 / s_i`. Walking the scores in decreasing order, the first prefix of
/// capped nodes whose complementary `gamma` leaves the next node uncapped is
/// the solution.
pub fn probability_vector(s: &ScoreVector, budget: f64) -> Result<ProbabilityVector> {
    let n = s.len();
    check_budget(budget, n)?;
    if let Some((index, &value)) = s.0.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositiveScore { index, value });
    }
    if budget >= n as f64 {
        return Ok(ProbabilityVector::ones(n));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.0[b].total_cmp(&s.0[a]).then(a.cmp(&b)));
    // suffix[m] = sum of all but the m largest scores, accumulated from the smallest.
    let mut suffix = vec![0.0; n + 1];
    for m in (0..n).rev() {
        suffix[m] = suffix[m + 1] + s.0[order[m]];
    }
    let mut p = vec![0.0; n];
    for (capped, &top) in order.iter().enumerate() {
        let gamma = (budget - capped as f64) / suffix[capped];
        if gamma * s.0[top] <= 1.0 {
            for &i in &order[capped..] {
                p[i] = (gamma * s.0[i]).min(1.0);
            }
            return ProbabilityVector::with_budget(p, budget);
        }
        p[top] = 1.0;
    }
    unreachable!("budget below n always leaves an uncapped node")
}

pub fn degree_probabilities(g: &Graph, budget: f64) -> Result<ProbabilityVector> {
    probability_vector(&degree_scores(g), budget)
}

pub fn pagerank_probabilities(g: &Graph, budget: f64, damping: f64) -> Result<ProbabilityVector> {
    let pr = pagerank_scores(g, damping, DEFAULT_PAGERANK_TOL, DEFAULT_PAGERANK_MAX_ITER)?;
    probability_vector(&pr, budget)
}

/// Betweenness shifted by `beta` (or [`default_beta`] when `None`).
pub fn betweenness_probabilities(g: &Graph, budget: f64, beta: Option<f64>) -> Result<ProbabilityVector> {
    let b = betweenness_scores(g);
    let beta = beta.unwrap_or_else(|| default_beta(&b));
    probability_vector(&shifted_scores(&b, beta)?, budget)
}
