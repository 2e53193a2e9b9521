//! The neighborhood graph over arms and its connected components.
//!
//! Adjacency is a square bit matrix, one row of `u64` words per arm, kept
//! symmetric. Edges are only ever deleted.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bounds::ConfidenceRadius;
use crate::error::{Error, Result};
use crate::model::ArmStats;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    n: usize,
    words: usize,
    bits: Vec<u64>,
    edge_count: usize,
}

impl NeighborGraph {
    /// The graph with all `n (n - 1) / 2` edges.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Param(format!(
                "a neighborhood graph needs at least 2 arms, got {n}"
            )));
        }
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; n * words];
        for i in 0..n {
            let row = &mut bits[i * words..(i + 1) * words];
            for j in 0..n {
                if j != i {
                    row[j / 64] |= 1 << (j % 64);
                }
            }
        }
        Ok(NeighborGraph {
            n,
            words,
            bits,
            edge_count: n * (n - 1) / 2,
        })
    }

    /// A graph on `n` arms holding exactly `edges`; repeated pairs count once.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::Param(format!(
                "a neighborhood graph needs at least 2 arms, got {n}"
            )));
        }
        let words = n.div_ceil(64);
        let mut g = NeighborGraph {
            n,
            words,
            bits: vec![0; n * words],
            edge_count: 0,
        };
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::Input(format!("invalid edge ({i}, {j}) for n = {n}")));
            }
            if !g.has_edge(i, j) {
                g.set(i, j);
                g.set(j, i);
                g.edge_count += 1;
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    #[inline]
    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }

    #[inline]
    fn clear(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] &= !(1 << (j % 64));
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    /// Removes edge `(i, j)`; returns whether it was present.
    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        if i == j || !self.has_edge(i, j) {
            return false;
        }
        self.clear(i, j);
        self.clear(j, i);
        self.edge_count -= 1;
        true
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Neighbors of `i` in ascending order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        BitIter::new(self.row(i))
    }

    /// All edges `(i, j)` with `i < j`, lexicographic.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    /// One debugging line: round, edge count, community sizes, edge list.
    pub fn dump_line(&self, round: u64, partition: &CommunityPartition) -> String {
        let mut line = format!("T={round} edges={} sizes=", self.edge_count);
        let sizes: Vec<String> = partition.iter().map(|(_, s)| s.to_string()).collect();
        line.push_str(&sizes.join(","));
        line.push_str(" E=");
        for (k, (i, j)) in self.edges().enumerate() {
            if k > 0 {
                line.push(',');
            }
            let _ = write!(line, "{i}-{j}");
        }
        line
    }
}

struct BitIter<'a> {
    words: &'a [u64],
    index: usize,
    current: u64,
}

impl<'a> BitIter<'a> {
    fn new(words: &'a [u64]) -> Self {
        BitIter {
            words,
            index: 0,
            current: words.first().copied().unwrap_or(0),
        }
    }
}

impl Iterator for BitIter<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        loop {
            if self.current != 0 {
                let bit = self.current.trailing_zeros() as usize;
                self.current &= self.current - 1;
                return Some(self.index * 64 + bit);
            }
            self.index += 1;
            if self.index >= self.words.len() {
                return None;
            }
            self.current = self.words[self.index];
        }
    }
}

/// Which edges [`prune_edges`] re-examines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneMode {
    /// Only edges incident to the arm just pulled. Produces the same graph
    /// as a full scan: every other edge keeps its left-hand side while its
    /// right-hand side grows with `T`.
    #[default]
    Incremental,
    /// Every present edge.
    FullScan,
}

/// Deletes the edges whose endpoints are no longer neighbors under
/// `coefficient * (beta_i + beta_j)`. Returns the number removed.
///
/// Every arm must have been pulled at least once.
pub fn prune_edges(
    graph: &mut NeighborGraph,
    stats: &[ArmStats],
    radius: &ConfidenceRadius,
    coefficient: f64,
    pulled: usize,
    mode: PruneMode,
) -> usize {
    debug_assert_eq!(stats.len(), graph.n);
    let mut removed = 0;
    match mode {
        PruneMode::Incremental => {
            let si = &stats[pulled];
            let beta_i = radius.radius(si);
            let mut doomed = Vec::new();
            for j in graph.neighbors(pulled) {
                let sj = &stats[j];
                if (si.mean - sj.mean).abs() > coefficient * (beta_i + radius.radius(sj)) {
                    doomed.push(j);
                }
            }
            for j in doomed {
                graph.remove_edge(pulled, j);
                removed += 1;
            }
        }
        PruneMode::FullScan => {
            let betas: Vec<f64> = stats.iter().map(|s| radius.radius(s)).collect();
            let doomed: Vec<(usize, usize)> = graph
                .edges()
                .filter(|&(i, j)| {
                    (stats[i].mean - stats[j].mean).abs() > coefficient * (betas[i] + betas[j])
                })
                .collect();
            for (i, j) in doomed {
                graph.remove_edge(i, j);
                removed += 1;
            }
        }
    }
    removed
}

/// Connected components of the graph. A community's id is its smallest arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityPartition {
    assignment: Vec<usize>,
    /// Indexed by community id; zero for ids that are not community ids.
    sizes: Vec<usize>,
}

impl CommunityPartition {
    pub fn community_of(&self, arm: usize) -> usize {
        self.assignment[arm]
    }

    /// Size of the community containing `arm`.
    pub fn community_size(&self, arm: usize) -> usize {
        self.sizes[self.assignment[arm]]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `(community id, size)` in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sizes
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .map(|(id, &s)| (id, s))
    }

    pub fn count(&self) -> usize {
        self.iter().count()
    }

    /// Members of community `id` in ascending order.
    pub fn members(&self, id: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&a| self.assignment[a] == id)
            .collect()
    }
}

/// Connected components by breadth-first search over bit rows.
pub fn communities(graph: &NeighborGraph) -> CommunityPartition {
    let n = graph.n;
    let words = graph.words;
    let mut unvisited = vec![0u64; words];
    for a in 0..n {
        unvisited[a / 64] |= 1 << (a % 64);
    }
    let mut assignment = vec![usize::MAX; n];
    let mut sizes = vec![0usize; n];
    let mut stack = Vec::with_capacity(n);
    for start in 0..n {
        if unvisited[start / 64] >> (start % 64) & 1 == 0 {
            continue;
        }
        unvisited[start / 64] &= !(1 << (start % 64));
        stack.push(start);
        let mut size = 0;
        while let Some(v) = stack.pop() {
            assignment[v] = start;
            size += 1;
            for (w, (row_word, free)) in graph.row(v).iter().zip(unvisited.iter_mut()).enumerate() {
                let mut fresh = row_word & *free;
                *free &= !fresh;
                while fresh != 0 {
                    let bit = fresh.trailing_zeros() as usize;
                    fresh &= fresh - 1;
                    stack.push(w * 64 + bit);
                }
            }
        }
        sizes[start] = size;
    }
    CommunityPartition { assignment, sizes }
}
