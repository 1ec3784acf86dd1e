//! Spanning-tree selection: Kruskal over mutual-information weights, plus
//! brute-force enumeration oracles.
//!
//! Vertices are 0-based in code; file formats and printed output use
//! 1-based labels.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mi::MIMatrix;

/// An undirected spanning tree on `{0, .., d-1}` in canonical form: each
/// edge stored with the smaller endpoint first, edges sorted
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpanningTree {
    d: usize,
    edges: Vec<(usize, usize)>,
}

impl SpanningTree {
    /// Validate and canonicalize an edge list.
    pub fn new(d: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidTree(format!("dimension {d} below 2")));
        }
        if edges.len() != d - 1 {
            return Err(Error::InvalidTree(format!(
                "expected {} edges, got {}",
                d - 1,
                edges.len()
            )));
        }
        let mut canon: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        let mut uf = UnionFind::new(d);
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidTree(format!("self loop at {i}")));
            }
            if i >= d || j >= d {
                return Err(Error::InvalidTree(format!("edge ({i},{j}) out of range")));
            }
            if !uf.union(i, j) {
                return Err(Error::InvalidTree(format!("edge ({i},{j}) closes a cycle")));
            }
            canon.push((i.min(j), i.max(j)));
        }
        // d-1 acyclic edges on d vertices are necessarily connected
        canon.sort_unstable();
        Ok(Self { d, edges: canon })
    }

    pub fn chain(d: usize) -> Self {
        Self::new(d, (0..d - 1).map(|i| (i, i + 1)).collect()).unwrap()
    }

    pub fn star(d: usize, center: usize) -> Self {
        assert!(center < d);
        Self::new(
            d,
            (0..d)
                .filter(|&v| v != center)
                .map(|v| (center, v))
                .collect(),
        )
        .unwrap()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(i, j)| i == v || j == v)
            .count()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.d];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for nb in &mut adj {
            nb.sort_unstable();
        }
        adj
    }

    /// One "i j" pair per line, 1-based.
    pub fn to_edge_list_text(&self) -> String {
        let mut out = String::new();
        for &(i, j) in &self.edges {
            out.push_str(&format!("{} {}\n", i + 1, j + 1));
        }
        out
    }

    /// Parse 1-based "i j" lines (the edge-list / candidate-mask format).
    pub fn parse_edge_pairs(text: &str) -> Result<Vec<(usize, usize)>> {
        let mut edges = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                let tok = tok.ok_or_else(|| Error::CsvParse {
                    row: idx + 1,
                    message: "expected two vertex labels".into(),
                })?;
                let v: usize = tok.parse().map_err(|_| Error::CsvParse {
                    row: idx + 1,
                    message: format!("not a vertex label: {tok:?}"),
                })?;
                if v == 0 {
                    return Err(Error::CsvParse {
                        row: idx + 1,
                        message: "vertex labels are 1-based".into(),
                    });
                }
                Ok(v - 1)
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::CsvParse {
                    row: idx + 1,
                    message: "expected exactly two vertex labels".into(),
                });
            }
            edges.push((i, j));
        }
        Ok(edges)
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            self.parent[x] = self.find(self.parent[x]);
        }
        self.parent[x]
    }

    /// Merge the sets of x and y; false if already joined.
    pub(crate) fn union(&mut self, x: usize, y: usize) -> bool {
        let rx = self.find(x);
        let ry = self.find(y);
        if rx == ry {
            return false;
        }
        if self.rank[rx] > self.rank[ry] {
            self.parent[ry] = rx;
        } else if self.rank[rx] < self.rank[ry] {
            self.parent[rx] = ry;
        } else {
            self.parent[ry] = rx;
            self.rank[rx] += 1;
        }
        true
    }
}

/// Maximum-weight spanning tree of the stored pairs by Kruskal's algorithm.
///
/// Edges are taken in order of (weight descending, smaller endpoint
/// ascending, larger endpoint ascending), which makes the result a
/// deterministic function of the weights. Weight comparisons are exact:
/// the output depends only on the ordering of the weights, so any strictly
/// increasing transform of all weights leaves it unchanged.
pub fn max_spanning_tree(mi: &MIMatrix) -> Result<SpanningTree> {
    let d = mi.d();
    if d < 2 {
        return Err(Error::InvalidTree(format!("dimension {d} below 2")));
    }
    let mut edges: Vec<((usize, usize), f64)> = mi.pairs().collect();
    edges.sort_by(|(e1, w1), (e2, w2)| w2.partial_cmp(w1).unwrap().then(e1.cmp(e2)));
    let mut uf = UnionFind::new(d);
    let mut chosen = Vec::with_capacity(d - 1);
    for ((i, j), _) in edges {
        if uf.union(i, j) {
            chosen.push((i, j));
            if chosen.len() == d - 1 {
                break;
            }
        }
    }
    if chosen.len() != d.saturating_sub(1) {
        return Err(Error::DisconnectedGraph);
    }
    SpanningTree::new(d, chosen)
}

const ENUM_MIN_D: usize = 2;
const ENUM_MAX_D: usize = 7;

/// All labeled spanning trees on d vertices, one per Prüfer sequence,
/// in canonical form. There are exactly d^(d-2) of them.
pub fn enumerate_spanning_trees(d: usize) -> Result<impl Iterator<Item = SpanningTree>> {
    if !(ENUM_MIN_D..=ENUM_MAX_D).contains(&d) {
        return Err(Error::DimensionOutOfRange {
            d,
            min: ENUM_MIN_D,
            max: ENUM_MAX_D,
        });
    }
    Ok(PruferTrees {
        d,
        seq: vec![0; d.saturating_sub(2)],
        done: false,
    })
}

struct PruferTrees {
    d: usize,
    seq: Vec<usize>,
    done: bool,
}

impl Iterator for PruferTrees {
    type Item = SpanningTree;

    fn next(&mut self) -> Option<SpanningTree> {
        if self.done {
            return None;
        }
        let tree = prufer_decode(self.d, &self.seq);
        // odometer over sequences in [0, d)^(d-2)
        let mut k = 0;
        loop {
            if k == self.seq.len() {
                self.done = true;
                break;
            }
            self.seq[k] += 1;
            if self.seq[k] < self.d {
                break;
            }
            self.seq[k] = 0;
            k += 1;
        }
        Some(tree)
    }
}

fn prufer_decode(d: usize, seq: &[usize]) -> SpanningTree {
    let mut degree = vec![1u32; d];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(d - 1);
    let mut used = vec![false; d];
    for &v in seq {
        let leaf = (0..d).find(|&u| degree[u] == 1 && !used[u]).unwrap();
        edges.push((leaf, v));
        used[leaf] = true;
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let mut rest = (0..d).filter(|&u| !used[u] && degree[u] == 1);
    let a = rest.next().unwrap();
    let b = rest.next().unwrap();
    edges.push((a, b));
    SpanningTree::new(d, edges).expect("Prüfer decode yields a valid tree")
}

const OPTIMAL_SET_TOL: f64 = 1e-9;

/// Total weight of a tree's edges, or None if an edge is outside the
/// stored (possibly masked) pairs.
pub fn tree_weight(mi: &MIMatrix, tree: &SpanningTree) -> Option<f64> {
    let mut total = 0.0;
    for &(i, j) in tree.edges() {
        total += mi.get(i, j)?;
    }
    Some(total)
}

/// Every spanning tree whose total weight is within 1e-9 of the maximum,
/// by exhaustive enumeration (d <= 7). Sorted canonical forms.
pub fn optimal_tree_set(mi: &MIMatrix) -> Result<Vec<SpanningTree>> {
    let scored: Vec<(SpanningTree, f64)> = enumerate_spanning_trees(mi.d())?
        .filter_map(|t| tree_weight(mi, &t).map(|w| (t, w)))
        .collect();
    if scored.is_empty() {
        return Err(Error::DisconnectedGraph);
    }
    let best = scored
        .iter()
        .map(|&(_, w)| w)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut set: Vec<SpanningTree> = scored
        .into_iter()
        .filter(|&(_, w)| w >= best - OPTIMAL_SET_TOL)
        .map(|(t, _)| t)
        .collect();
    set.sort();
    Ok(set)
}

/// Minimum gap among distinct stored weights, plus a count of exact ties.
#[derive(Debug, Clone, PartialEq)]
pub struct MIGapReport {
    /// Smallest positive difference between distinct weights; None when
    /// all weights are equal.
    pub delta: Option<f64>,
    /// Number of unordered pairs of stored weights that are exactly equal.
    pub tied_pairs: u64,
}

pub fn mi_gap(mi: &MIMatrix) -> Result<MIGapReport> {
    let mut weights: Vec<f64> = mi.pairs().map(|(_, w)| w).collect();
    if weights.len() < 2 {
        return Err(Error::TooFewWeights {
            got: weights.len(),
            min: 2,
        });
    }
    weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut delta = f64::INFINITY;
    let mut tied_pairs = 0u64;
    let mut run = 1u64;
    for k in 1..weights.len() {
        if weights[k] == weights[k - 1] {
            run += 1;
        } else {
            tied_pairs += run * (run - 1) / 2;
            run = 1;
            let gap = weights[k] - weights[k - 1];
            if gap < delta {
                delta = gap;
            }
        }
    }
    tied_pairs += run * (run - 1) / 2;
    Ok(MIGapReport {
        delta: if delta.is_finite() { Some(delta) } else { None },
        tied_pairs,
    })
}

/// Build an MIMatrix directly from a weight table (useful for oracles and
/// tests).
pub fn mi_from_weights(d: usize, weights: &BTreeMap<(usize, usize), f64>) -> MIMatrix {
    let mut m = MIMatrix::new(d);
    for (&(i, j), &w) in weights {
        m.insert(i, j, w);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(d: usize, entries: &[((usize, usize), f64)]) -> MIMatrix {
        let mut m = MIMatrix::new(d);
        for &((i, j), w) in entries {
            m.insert(i, j, w);
        }
        m
    }

    #[test]
    fn kruskal_picks_heaviest_acyclic_edges() {
        let m = matrix(3, &[((0, 1), 0.5), ((0, 2), 0.3), ((1, 2), 0.1)]);
        let t = max_spanning_tree(&m).unwrap();
        assert_eq!(t.edges(), &[(0, 1), (0, 2)]);
    }

    #[test]
    fn equal_weights_resolve_lexicographically() {
        let m = matrix(
            4,
            &[
                ((0, 1), 0.2),
                ((0, 2), 0.2),
                ((0, 3), 0.2),
                ((1, 2), 0.2),
                ((1, 3), 0.2),
                ((2, 3), 0.2),
            ],
        );
        let t = max_spanning_tree(&m).unwrap();
        assert_eq!(t.edges(), &[(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn masked_graph_must_connect() {
        let m = matrix(4, &[((0, 1), 0.9), ((2, 3), 0.8)]);
        assert!(matches!(
            max_spanning_tree(&m),
            Err(Error::DisconnectedGraph)
        ));
    }

    #[test]
    fn enumeration_counts_match_cayley() {
        for (d, expected) in [
            (2usize, 1usize),
            (3, 3),
            (4, 16),
            (5, 125),
            (6, 1296),
            (7, 16807),
        ] {
            let trees: Vec<SpanningTree> = enumerate_spanning_trees(d).unwrap().collect();
            assert_eq!(trees.len(), expected, "d={d}");
            let mut unique = trees.clone();
            unique.sort();
            unique.dedup();
            assert_eq!(unique.len(), expected, "d={d} duplicates");
        }
        assert!(enumerate_spanning_trees(1).is_err());
        assert!(enumerate_spanning_trees(8).is_err());
    }

    #[test]
    fn d2_has_single_tree() {
        let trees: Vec<SpanningTree> = enumerate_spanning_trees(2).unwrap().collect();
        assert_eq!(trees, vec![SpanningTree::new(2, vec![(0, 1)]).unwrap()]);
    }

    #[test]
    fn optimal_set_full_tie_and_chain() {
        let m = matrix(3, &[((0, 1), 0.4), ((0, 2), 0.4), ((1, 2), 0.4)]);
        assert_eq!(optimal_tree_set(&m).unwrap().len(), 3);

        let m = matrix(
            4,
            &[
                ((0, 1), 1.0),
                ((1, 2), 1.0),
                ((2, 3), 1.0),
                ((0, 2), 0.0),
                ((0, 3), 0.0),
                ((1, 3), 0.0),
            ],
        );
        let set = optimal_tree_set(&m).unwrap();
        assert_eq!(set, vec![SpanningTree::chain(4)]);
    }

    #[test]
    fn optimal_set_contains_kruskal_output() {
        let m = matrix(
            4,
            &[
                ((0, 1), 0.11),
                ((0, 2), 0.47),
                ((0, 3), 0.08),
                ((1, 2), 0.47),
                ((1, 3), 0.29),
                ((2, 3), 0.03),
            ],
        );
        let best = max_spanning_tree(&m).unwrap();
        assert!(optimal_tree_set(&m).unwrap().contains(&best));
    }

    #[test]
    fn gap_report_basics() {
        let m = matrix(3, &[((0, 1), 0.5), ((0, 2), 0.3), ((1, 2), 0.1)]);
        let rep = mi_gap(&m).unwrap();
        assert!((rep.delta.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(rep.tied_pairs, 0);

        let m = matrix(3, &[((0, 1), 0.4), ((0, 2), 0.4)]);
        let rep = mi_gap(&m).unwrap();
        assert_eq!(rep.delta, None);
        assert_eq!(rep.tied_pairs, 1);

        let m = matrix(3, &[((0, 1), 0.4)]);
        assert!(matches!(mi_gap(&m), Err(Error::TooFewWeights { .. })));
    }

    #[test]
    fn tree_validation_rejects_cycles_and_ranges() {
        assert!(SpanningTree::new(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(SpanningTree::new(3, vec![(0, 1)]).is_err());
        assert!(SpanningTree::new(3, vec![(0, 1), (1, 3)]).is_err());
        assert!(SpanningTree::new(3, vec![(0, 0), (1, 2)]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let t = SpanningTree::new(4, vec![(2, 0), (3, 2), (1, 2)]).unwrap();
        let text = t.to_edge_list_text();
        assert_eq!(text, "1 3\n2 3\n3 4\n");
        let edges = SpanningTree::parse_edge_pairs(&text).unwrap();
        assert_eq!(SpanningTree::new(4, edges).unwrap(), t);
        assert!(SpanningTree::parse_edge_pairs("0 1\n").is_err());
        assert!(SpanningTree::parse_edge_pairs("1 2 3\n").is_err());
    }
}
