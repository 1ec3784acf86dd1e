//! Tree-factored histogram densities: rooting and renumbering a spanning
//! tree, fitting the ratio-of-histograms density, evaluating it, sampling
//! from it, and persisting it.
//!
//! After renumbering, vertex `d-1` (0-based) is the root, every other
//! vertex `i` has a parent with a larger index, and the tail set
//! `{i, .., d-1}` always induces a subtree in which `i` is a leaf. The
//! fitted density is the product of one conditional histogram ratio per
//! edge and the root marginal histogram; a zero pair count anywhere makes
//! the density zero (the 0/0 = 0 convention for empty parent cells).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histograms::{
    build_marginal_histogram, cell_column, pair_from_cells, Dataset, MarginalHistogram,
    PairHistogram, Partition1D,
};
use crate::rng::{self, tag};
use crate::tree::SpanningTree;

/// A rooted renumbering of a spanning tree. Indices are 0-based in code;
/// the root is the highest index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedOrder {
    new_to_orig: Vec<usize>,
    orig_to_new: Vec<usize>,
    /// parent[k] = new index of the parent of new vertex k (k < d-1).
    parent: Vec<usize>,
    root_orig: usize,
}

impl RootedOrder {
    pub fn d(&self) -> usize {
        self.new_to_orig.len()
    }

    pub fn root_original(&self) -> usize {
        self.root_orig
    }

    pub fn new_to_original(&self, k: usize) -> usize {
        self.new_to_orig[k]
    }

    pub fn original_to_new(&self, v: usize) -> usize {
        self.orig_to_new[v]
    }

    pub fn parent_of(&self, k: usize) -> usize {
        self.parent[k]
    }

    /// The underlying spanning tree in original labels.
    pub fn tree(&self) -> SpanningTree {
        let d = self.d();
        let edges = (0..d - 1)
            .map(|k| (self.new_to_orig[k], self.new_to_orig[self.parent[k]]))
            .collect();
        SpanningTree::new(d, edges).expect("rooted order encodes a tree")
    }
}

/// Root `tree` at `root` and renumber by reversed breadth-first order:
/// vertices sorted by decreasing depth, ties by ascending original label.
pub fn root_and_order(tree: &SpanningTree, root: usize) -> Result<RootedOrder> {
    let d = tree.d();
    if root >= d {
        return Err(Error::VertexOutOfRange { vertex: root, d });
    }
    let adj = tree.adjacency();
    let mut depth = vec![usize::MAX; d];
    let mut parent_orig = vec![usize::MAX; d];
    let mut queue = std::collections::VecDeque::new();
    depth[root] = 0;
    queue.push_back(root);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if depth[w] == usize::MAX {
                depth[w] = depth[v] + 1;
                parent_orig[w] = v;
                queue.push_back(w);
            }
        }
    }
    debug_assert!(depth.iter().all(|&dv| dv != usize::MAX));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(depth[v]), v));
    let new_to_orig = order;
    let mut orig_to_new = vec![0; d];
    for (k, &v) in new_to_orig.iter().enumerate() {
        orig_to_new[v] = k;
    }
    let parent = (0..d - 1)
        .map(|k| orig_to_new[parent_orig[new_to_orig[k]]])
        .collect();
    Ok(RootedOrder {
        new_to_orig,
        orig_to_new,
        parent,
        root_orig: root,
    })
}

/// Default root choice: the vertex of maximum degree, ties broken by the
/// smallest original label.
pub fn default_root(tree: &SpanningTree) -> usize {
    let mut best = 0;
    let mut best_deg = tree.degree(0);
    for v in 1..tree.d() {
        let deg = tree.degree(v);
        if deg > best_deg {
            best = v;
            best_deg = deg;
        }
    }
    best
}

/// One conditional factor of the fitted density: the pair histogram of
/// (child, parent) columns together with its exact parent marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeHistogram {
    child_orig: usize,
    parent_orig: usize,
    pairs: PairHistogram,
    parent_marginal: MarginalHistogram,
}

impl EdgeHistogram {
    pub fn child_original(&self) -> usize {
        self.child_orig
    }

    pub fn parent_original(&self) -> usize {
        self.parent_orig
    }

    pub fn pairs(&self) -> &PairHistogram {
        &self.pairs
    }

    pub fn parent_marginal(&self) -> &MarginalHistogram {
        &self.parent_marginal
    }
}

/// A fitted tree density: root marginal plus one pair histogram per edge,
/// all sharing one bin width and sample count. Immutable once fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeDensityModel {
    order: RootedOrder,
    partition: Partition1D,
    n: u64,
    root_marginal: MarginalHistogram,
    edges: Vec<EdgeHistogram>,
    provenance: Option<serde_json::Value>,
}

/// Outcome of the exact integer normalization audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalizationReport {
    pub ok: bool,
    /// Largest absolute count discrepancy found (0 for any honest fit).
    pub max_deviation: u64,
}

pub fn fit_tree_density(
    data: &Dataset,
    order: &RootedOrder,
    partition: Partition1D,
) -> Result<TreeDensityModel> {
    let d = order.d();
    if data.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: data.d(),
        });
    }
    let columns: Vec<Vec<i64>> = (0..d).map(|c| cell_column(data, c, partition)).collect();
    let root_marginal = build_marginal_histogram(data, order.root_original(), partition)?;
    let edges = (0..d - 1)
        .map(|k| {
            let child_orig = order.new_to_original(k);
            let parent_orig = order.new_to_original(order.parent_of(k));
            let pairs = pair_from_cells(&columns[child_orig], &columns[parent_orig], partition);
            let parent_marginal = pairs.marginal_axis2();
            EdgeHistogram {
                child_orig,
                parent_orig,
                pairs,
                parent_marginal,
            }
        })
        .collect();
    Ok(TreeDensityModel {
        order: order.clone(),
        partition,
        n: data.n() as u64,
        root_marginal,
        edges,
        provenance: None,
    })
}

impl TreeDensityModel {
    pub fn d(&self) -> usize {
        self.order.d()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn partition(&self) -> Partition1D {
        self.partition
    }

    pub fn order(&self) -> &RootedOrder {
        &self.order
    }

    pub fn tree(&self) -> SpanningTree {
        self.order.tree()
    }

    pub fn root_marginal(&self) -> &MarginalHistogram {
        &self.root_marginal
    }

    pub fn edge_histograms(&self) -> &[EdgeHistogram] {
        &self.edges
    }

    pub fn provenance(&self) -> Option<&serde_json::Value> {
        self.provenance.as_ref()
    }

    pub fn set_provenance(&mut self, value: serde_json::Value) {
        self.provenance = Some(value);
    }

    /// Log density at a point, or -inf where the fitted density vanishes.
    pub fn eval_log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: x.len(),
            });
        }
        for (i, v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteCoordinate { index: i });
            }
        }
        let cells: Vec<i64> = x.iter().map(|&v| self.partition.cell_index(v)).collect();
        Ok(self.cell_log_density(&cells))
    }

    /// Density at a point (never negative; zero off the support).
    pub fn eval_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval_log_density(x)?.exp())
    }

    /// Log density as a function of the cell-index vector (indexed by
    /// original column). The density is piecewise constant, so this is the
    /// whole story.
    ///
    /// Factor counts shared between numerator and denominator are cancelled
    /// exactly before any float arithmetic; the factorization telescopes at
    /// the integer level, which in particular keeps the d = 2 model
    /// bit-identical to the plain bivariate histogram.
    pub fn cell_log_density(&self, cells: &[i64]) -> f64 {
        assert_eq!(cells.len(), self.d());
        let mut nums: Vec<u64> = Vec::with_capacity(self.d());
        let mut dens: Vec<u64> = Vec::with_capacity(self.d());
        for e in &self.edges {
            let c_ab = e.pairs.count(cells[e.child_orig], cells[e.parent_orig]);
            if c_ab == 0 {
                return f64::NEG_INFINITY;
            }
            nums.push(c_ab);
            dens.push(e.parent_marginal.count(cells[e.parent_orig]));
        }
        let c_root = self.root_marginal.count(cells[self.order.root_original()]);
        if c_root == 0 {
            return f64::NEG_INFINITY;
        }
        nums.push(c_root);
        dens.push(self.n);

        nums.sort_unstable();
        dens.sort_unstable();
        // multiset difference: equal counts cancel exactly
        let mut rem_nums = Vec::new();
        let mut rem_dens = Vec::new();
        let mut i = 0;
        let mut j = 0;
        while i < nums.len() && j < dens.len() {
            match nums[i].cmp(&dens[j]) {
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => {
                    rem_nums.push(nums[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    rem_dens.push(dens[j]);
                    j += 1;
                }
            }
        }
        rem_nums.extend_from_slice(&nums[i..]);
        rem_dens.extend_from_slice(&dens[j..]);
        let mut acc = 0.0f64;
        for &c in &rem_nums {
            acc += (c as f64).ln();
        }
        for &c in &rem_dens {
            acc -= (c as f64).ln();
        }
        acc -= self.d() as f64 * self.partition.bin_width().ln();
        acc
    }

    /// Exact integer audit of the facts that make the fitted density
    /// integrate to one: the root marginal and every pair histogram sum to
    /// n, and each edge's parent-axis marginal coincides with the parent's
    /// own histogram (the root marginal, or the child-axis marginal of the
    /// parent's edge). Reports the largest discrepancy instead of erroring.
    pub fn verify_normalization(&self) -> NormalizationReport {
        let mut max_dev: u64 = 0;
        let mut track = |a: u64, b: u64| {
            let dev = a.abs_diff(b);
            if dev > max_dev {
                max_dev = dev;
            }
        };
        let root_total: u64 = self.root_marginal.occupied().map(|(_, c)| c).sum();
        track(root_total, self.n);
        for e in &self.edges {
            let pair_total: u64 = e.pairs.occupied().map(|(_, c)| c).sum();
            track(pair_total, self.n);
            let derived = e.pairs.marginal_axis2();
            let reference = if e.parent_orig == self.order.root_original() {
                self.root_marginal.clone()
            } else {
                self.edges[self.order.original_to_new(e.parent_orig)]
                    .pairs
                    .marginal_axis1()
            };
            let keys: std::collections::BTreeSet<i64> = derived
                .occupied()
                .map(|(k, _)| k)
                .chain(reference.occupied().map(|(k, _)| k))
                .collect();
            for k in keys {
                track(derived.count(k), reference.count(k));
            }
        }
        NormalizationReport {
            ok: max_dev == 0,
            max_deviation: max_dev,
        }
    }

    /// Ancestral sampling: the root cell is drawn from its count
    /// distribution, each child cell from the conditional given the
    /// parent's realized cell, and every coordinate is uniform within its
    /// cell. Each output row uses its own derived random stream, so the
    /// result depends only on `(seed, m)`, not on chunking or workers;
    /// rows are generated in parallel under the `parallel` feature.
    pub fn sample(&self, seed: u64, m: usize) -> Result<Dataset> {
        use rand::Rng;
        assert!(m >= 1, "sample count must be positive");
        let d = self.d();
        let h = self.partition.bin_width();

        let root_table = cumulative(self.root_marginal.occupied());
        let edge_tables: Vec<ConditionalTable> = self
            .edges
            .iter()
            .map(|e| {
                let mut rows: BTreeMap<i64, Vec<(i64, u64)>> = BTreeMap::new();
                for ((a, b), c) in e.pairs.occupied() {
                    rows.entry(b).or_default().push((a, c));
                }
                rows.into_iter()
                    .map(|(b, row)| {
                        let total = row.iter().map(|&(_, c)| c).sum();
                        (b, (total, cumulative(row.into_iter())))
                    })
                    .collect()
            })
            .collect();

        let indices: Vec<usize> = (0..m).collect();
        let rows = crate::par::map_ordered(&indices, |&idx| -> Result<Vec<f64>> {
            let mut rng = rng::substream(seed, &[tag::MODEL_SAMPLE, idx as u64]);
            let mut cells = vec![0i64; d];
            let t = rng.gen_range(0..self.n);
            cells[d - 1] = pick(&root_table, t);
            for k in (0..d - 1).rev() {
                let b = cells[self.order.parent_of(k)];
                let (total, row) = edge_tables[k].get(&b).ok_or_else(|| {
                    Error::ModelSchema("conditional row missing for a sampled parent cell".into())
                })?;
                let t = rng.gen_range(0..*total);
                cells[k] = pick(row, t);
            }
            let mut row = vec![0.0f64; d];
            for k in 0..d {
                let u: f64 = rng.gen();
                row[self.order.new_to_original(k)] = (cells[k] as f64 + u) * h;
            }
            Ok(row)
        });
        let mut values = Vec::with_capacity(m * d);
        for row in rows {
            values.extend(row?);
        }
        Dataset::new(values, m, d, None)
    }

    /// All cell-index vectors of positive mass with their exact model
    /// probabilities. Vectors are indexed by original column. Intended for
    /// small models (the combination count is the product of conditional
    /// branching factors).
    pub fn cell_masses(&self) -> Vec<(Vec<i64>, f64)> {
        let d = self.d();
        let n = self.n as f64;
        // (cells by new index, probability), root assigned first
        let mut states: Vec<(Vec<i64>, f64)> = self
            .root_marginal
            .occupied()
            .map(|(cell, c)| {
                let mut cells = vec![i64::MIN; d];
                cells[d - 1] = cell;
                (cells, c as f64 / n)
            })
            .collect();
        for k in (0..d - 1).rev() {
            let e = &self.edges[k];
            let mut rows: BTreeMap<i64, Vec<(i64, u64)>> = BTreeMap::new();
            for ((a, b), c) in e.pairs.occupied() {
                rows.entry(b).or_default().push((a, c));
            }
            let mut next = Vec::with_capacity(states.len());
            for (cells, p) in states {
                let b = cells[self.order.parent_of(k)];
                let total = e.parent_marginal.count(b) as f64;
                if let Some(row) = rows.get(&b) {
                    for &(a, c) in row {
                        let mut cells = cells.clone();
                        cells[k] = a;
                        next.push((cells, p * c as f64 / total));
                    }
                }
            }
            states = next;
        }
        states
            .into_iter()
            .map(|(by_new, p)| {
                let mut by_orig = vec![0i64; d];
                for (k, &cell) in by_new.iter().enumerate() {
                    by_orig[self.order.new_to_original(k)] = cell;
                }
                (by_orig, p)
            })
            .collect()
    }

    /// Serialize to the self-contained JSON model format.
    pub fn to_json(&self) -> String {
        let d = self.d();
        let file = ModelFile {
            d,
            n: self.n,
            h: self.partition.bin_width(),
            anchor: 0.0,
            root_original_label: self.order.root_original() + 1,
            permutation: (0..d).map(|v| self.order.original_to_new(v) + 1).collect(),
            parent: (0..d - 1).map(|k| self.order.parent_of(k) + 1).collect(),
            root_marginal: self.root_marginal.occupied().collect(),
            edges: self
                .edges
                .iter()
                .map(|e| ModelFileEdge {
                    child: e.child_orig + 1,
                    parent: e.parent_orig + 1,
                    cells: e.pairs.occupied().map(|((a, b), c)| (a, b, c)).collect(),
                })
                .collect(),
            provenance: self.provenance.clone(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("model serializes");
        out.push('\n');
        out
    }

    /// Load a model from its JSON form, validating the schema and the
    /// count structure. Reloaded models evaluate bit-identically.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let bad = |msg: &str| Error::ModelSchema(msg.into());
        let d = file.d;
        if d < 2 {
            return Err(bad("dimension must be at least 2"));
        }
        if file.n == 0 {
            return Err(bad("sample count must be positive"));
        }
        if file.anchor != 0.0 {
            return Err(bad("only anchor 0 is supported"));
        }
        let partition = Partition1D::new(file.h).map_err(|_| bad("invalid bin width"))?;
        if file.permutation.len() != d {
            return Err(bad("permutation length must equal d"));
        }
        let mut new_to_orig = vec![usize::MAX; d];
        for (orig, &new_label) in file.permutation.iter().enumerate() {
            if !(1..=d).contains(&new_label) || new_to_orig[new_label - 1] != usize::MAX {
                return Err(bad("permutation is not a bijection onto 1..=d"));
            }
            new_to_orig[new_label - 1] = orig;
        }
        let orig_to_new: Vec<usize> = file.permutation.iter().map(|&p| p - 1).collect();
        if file.parent.len() != d - 1 {
            return Err(bad("parent list length must equal d-1"));
        }
        let mut parent = Vec::with_capacity(d - 1);
        for (k, &p) in file.parent.iter().enumerate() {
            if !(1..=d).contains(&p) || p - 1 <= k {
                return Err(bad("each parent must have a larger renumbered index"));
            }
            parent.push(p - 1);
        }
        let root_orig = new_to_orig[d - 1];
        if file.root_original_label != root_orig + 1 {
            return Err(bad("root label disagrees with the permutation"));
        }
        let order = RootedOrder {
            new_to_orig,
            orig_to_new,
            parent,
            root_orig,
        };

        let root_counts: BTreeMap<i64, u64> = file.root_marginal.iter().copied().collect();
        if root_counts.len() != file.root_marginal.len() {
            return Err(bad("duplicate root marginal cells"));
        }
        let root_marginal = MarginalHistogram::from_counts(partition, root_counts, file.n)
            .map_err(|e| bad(&format!("root marginal: {e}")))?;

        if file.edges.len() != d - 1 {
            return Err(bad("edge list length must equal d-1"));
        }
        let mut edges = Vec::with_capacity(d - 1);
        for (k, fe) in file.edges.iter().enumerate() {
            if fe.child != order.new_to_original(k) + 1
                || fe.parent != order.new_to_original(order.parent_of(k)) + 1
            {
                return Err(bad("edge labels disagree with permutation and parents"));
            }
            let counts: BTreeMap<(i64, i64), u64> =
                fe.cells.iter().map(|&(a, b, c)| ((a, b), c)).collect();
            if counts.len() != fe.cells.len() {
                return Err(bad("duplicate pair cells"));
            }
            let pairs = PairHistogram::from_counts(partition, counts, file.n)
                .map_err(|e| bad(&format!("edge {k}: {e}")))?;
            let parent_marginal = pairs.marginal_axis2();
            edges.push(EdgeHistogram {
                child_orig: fe.child - 1,
                parent_orig: fe.parent - 1,
                pairs,
                parent_marginal,
            });
        }
        Ok(Self {
            order,
            partition,
            n: file.n,
            root_marginal,
            edges,
            provenance: file.provenance,
        })
    }
}

/// Per-parent-cell conditional sampling rows: total count plus cumulative
/// child-cell counts.
type ConditionalTable = BTreeMap<i64, (u64, Vec<(i64, u64)>)>;

fn cumulative(counts: impl Iterator<Item = (i64, u64)>) -> Vec<(i64, u64)> {
    let mut cum = 0u64;
    counts
        .map(|(cell, c)| {
            cum += c;
            (cell, cum)
        })
        .collect()
}

/// Smallest entry whose cumulative count exceeds `t`.
fn pick(table: &[(i64, u64)], t: u64) -> i64 {
    let idx = table.partition_point(|&(_, cum)| cum <= t);
    table[idx].0
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    d: usize,
    n: u64,
    h: f64,
    anchor: f64,
    root_original_label: usize,
    permutation: Vec<usize>,
    parent: Vec<usize>,
    root_marginal: Vec<(i64, u64)>,
    edges: Vec<ModelFileEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct ModelFileEdge {
    child: usize,
    parent: usize,
    cells: Vec<(i64, i64, u64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histograms::build_pair_histogram;
    use rand::Rng;

    fn dataset(rows: &[&[f64]]) -> Dataset {
        let d = rows[0].len();
        let values: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Dataset::new(values, rows.len(), d, None).unwrap()
    }

    #[test]
    fn chain_rooted_at_end_keeps_identity_order() {
        let tree = SpanningTree::chain(3);
        let order = root_and_order(&tree, 2).unwrap();
        assert_eq!(order.new_to_orig, vec![0, 1, 2]);
        assert_eq!(order.parent, vec![1, 2]);
        assert_eq!(order.root_original(), 2);
        assert_eq!(order.tree(), tree);
    }

    #[test]
    fn star_leaves_come_first_in_label_order() {
        let tree = SpanningTree::star(3, 1);
        let order = root_and_order(&tree, 1).unwrap();
        assert_eq!(order.new_to_orig, vec![0, 2, 1]);
        assert_eq!(order.parent, vec![2, 2]);
    }

    #[test]
    fn random_trees_satisfy_order_invariants() {
        let mut rng = crate::rng::substream(42, &[99]);
        let d = 6;
        let all: Vec<SpanningTree> = crate::tree::enumerate_spanning_trees(d).unwrap().collect();
        for _ in 0..100 {
            let tree = &all[rng.gen_range(0..all.len())];
            let root = rng.gen_range(0..d);
            let order = root_and_order(tree, root).unwrap();
            for k in 0..d - 1 {
                assert!(order.parent_of(k) > k);
            }
            // {k, .., d-1} induces a connected subgraph with k a leaf
            for k in 0..d {
                let members: Vec<usize> = (k..d).map(|m| order.new_to_original(m)).collect();
                let sub_edges: Vec<(usize, usize)> = tree
                    .edges()
                    .iter()
                    .copied()
                    .filter(|&(i, j)| members.contains(&i) && members.contains(&j))
                    .collect();
                assert_eq!(sub_edges.len(), d - k - 1, "induced subtree edge count");
                if k < d - 1 {
                    let leaf = order.new_to_original(k);
                    let deg = sub_edges
                        .iter()
                        .filter(|&&(i, j)| i == leaf || j == leaf)
                        .count();
                    assert_eq!(deg, 1, "new vertex {k} must be a leaf of the tail subtree");
                }
            }
            assert_eq!(&order.tree(), tree);
        }
    }

    #[test]
    fn default_root_prefers_high_degree_then_low_label() {
        assert_eq!(default_root(&SpanningTree::star(5, 3)), 3);
        assert_eq!(default_root(&SpanningTree::chain(4)), 1);
    }

    #[test]
    fn d2_model_is_bit_identical_to_bivariate_histogram() {
        let mut rng = crate::rng::substream(7, &[1]);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let ds = dataset(&rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
        let partition = Partition1D::new(0.21).unwrap();
        let order = root_and_order(&SpanningTree::chain(2), 1).unwrap();
        let model = fit_tree_density(&ds, &order, partition).unwrap();
        let hist = build_pair_histogram(&ds, 0, 1, partition).unwrap();
        let n = ds.n() as f64;
        let h = partition.bin_width();
        for _ in 0..2000 {
            let x = [rng.gen::<f64>() * 1.4 - 0.2, rng.gen::<f64>() * 1.4 - 0.2];
            let c = hist.count(partition.cell_index(x[0]), partition.cell_index(x[1]));
            let want = if c == 0 {
                f64::NEG_INFINITY
            } else {
                (c as f64).ln() - n.ln() - 2.0 * h.ln()
            };
            let got = model.eval_log_density(&x).unwrap();
            assert_eq!(got, want, "exact equality at {x:?}");
        }
    }

    #[test]
    fn single_sample_model_is_uniform_on_one_cell_product() {
        let ds = dataset(&[&[0.3, 0.7, 0.1]]);
        let h = 0.5;
        let partition = Partition1D::new(h).unwrap();
        let tree = SpanningTree::chain(3);
        let order = root_and_order(&tree, default_root(&tree)).unwrap();
        let model = fit_tree_density(&ds, &order, partition).unwrap();
        let inside = model.eval_density(&[0.4, 0.6, 0.2]).unwrap();
        assert!((inside - 1.0 / h.powi(3)).abs() < 1e-12);
        assert_eq!(model.eval_density(&[0.6, 0.6, 0.2]).unwrap(), 0.0);
        // every sampled point stays inside the training cell product
        let samples = model.sample(5, 50).unwrap();
        for r in 0..samples.n() {
            let row = samples.row(r);
            assert_eq!(partition.cell_index(row[0]), 0);
            assert_eq!(partition.cell_index(row[1]), 1);
            assert_eq!(partition.cell_index(row[2]), 0);
        }
    }

    #[test]
    fn unseen_parent_cell_gives_zero_density() {
        let ds = dataset(&[&[0.1, 0.1], &[0.6, 0.6], &[0.8, 0.9]]);
        let partition = Partition1D::new(0.5).unwrap();
        let order = root_and_order(&SpanningTree::chain(2), 1).unwrap();
        let model = fit_tree_density(&ds, &order, partition).unwrap();
        assert_eq!(
            model.eval_log_density(&[0.1, 5.0]).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(model.eval_density(&[0.1, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn eval_rejects_bad_points() {
        let ds = dataset(&[&[0.1, 0.1], &[0.6, 0.6]]);
        let partition = Partition1D::new(0.5).unwrap();
        let order = root_and_order(&SpanningTree::chain(2), 1).unwrap();
        let model = fit_tree_density(&ds, &order, partition).unwrap();
        assert!(matches!(
            model.eval_log_density(&[0.1]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            model.eval_log_density(&[0.1, f64::NAN]),
            Err(Error::NonFiniteCoordinate { index: 1 })
        ));
    }

    #[test]
    fn fit_rejects_dimension_mismatch() {
        let ds = dataset(&[&[0.1, 0.2, 0.3]]);
        let partition = Partition1D::new(0.5).unwrap();
        let order = root_and_order(&SpanningTree::chain(2), 1).unwrap();
        assert!(matches!(
            fit_tree_density(&ds, &order, partition),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn normalization_holds_for_fits_and_detects_corruption() {
        let mut rng = crate::rng::substream(3, &[5]);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..4).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let ds = dataset(&rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
        let partition = Partition1D::new(0.3).unwrap();
        let tree = SpanningTree::star(4, 2);
        let order = root_and_order(&tree, default_root(&tree)).unwrap();
        let model = fit_tree_density(&ds, &order, partition).unwrap();
        let report = model.verify_normalization();
        assert!(report.ok);
        assert_eq!(report.max_deviation, 0);

        // corrupt one edge histogram while preserving its total count
        let mut json: serde_json::Value = serde_json::from_str(&model.to_json()).unwrap();
        let cells = json["edges"][0]["cells"].as_array_mut().unwrap();
        assert!(cells.len() >= 2);
        let c0 = cells[0][2].as_u64().unwrap();
        let c1 = cells[1][2].as_u64().unwrap();
        cells[0][2] = (c0 + 1).into();
        cells[1][2] = (c1 - 1).into();
        let corrupted = TreeDensityModel::from_json(&json.to_string()).unwrap();
        let report = corrupted.verify_normalization();
        assert!(!report.ok);
        assert!(report.max_deviation >= 1);
    }

    #[test]
    fn json_round_trip_reproduces_evaluations_bit_for_bit() {
        let mut rng = crate::rng::substream(11, &[4]);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..5).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let ds = dataset(&rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
        let partition = Partition1D::new(0.17).unwrap();
        let all: Vec<SpanningTree> = crate::tree::enumerate_spanning_trees(5).unwrap().collect();
        let tree = &all[37];
        let order = root_and_order(tree, default_root(tree)).unwrap();
        let model = fit_tree_density(&ds, &order, partition).unwrap();
        let json = model.to_json();
        let reloaded = TreeDensityModel::from_json(&json).unwrap();
        assert_eq!(reloaded, model);
        assert_eq!(reloaded.to_json(), json);
        for _ in 0..500 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
            assert_eq!(
                model.eval_log_density(&x).unwrap(),
                reloaded.eval_log_density(&x).unwrap()
            );
        }
    }

    #[test]
    fn model_load_rejects_schema_violations() {
        let ds = dataset(&[&[0.1, 0.6], &[0.6, 0.1], &[0.3, 0.4]]);
        let partition = Partition1D::new(0.5).unwrap();
        let order = root_and_order(&SpanningTree::chain(2), 1).unwrap();
        let model = fit_tree_density(&ds, &order, partition).unwrap();
        let good = model.to_json();

        let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
        v["permutation"] = serde_json::json!([1, 1]);
        assert!(TreeDensityModel::from_json(&v.to_string()).is_err());

        let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
        v["root_marginal"][0][1] = 77.into();
        assert!(TreeDensityModel::from_json(&v.to_string()).is_err());

        let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
        v["anchor"] = 0.5.into();
        assert!(TreeDensityModel::from_json(&v.to_string()).is_err());

        assert!(TreeDensityModel::from_json("{}").is_err());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut rng = crate::rng::substream(19, &[2]);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let ds = dataset(&rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
        let partition = Partition1D::new(0.25).unwrap();
        let tree = SpanningTree::chain(3);
        let order = root_and_order(&tree, default_root(&tree)).unwrap();
        let model = fit_tree_density(&ds, &order, partition).unwrap();
        let a = model.sample(123, 40).unwrap();
        let b = model.sample(123, 40).unwrap();
        assert_eq!(a, b);
        let c = model.sample(124, 40).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn cell_masses_sum_to_one_and_match_cell_density() {
        let mut rng = crate::rng::substream(31, &[8]);
        let rows: Vec<Vec<f64>> = (0..150)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let ds = dataset(&rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
        let partition = Partition1D::new(0.3).unwrap();
        let tree = SpanningTree::star(3, 0);
        let order = root_and_order(&tree, 0).unwrap();
        let model = fit_tree_density(&ds, &order, partition).unwrap();
        let masses = model.cell_masses();
        let total: f64 = masses.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let h3 = partition.bin_width().powi(3);
        for (cells, p) in &masses {
            let dens = model.cell_log_density(cells).exp();
            assert!((dens * h3 - p).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_cell_masses_are_root_invariant() {
        // for a chain the factorization telescopes to the same rational
        // cell mass whichever end is the root; compare exactly
        let mut rng = crate::rng::substream(57, &[3]);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let ds = dataset(&rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
        let partition = Partition1D::new(0.22).unwrap();
        let tree = SpanningTree::chain(3);
        let left = fit_tree_density(&ds, &root_and_order(&tree, 0).unwrap(), partition).unwrap();
        let right = fit_tree_density(&ds, &root_and_order(&tree, 2).unwrap(), partition).unwrap();
        // exact rational mass of a cell triple under either rooting is
        // c01(k0,k1) * c12(k1,k2) / (c1(k1) * n)
        let rational = |model: &TreeDensityModel, cells: &[i64]| -> (u128, u128) {
            let mut num: u128 = 1;
            let mut den: u128 = model.n() as u128;
            for e in model.edge_histograms() {
                num *= e
                    .pairs()
                    .count(cells[e.child_original()], cells[e.parent_original()])
                    as u128;
                den *= e.parent_marginal().count(cells[e.parent_original()]) as u128;
            }
            num *= model
                .root_marginal()
                .count(cells[model.order().root_original()]) as u128;
            // normalize the fraction by the gcd to compare canonically
            fn gcd(a: u128, b: u128) -> u128 {
                if b == 0 {
                    a
                } else {
                    gcd(b, a % b)
                }
            }
            if num == 0 {
                return (0, 1);
            }
            let g = gcd(num, den);
            (num / g, den / g)
        };
        for (cells, _) in left.cell_masses() {
            assert_eq!(rational(&left, &cells), rational(&right, &cells));
        }
        let left_set: std::collections::BTreeSet<Vec<i64>> =
            left.cell_masses().into_iter().map(|(c, _)| c).collect();
        let right_set: std::collections::BTreeSet<Vec<i64>> =
            right.cell_masses().into_iter().map(|(c, _)| c).collect();
        assert_eq!(left_set, right_set);
    }
}
