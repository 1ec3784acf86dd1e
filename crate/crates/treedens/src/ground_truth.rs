//! Synthetic tree-structured ground truths with exact evaluators, exact
//! ancestral samplers, quadrature mutual-information oracles, and known
//! optimal-tree sets.
//!
//! The family is built from the bivariate density
//! `c_a(x, y) = 1 + a (2x-1)(2y-1)` on the unit square (|a| < 1), one
//! factor per tree edge:
//!
//! `f(x) = prod over edges (i,j) of c_a(x_i, x_j)` on `[0,1]^d`.
//!
//! Every univariate marginal is uniform, and the bivariate marginal of any
//! pair (i, j) is again `c_alpha` with `alpha = prod(path couplings) /
//! 3^(path length - 1)`: integrating out a vertex kills every odd power of
//! `(2x-1)` and turns squares into 1/3. That closed form is what makes the
//! pairwise MI matrix, the optimal-tree set, and per-cell masses exactly
//! computable. The density is bounded, Lipschitz, and bounded away from
//! zero for |a| < 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histograms::Dataset;
use crate::mi::MIMatrix;
use crate::quadrature::{adaptive_2d, GaussRule};
use crate::rng::{self, tag};
use crate::tree::{optimal_tree_set, SpanningTree};

const MI_QUADRATURE_TOL: f64 = 1e-10;
const TRUE_MI_MAX_D: usize = 8;

/// Mutual information of the pair density `1 + alpha (2x-1)(2y-1)` with
/// uniform marginals, by adaptive quadrature (absolute error well below
/// 1e-8).
pub fn fgm_pair_mi(alpha: f64) -> f64 {
    assert!(alpha.abs() < 1.0, "coupling must satisfy |a| < 1");
    if alpha == 0.0 {
        return 0.0;
    }
    let f = |x: f64, y: f64| {
        let c = 1.0 + alpha * (2.0 * x - 1.0) * (2.0 * y - 1.0);
        if c <= 0.0 {
            0.0
        } else {
            c * c.ln()
        }
    };
    adaptive_2d(&f, 0.0, 1.0, 0.0, 1.0, MI_QUADRATURE_TOL).max(0.0)
}

/// A tree-structured ground-truth distribution on `[0,1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FgmTreeTruth {
    tree: SpanningTree,
    /// Couplings aligned with `tree.edges()` (canonical order).
    couplings: Vec<f64>,
    /// Sampling order (rooted at the default root).
    order: crate::density::RootedOrder,
    /// Edge coupling seen from each non-root vertex in sampling order.
    child_coupling: Vec<f64>,
    /// Path-product couplings for every vertex pair, row-major d x d.
    alphas: Vec<f64>,
}

impl FgmTreeTruth {
    pub fn new(tree: SpanningTree, couplings: &[f64]) -> Result<Self> {
        if couplings.len() != tree.edges().len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} couplings, got {}",
                tree.edges().len(),
                couplings.len()
            )));
        }
        for &a in couplings {
            if !(a.is_finite() && a.abs() < 1.0) {
                return Err(Error::InvalidCoupling(a));
            }
        }
        let d = tree.d();
        let root = crate::density::default_root(&tree);
        let order = crate::density::root_and_order(&tree, root)?;
        let coupling_of = |i: usize, j: usize| -> f64 {
            let key = (i.min(j), i.max(j));
            let pos = tree.edges().iter().position(|&e| e == key).unwrap();
            couplings[pos]
        };
        let child_coupling = (0..d - 1)
            .map(|k| {
                coupling_of(
                    order.new_to_original(k),
                    order.new_to_original(order.parent_of(k)),
                )
            })
            .collect();

        // all-pairs path products via one BFS per source
        let adj = tree.adjacency();
        let mut alphas = vec![0.0f64; d * d];
        for src in 0..d {
            let mut seen = vec![false; d];
            let mut queue = std::collections::VecDeque::new();
            seen[src] = true;
            // (vertex, coupling product along path, path length)
            queue.push_back((src, 1.0f64, 0usize));
            while let Some((v, prod, len)) = queue.pop_front() {
                if len > 0 {
                    alphas[src * d + v] = prod / 3f64.powi(len as i32 - 1);
                }
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back((w, prod * coupling_of(v, w), len + 1));
                    }
                }
            }
        }
        Ok(Self {
            tree,
            couplings: couplings.to_vec(),
            order,
            child_coupling,
            alphas,
        })
    }

    /// The independent uniform distribution on `[0,1]^d` (all couplings 0).
    pub fn independent(d: usize) -> Self {
        Self::new(SpanningTree::chain(d), &vec![0.0; d - 1]).unwrap()
    }

    pub fn d(&self) -> usize {
        self.tree.d()
    }

    pub fn tree(&self) -> &SpanningTree {
        &self.tree
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    /// Effective coupling of the bivariate (i, j) marginal: the product of
    /// the couplings along the tree path divided by 3^(length-1).
    pub fn pair_coupling(&self, i: usize, j: usize) -> f64 {
        assert!(i != j && i < self.d() && j < self.d());
        self.alphas[i * self.d() + j]
    }

    /// Exact density; zero outside the closed unit cube.
    pub fn density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.d());
        if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return 0.0;
        }
        let mut f = 1.0;
        for (&(i, j), &a) in self.tree.edges().iter().zip(&self.couplings) {
            f *= 1.0 + a * (2.0 * x[i] - 1.0) * (2.0 * x[j] - 1.0);
        }
        f
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let f = self.density(x);
        if f > 0.0 {
            f.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Exact ancestral sampler. The root coordinate is uniform; each child
    /// given its parent's value v inverts the conditional CDF
    /// `u + a(2v-1)(u^2 - u)` by the (stable) quadratic formula. One
    /// derived random stream per row, so output is chunking- and
    /// worker-independent.
    pub fn sample(&self, seed: u64, m: usize) -> Dataset {
        use rand::Rng;
        assert!(m >= 1);
        let d = self.d();
        let indices: Vec<usize> = (0..m).collect();
        let rows = crate::par::map_ordered(&indices, |&idx| {
            let mut rng = rng::substream(seed, &[tag::DATASET, idx as u64]);
            let mut coords = vec![0.0f64; d]; // by new index
            coords[d - 1] = rng.gen::<f64>();
            for k in (0..d - 1).rev() {
                let v = coords[self.order.parent_of(k)];
                let b = self.child_coupling[k] * (2.0 * v - 1.0);
                let w: f64 = rng.gen();
                coords[k] = invert_fgm_cdf(b, w);
            }
            let mut row = vec![0.0f64; d];
            for k in 0..d {
                row[self.order.new_to_original(k)] = coords[k];
            }
            row
        });
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        Dataset::new(values, m, d, None).expect("sampler output is finite")
    }

    /// Exact pairwise mutual-information matrix by quadrature (d <= 8).
    pub fn true_mi_matrix(&self) -> Result<MIMatrix> {
        let d = self.d();
        if d > TRUE_MI_MAX_D {
            return Err(Error::DimensionOutOfRange {
                d,
                min: 2,
                max: TRUE_MI_MAX_D,
            });
        }
        let pairs: Vec<(usize, usize)> = (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .collect();
        let values =
            crate::par::map_ordered(&pairs, |&(i, j)| fgm_pair_mi(self.pair_coupling(i, j)));
        let mut out = MIMatrix::new(d);
        for (&(i, j), v) in pairs.iter().zip(values) {
            out.insert(i, j, v);
        }
        Ok(out)
    }

    /// The reference optimal-tree set: all trees within tolerance of the
    /// maximum total true MI (d <= 7). Sorted canonical forms.
    pub fn true_optimal_trees(&self) -> Result<Vec<SpanningTree>> {
        optimal_tree_set(&self.true_mi_matrix()?)
    }

    /// The tree density induced by an arbitrary spanning tree over this
    /// truth's marginals: again a member of the family, with the pairwise
    /// path couplings as edge couplings. With the truth's own tree this is
    /// the truth itself.
    pub fn induced_tree_density(&self, tree: &SpanningTree) -> Result<FgmTreeTruth> {
        if tree.d() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: tree.d(),
            });
        }
        let couplings: Vec<f64> = tree
            .edges()
            .iter()
            .map(|&(i, j)| self.pair_coupling(i, j))
            .collect();
        FgmTreeTruth::new(tree.clone(), &couplings)
    }

    /// Exact mass of an axis-aligned box (clipped to the unit cube).
    /// Fixed-order Gauss-Legendre is exact here: the integrand is a
    /// polynomial of per-axis degree at most the vertex degree.
    pub fn cell_mass(&self, lo: &[f64], hi: &[f64]) -> f64 {
        assert_eq!(lo.len(), self.d());
        assert_eq!(hi.len(), self.d());
        let lo: Vec<f64> = lo.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
        let hi: Vec<f64> = hi.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
        if lo.iter().zip(&hi).any(|(&l, &h)| h <= l) {
            return 0.0;
        }
        GaussRule::new(8).integrate_nd(&lo, &hi, |p| self.density(p))
    }

    /// A Lipschitz bound for the joint density with respect to the
    /// Euclidean norm, from per-coordinate derivative bounds.
    pub fn lipschitz_constant(&self) -> f64 {
        let d = self.d();
        let mut sum_sq = 0.0;
        for v in 0..d {
            let mut per_coord = 0.0;
            for (&(i, j), &a) in self.tree.edges().iter().zip(&self.couplings) {
                if i == v || j == v {
                    let mut others = 1.0;
                    for (&(p, q), &b) in self.tree.edges().iter().zip(&self.couplings) {
                        if (p, q) != (i, j) {
                            others *= 1.0 + b.abs();
                        }
                    }
                    per_coord += 2.0 * a.abs() * others;
                }
            }
            sum_sq += per_coord * per_coord;
        }
        sum_sq.sqrt()
    }

    pub fn spec(&self) -> TruthSpec {
        TruthSpec {
            family: "fgm".to_string(),
            d: self.d(),
            tree: self
                .tree
                .edges()
                .iter()
                .map(|&(i, j)| (i + 1, j + 1))
                .collect(),
            couplings: self.couplings.clone(),
        }
    }
}

/// Inverse of `w = u + b (u^2 - u)` on [0,1], written to stay stable as
/// b -> 0.
fn invert_fgm_cdf(b: f64, w: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&w));
    debug_assert!(b.abs() < 1.0);
    if b == 0.0 {
        return w;
    }
    let disc = (1.0 - b) * (1.0 - b) + 4.0 * b * w;
    let u = 2.0 * w / ((1.0 - b) + disc.max(0.0).sqrt());
    u.clamp(0.0, 1.0)
}

/// Serializable description of a ground truth, used as experiment
/// provenance and as the truth argument of evaluation commands.
/// Vertex labels are 1-based; couplings align with the listed edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub family: String,
    pub d: usize,
    pub tree: Vec<(usize, usize)>,
    pub couplings: Vec<f64>,
}

impl TruthSpec {
    pub fn to_truth(&self) -> Result<FgmTreeTruth> {
        if self.family != "fgm" {
            return Err(Error::InvalidConfig(format!(
                "unsupported ground-truth family {:?}",
                self.family
            )));
        }
        if self.couplings.len() != self.tree.len() {
            return Err(Error::InvalidConfig(
                "couplings must align with tree edges".into(),
            ));
        }
        let mut edges = Vec::with_capacity(self.tree.len());
        for &(i, j) in &self.tree {
            if i == 0 || j == 0 {
                return Err(Error::InvalidConfig("vertex labels are 1-based".into()));
            }
            edges.push((i - 1, j - 1));
        }
        let tree = SpanningTree::new(self.d, edges.clone())?;
        // align couplings with the canonical edge order
        let mut aligned = vec![0.0; self.couplings.len()];
        for (pos, &(i, j)) in edges.iter().enumerate() {
            let key = (i.min(j), i.max(j));
            let canon = tree.edges().iter().position(|&e| e == key).unwrap();
            aligned[canon] = self.couplings[pos];
        }
        FgmTreeTruth::new(tree, &aligned)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Series form of the pair MI: sum over m >= 1 of
    /// alpha^(2m) / (2m (2m-1) (2m+1)^2); converges geometrically for
    /// |alpha| < 1. Independent of the quadrature route.
    fn series_mi(alpha: f64) -> f64 {
        let a2 = alpha * alpha;
        let mut power = 1.0;
        let mut total = 0.0;
        for m in 1..2000u32 {
            power *= a2;
            let m = m as f64;
            let term = power / ((2.0 * m) * (2.0 * m - 1.0) * (2.0 * m + 1.0).powi(2));
            total += term;
            if term < 1e-17 {
                break;
            }
        }
        total
    }

    #[test]
    fn quadrature_matches_series_oracle() {
        for &a in &[0.05, 0.2, 0.5, 0.8, 0.9, 0.99] {
            let q = fgm_pair_mi(a);
            let s = series_mi(a);
            assert!((q - s).abs() < 1e-10, "a={a}: quadrature {q} vs series {s}");
        }
        assert_eq!(fgm_pair_mi(0.0), 0.0);
    }

    #[test]
    fn pair_mi_is_symmetric_and_monotone_in_coupling() {
        assert!((fgm_pair_mi(0.9) - fgm_pair_mi(-0.9)).abs() < 1e-12);
        let lo = fgm_pair_mi(0.5);
        let hi = fgm_pair_mi(0.9);
        assert!(hi > lo && lo > 0.0);
    }

    #[test]
    fn independence_truth_has_zero_mi_and_full_tree_set() {
        let gt = FgmTreeTruth::independent(3);
        let mi = gt.true_mi_matrix().unwrap();
        for (_, v) in mi.pairs() {
            assert_eq!(v, 0.0);
        }
        assert_eq!(gt.true_optimal_trees().unwrap().len(), 3);
    }

    #[test]
    fn chain_pair_couplings_decay_along_paths() {
        let gt = FgmTreeTruth::new(SpanningTree::chain(4), &[0.9, 0.9, 0.9]).unwrap();
        assert_eq!(gt.pair_coupling(0, 1), 0.9);
        assert!((gt.pair_coupling(0, 2) - 0.27).abs() < 1e-15);
        assert!((gt.pair_coupling(0, 3) - 0.081).abs() < 1e-15);
        let mi = gt.true_mi_matrix().unwrap();
        assert!(mi.get(0, 2).unwrap() < mi.get(0, 1).unwrap());
        assert!(mi.get(0, 3).unwrap() < mi.get(0, 2).unwrap());
    }

    #[test]
    fn chain_and_star_truths_recover_their_trees() {
        for d in 3..=6 {
            let chain = SpanningTree::chain(d);
            let gt = FgmTreeTruth::new(chain.clone(), &vec![0.8; d - 1]).unwrap();
            assert_eq!(gt.true_optimal_trees().unwrap(), vec![chain]);

            let star = SpanningTree::star(d, 0);
            let gt = FgmTreeTruth::new(star.clone(), &vec![0.6; d - 1]).unwrap();
            assert_eq!(gt.true_optimal_trees().unwrap(), vec![star]);
        }
    }

    #[test]
    fn density_normalizes_by_quadrature() {
        for d in 2..=3 {
            let gt = FgmTreeTruth::new(SpanningTree::chain(d), &vec![0.7; d - 1]).unwrap();
            let mass = gt.cell_mass(&vec![0.0; d], &vec![1.0; d]);
            assert!((mass - 1.0).abs() < 1e-12, "d={d}: {mass}");
        }
    }

    #[test]
    fn cdf_inversion_round_trips() {
        for &b in &[-0.95, -0.5, -1e-9, 0.0, 1e-9, 0.3, 0.95] {
            for k in 0..50 {
                let w = (k as f64 + 0.5) / 50.0;
                let u = invert_fgm_cdf(b, w);
                assert!((0.0..=1.0).contains(&u));
                let back = u + b * (u * u - u);
                assert!((back - w).abs() < 1e-12, "b={b} w={w}");
            }
        }
    }

    #[test]
    fn sampler_matches_quadrature_cell_masses_d3() {
        let gt = FgmTreeTruth::new(SpanningTree::chain(3), &[0.8, -0.6]).unwrap();
        let m = 200_000;
        let ds = gt.sample(99, m);
        let bins = 5;
        let mut counts = vec![0u64; bins * bins * bins];
        for r in 0..ds.n() {
            let row = ds.row(r);
            let mut idx = 0;
            for &v in row {
                idx = idx * bins + ((v * bins as f64) as usize).min(bins - 1);
            }
            counts[idx] += 1;
        }
        let w = 1.0 / bins as f64;
        for i in 0..bins {
            for j in 0..bins {
                for k in 0..bins {
                    let lo = [i as f64 * w, j as f64 * w, k as f64 * w];
                    let hi = [lo[0] + w, lo[1] + w, lo[2] + w];
                    let p = gt.cell_mass(&lo, &hi);
                    let se = (p * (1.0 - p) / m as f64).sqrt();
                    let freq = counts[(i * bins + j) * bins + k] as f64 / m as f64;
                    assert!(
                        (freq - p).abs() <= 4.0 * se,
                        "cell ({i},{j},{k}): freq {freq} vs mass {p}"
                    );
                }
            }
        }
    }

    #[test]
    fn induced_density_reproduces_truth_on_own_tree() {
        let gt = FgmTreeTruth::new(SpanningTree::star(4, 1), &[0.5, -0.4, 0.7]).unwrap();
        let same = gt.induced_tree_density(gt.tree()).unwrap();
        assert_eq!(same, gt);
        let other = gt.induced_tree_density(&SpanningTree::chain(4)).unwrap();
        assert!((other.couplings()[0] - gt.pair_coupling(0, 1)).abs() < 1e-15);
    }

    #[test]
    fn truth_spec_round_trip() {
        let gt = FgmTreeTruth::new(SpanningTree::chain(4), &[0.9, -0.2, 0.5]).unwrap();
        let spec = gt.spec();
        let text = serde_json::to_string(&spec).unwrap();
        let parsed: TruthSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.to_truth().unwrap(), gt);
        // couplings stay attached to their edges whatever the listed order
        let shuffled = TruthSpec {
            family: "fgm".into(),
            d: 4,
            tree: vec![(3, 4), (1, 2), (3, 2)],
            couplings: vec![0.5, 0.9, -0.2],
        };
        assert_eq!(shuffled.to_truth().unwrap(), gt);
        assert!(TruthSpec {
            family: "gauss".into(),
            d: 2,
            tree: vec![(1, 2)],
            couplings: vec![0.0],
        }
        .to_truth()
        .is_err());
    }

    #[test]
    fn couplings_must_stay_inside_open_interval() {
        assert!(FgmTreeTruth::new(SpanningTree::chain(2), &[1.0]).is_err());
        assert!(FgmTreeTruth::new(SpanningTree::chain(2), &[-1.2]).is_err());
        assert!(FgmTreeTruth::new(SpanningTree::chain(3), &[0.5]).is_err());
    }

    #[test]
    fn lipschitz_bound_dominates_finite_differences() {
        let gt = FgmTreeTruth::new(SpanningTree::chain(3), &[0.9, 0.8]).unwrap();
        let l = gt.lipschitz_constant();
        assert!(l > 0.0);
        let mut rng = crate::rng::substream(5, &[77]);
        use rand::Rng;
        for _ in 0..500 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let dist: f64 = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!((gt.density(&x) - gt.density(&y)).abs() <= l * dist + 1e-12);
        }
    }
}
