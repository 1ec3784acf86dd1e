//! Plug-in mutual-information estimation over histogram cells.
//!
//! The estimate for a pair of columns is the mutual information of their
//! discretized empirical distribution: a sum over occupied product cells of
//! `p_ab * ln(p_ab / (p_a p_b))`. Unoccupied cells contribute nothing, which
//! realizes the 0 log 0 = 0 convention without ever evaluating a log of
//! zero, and the marginal of an occupied cell is never zero, so the sum is
//! always finite.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::histograms::{cell_column, pair_from_cells, Dataset, PairHistogram, Partition1D};
use crate::stats::KahanSum;

/// Symmetric matrix of pairwise mutual-information estimates in nats.
/// Entries exist only for computed pairs; with a candidate-edge mask the
/// remaining pairs are absent, not zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MIMatrix {
    d: usize,
    values: BTreeMap<(usize, usize), f64>,
}

impl MIMatrix {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            values: BTreeMap::new(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Store the weight of an unordered pair. Weights must be finite and
    /// nonnegative.
    pub fn insert(&mut self, i: usize, j: usize, value: f64) {
        assert!(i != j && i < self.d && j < self.d, "bad pair ({i},{j})");
        assert!(
            value.is_finite() && value >= 0.0,
            "mutual information must be finite and nonnegative (got {value})"
        );
        let key = (i.min(j), i.max(j));
        self.values.insert(key, value);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values.get(&(i.min(j), i.max(j))).copied()
    }

    /// Stored pairs in ascending (i, j) order.
    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV export with 1-based vertex labels and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,mi\n");
        for ((i, j), v) in self.pairs() {
            out.push_str(&format!("{},{},{:.16e}\n", i + 1, j + 1, v));
        }
        out
    }
}

/// Plug-in mutual information of a pair histogram, in nats.
///
/// Sums over occupied cells only. Per-cell terms are accumulated with
/// compensated summation in sorted value order: the term multiset is
/// invariant under swapping the two axes, so the estimate is bit-identical
/// for (i, j) and (j, i) and independent of cell iteration order. The
/// result is clamped at zero: it is a KL divergence, and the clamp removes
/// the last-ulp negatives plain float arithmetic can produce.
pub fn plugin_mi(pair: &PairHistogram) -> Result<f64> {
    if pair.n() == 0 {
        return Err(Error::EmptyHistogram);
    }
    let n = pair.n() as f64;
    let ma = pair.marginal_axis1();
    let mb = pair.marginal_axis2();
    let mut terms: Vec<f64> = pair
        .occupied()
        .map(|((a, b), c_ab)| {
            let c_a = ma.count(a) as f64;
            let c_b = mb.count(b) as f64;
            let c_ab = c_ab as f64;
            // p_ab * ln(p_ab / (p_a p_b)) with the ratio formed from exact
            // integer products (n <= 2^26 keeps them exact in f64)
            (c_ab / n) * ((c_ab * n) / (c_a * c_b)).ln()
        })
        .collect();
    terms.sort_unstable_by(f64::total_cmp);
    let mut acc = KahanSum::new();
    for t in terms {
        acc.add(t);
    }
    Ok(acc.total().max(0.0))
}

/// Pairwise plug-in MI estimates for all column pairs, or for a candidate
/// edge subset. Pairs are computed independently (and in parallel when the
/// `parallel` feature is on); the result does not depend on worker count.
pub fn mi_matrix(
    data: &Dataset,
    partition: Partition1D,
    mask: Option<&[(usize, usize)]>,
) -> Result<MIMatrix> {
    let d = data.d();
    let pairs: Vec<(usize, usize)> = match mask {
        Some(edges) => {
            let canon = canonical_mask(edges, d)?;
            require_connected(&canon, d)?;
            canon
        }
        None => {
            let mut all = Vec::with_capacity(d * (d - 1) / 2);
            for i in 0..d {
                for j in (i + 1)..d {
                    all.push((i, j));
                }
            }
            all
        }
    };

    let columns: Vec<Vec<i64>> = (0..d).map(|c| cell_column(data, c, partition)).collect();
    let values = crate::par::map_ordered(&pairs, |&(i, j)| {
        let hist = pair_from_cells(&columns[i], &columns[j], partition);
        plugin_mi(&hist).expect("non-empty by construction")
    });

    let mut out = MIMatrix::new(d);
    for (&(i, j), v) in pairs.iter().zip(values) {
        out.insert(i, j, v);
    }
    Ok(out)
}

fn canonical_mask(edges: &[(usize, usize)], d: usize) -> Result<Vec<(usize, usize)>> {
    let mut canon = Vec::with_capacity(edges.len());
    for &(i, j) in edges {
        if i == j {
            return Err(Error::SelfPair(i));
        }
        for v in [i, j] {
            if v >= d {
                return Err(Error::VertexOutOfRange { vertex: v, d });
            }
        }
        canon.push((i.min(j), i.max(j)));
    }
    canon.sort_unstable();
    canon.dedup();
    Ok(canon)
}

fn require_connected(edges: &[(usize, usize)], d: usize) -> Result<()> {
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        if parent[x] != x {
            parent[x] = find(parent, parent[x]);
        }
        parent[x]
    }
    let mut components = d;
    for &(i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            components -= 1;
        }
    }
    if components != 1 {
        return Err(Error::DisconnectedGraph);
    }
    Ok(())
}

/// Bin-width schedule and any consistency warnings for the given sample
/// size.
#[derive(Debug, Clone, PartialEq)]
pub struct BinWidths {
    /// Density-estimation bin width.
    pub h: f64,
    /// Mutual-information bin width.
    pub h_prime: f64,
    pub warnings: Vec<String>,
}

/// The n^(-1/4) schedule: `h = c1 * n^(-1/4)`, `h' = c2 * n^(-1/4)`.
///
/// Also sanity-checks the asymptotic consistency requirements at this
/// finite n, warning (not failing) when `n h'^2 < 10` or
/// `n h^2 / ln n < 10`.
pub fn default_bin_widths(n: usize, c1: f64, c2: f64) -> Result<BinWidths> {
    if n < 1 {
        return Err(Error::InvalidConfig(
            "sample count must be at least 1".into(),
        ));
    }
    for c in [c1, c2] {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidBinWidthConstant(c));
        }
    }
    let scale = (n as f64).powf(-0.25);
    let h = c1 * scale;
    let h_prime = c2 * scale;
    let nf = n as f64;
    let mut warnings = Vec::new();
    if nf * h_prime * h_prime < 10.0 {
        warnings.push(format!(
            "n*h'^2 = {:.3} is small; mutual-information estimates may be unreliable",
            nf * h_prime * h_prime
        ));
    }
    let log_n = if n > 1 { nf.ln() } else { 1.0 };
    if nf * h * h / log_n < 10.0 {
        warnings.push(format!(
            "n*h^2/ln(n) = {:.3} is small; density estimates may be unreliable",
            nf * h * h / log_n
        ));
    }
    Ok(BinWidths {
        h,
        h_prime,
        warnings,
    })
}
