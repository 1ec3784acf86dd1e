//! Uniform partitions of the real line and sparse empirical measures over
//! their product cells.
//!
//! Cells are left-closed right-open intervals `[k*h, (k+1)*h)` anchored at
//! zero, indexed by `k = floor(x / h)` over all of the reals. Only occupied
//! cells are stored, so memory scales with the data, not with the range.
//! Counts are exact integers; probabilities are formed at read time.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A uniform partition of the real line with a fixed zero anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partition1D {
    bin_width: f64,
}

impl Partition1D {
    pub fn new(bin_width: f64) -> Result<Self> {
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(Error::InvalidBinWidth(bin_width));
        }
        Ok(Self { bin_width })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// The partition anchor. Fixed at zero.
    pub fn anchor(&self) -> f64 {
        0.0
    }

    /// Index of the cell containing `x`: the unique `k` with
    /// `x in [k*h, (k+1)*h)`. A value exactly on a representable cell edge
    /// lands in the higher-index cell.
    ///
    /// Panics on non-finite coordinates and when the index exceeds the
    /// i64 range (see [`Partition1D::indexable`] for a checked guard).
    pub fn cell_index(&self, x: f64) -> i64 {
        assert!(x.is_finite(), "cell_index requires a finite coordinate");
        let q = (x / self.bin_width).floor();
        assert!(
            q.abs() < 9.0e18,
            "coordinate {x} out of indexable range for bin width {}",
            self.bin_width
        );
        q as i64
    }

    /// Whether `x` has a representable cell index under this partition.
    pub fn indexable(&self, x: f64) -> bool {
        x.is_finite() && (x / self.bin_width).floor().abs() < 9.0e18
    }

    /// Bounds `[lo, hi)` of cell `k`.
    pub fn cell_bounds(&self, k: i64) -> (f64, f64) {
        (k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width)
    }
}

/// An immutable n x d matrix of finite observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>, // row major
    n: usize,
    d: usize,
    names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(values: Vec<f64>, n: usize, d: usize, names: Option<Vec<String>>) -> Result<Self> {
        if n < 1 || d < 2 {
            return Err(Error::DatasetTooSmall {
                n,
                d,
                min_n: 1,
                min_d: 2,
            });
        }
        assert_eq!(values.len(), n * d, "value buffer does not match shape");
        if let Some(names) = &names {
            assert_eq!(names.len(), d, "one name per column");
        }
        for (k, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: k / d + 1,
                    col: k % d + 1,
                });
            }
        }
        Ok(Self {
            values,
            n,
            d,
            names,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.d + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.d..(row + 1) * self.d]
    }

    /// Smallest and largest entry over the whole matrix.
    pub fn value_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        assert!(col < self.d);
        self.values.iter().skip(col).step_by(self.d).copied()
    }

    /// Parse comma-separated numeric rows. With `has_header` the first
    /// non-comment line supplies column names. Lines starting with `#`
    /// (provenance stamps) and blank lines are skipped. Any missing or
    /// non-numeric entry is a hard error carrying the 1-based file line
    /// number.
    pub fn parse_csv(text: &str, has_header: bool) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let mut names = None;
        let mut d = 0usize;
        let mut rows: Vec<f64> = Vec::new();
        let mut n = 0usize;
        if has_header {
            match lines.next() {
                Some((_, header)) => {
                    let cols: Vec<String> =
                        header.split(',').map(|s| s.trim().to_string()).collect();
                    d = cols.len();
                    names = Some(cols);
                }
                None => {
                    return Err(Error::CsvParse {
                        row: 1,
                        message: "empty input".into(),
                    })
                }
            }
        }
        for (idx, line) in lines {
            let row_no = idx + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if d == 0 {
                d = fields.len();
            } else if fields.len() != d {
                return Err(Error::CsvParse {
                    row: row_no,
                    message: format!("expected {} fields, found {}", d, fields.len()),
                });
            }
            for (ci, field) in fields.iter().enumerate() {
                let trimmed = field.trim();
                let v: f64 = trimmed.parse().map_err(|_| Error::CsvParse {
                    row: row_no,
                    message: format!("column {}: not a number: {trimmed:?}", ci + 1),
                })?;
                if !v.is_finite() {
                    return Err(Error::CsvParse {
                        row: row_no,
                        message: format!("column {}: non-finite value", ci + 1),
                    });
                }
                rows.push(v);
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::CsvParse {
                row: if has_header { 2 } else { 1 },
                message: "no data rows".into(),
            });
        }
        Dataset::new(rows, n, d, names)
    }

    /// Render as CSV with a header row. Floats are written in shortest
    /// round-trip form, so output bytes are reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&csv_header(self.d, self.names.as_deref()));
        for r in 0..self.n {
            let row = self.row(r);
            for (c, v) in row.iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Header line used by every CSV the crate writes.
pub fn csv_header(d: usize, names: Option<&[String]>) -> String {
    let mut out = String::new();
    match names {
        Some(names) => out.push_str(&names.join(",")),
        None => {
            for c in 0..d {
                if c > 0 {
                    out.push(',');
                }
                out.push_str(&format!("x{}", c + 1));
            }
        }
    }
    out.push('\n');
    out
}

/// Sparse one-dimensional empirical counts over a uniform partition.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalHistogram {
    partition: Partition1D,
    counts: BTreeMap<i64, u64>,
    n: u64,
}

impl MarginalHistogram {
    pub fn from_counts(partition: Partition1D, counts: BTreeMap<i64, u64>, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyHistogram);
        }
        let total: u64 = counts.values().sum();
        if total != n {
            return Err(Error::CountMismatch {
                got: total,
                expected: n,
            });
        }
        if counts.values().any(|&c| c == 0) {
            return Err(Error::CountMismatch {
                got: 0,
                expected: n,
            });
        }
        Ok(Self {
            partition,
            counts,
            n,
        })
    }

    pub fn partition(&self) -> Partition1D {
        self.partition
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn count(&self, cell: i64) -> u64 {
        self.counts.get(&cell).copied().unwrap_or(0)
    }

    /// Occupied cells in ascending index order.
    pub fn occupied(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter().map(|(&k, &c)| (k, c))
    }

    pub fn occupied_len(&self) -> usize {
        self.counts.len()
    }
}

/// Sparse two-dimensional empirical counts over a shared uniform partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PairHistogram {
    partition: Partition1D,
    counts: BTreeMap<(i64, i64), u64>,
    n: u64,
}

impl PairHistogram {
    pub fn from_counts(
        partition: Partition1D,
        counts: BTreeMap<(i64, i64), u64>,
        n: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyHistogram);
        }
        let total: u64 = counts.values().sum();
        if total != n {
            return Err(Error::CountMismatch {
                got: total,
                expected: n,
            });
        }
        if counts.values().any(|&c| c == 0) {
            return Err(Error::CountMismatch {
                got: 0,
                expected: n,
            });
        }
        Ok(Self {
            partition,
            counts,
            n,
        })
    }

    pub fn partition(&self) -> Partition1D {
        self.partition
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn count(&self, a: i64, b: i64) -> u64 {
        self.counts.get(&(a, b)).copied().unwrap_or(0)
    }

    /// Occupied cells in ascending (axis1, axis2) order.
    pub fn occupied(&self) -> impl Iterator<Item = ((i64, i64), u64)> + '_ {
        self.counts.iter().map(|(&k, &c)| (k, c))
    }

    pub fn occupied_len(&self) -> usize {
        self.counts.len()
    }

    /// Exact marginal over axis 2 (counts per axis-1 cell).
    pub fn marginal_axis1(&self) -> MarginalHistogram {
        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        for (&(a, _), &c) in &self.counts {
            *counts.entry(a).or_insert(0) += c;
        }
        MarginalHistogram {
            partition: self.partition,
            counts,
            n: self.n,
        }
    }

    /// Exact marginal over axis 1 (counts per axis-2 cell).
    pub fn marginal_axis2(&self) -> MarginalHistogram {
        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        for (&(_, b), &c) in &self.counts {
            *counts.entry(b).or_insert(0) += c;
        }
        MarginalHistogram {
            partition: self.partition,
            counts,
            n: self.n,
        }
    }
}

/// Cell indices of one column under a partition, precomputed for reuse
/// across pair builds.
pub(crate) fn cell_column(data: &Dataset, col: usize, partition: Partition1D) -> Vec<i64> {
    data.column(col).map(|x| partition.cell_index(x)).collect()
}

pub(crate) fn pair_from_cells(
    cells_a: &[i64],
    cells_b: &[i64],
    partition: Partition1D,
) -> PairHistogram {
    assert_eq!(cells_a.len(), cells_b.len());
    let mut counts: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    for (&a, &b) in cells_a.iter().zip(cells_b) {
        *counts.entry((a, b)).or_insert(0) += 1;
    }
    PairHistogram {
        partition,
        counts,
        n: cells_a.len() as u64,
    }
}

/// Empirical pair counts of columns `(i, j)`; axis 1 is column `i`.
pub fn build_pair_histogram(
    data: &Dataset,
    i: usize,
    j: usize,
    partition: Partition1D,
) -> Result<PairHistogram> {
    if i == j {
        return Err(Error::SelfPair(i));
    }
    for v in [i, j] {
        if v >= data.d() {
            return Err(Error::VertexOutOfRange {
                vertex: v,
                d: data.d(),
            });
        }
    }
    let ca = cell_column(data, i, partition);
    let cb = cell_column(data, j, partition);
    Ok(pair_from_cells(&ca, &cb, partition))
}

/// Empirical counts of column `i`.
pub fn build_marginal_histogram(
    data: &Dataset,
    i: usize,
    partition: Partition1D,
) -> Result<MarginalHistogram> {
    if i >= data.d() {
        return Err(Error::VertexOutOfRange {
            vertex: i,
            d: data.d(),
        });
    }
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for x in data.column(i) {
        *counts.entry(partition.cell_index(x)).or_insert(0) += 1;
    }
    Ok(MarginalHistogram {
        partition,
        counts,
        n: data.n() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: &[&[f64]]) -> Dataset {
        let d = rows[0].len();
        let values: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Dataset::new(values, rows.len(), d, None).unwrap()
    }

    #[test]
    fn cell_index_basic_cases() {
        let p = Partition1D::new(0.25).unwrap();
        assert_eq!(p.cell_index(0.37), 1);
        assert_eq!(p.cell_index(-0.1), -1);
        // a representable boundary value lands in the right-hand cell
        assert_eq!(p.cell_index(0.5), 2);
        assert_eq!(p.cell_index(0.0), 0);
    }

    #[test]
    #[should_panic]
    fn cell_index_rejects_non_finite() {
        let p = Partition1D::new(0.25).unwrap();
        p.cell_index(f64::NAN);
    }

    #[test]
    fn partition_rejects_bad_widths() {
        assert!(Partition1D::new(0.0).is_err());
        assert!(Partition1D::new(-1.0).is_err());
        assert!(Partition1D::new(f64::INFINITY).is_err());
    }

    #[test]
    fn pair_histogram_bins_directly() {
        let ds = dataset(&[&[0.1, 0.1], &[0.1, 0.9], &[0.9, 0.9]]);
        let p = Partition1D::new(0.5).unwrap();
        let ph = build_pair_histogram(&ds, 0, 1, p).unwrap();
        assert_eq!(ph.n(), 3);
        assert_eq!(ph.count(0, 0), 1);
        assert_eq!(ph.count(0, 1), 1);
        assert_eq!(ph.count(1, 1), 1);
        assert_eq!(ph.count(1, 0), 0);
        assert_eq!(ph.occupied_len(), 3);
    }

    #[test]
    fn pair_histogram_rejects_bad_columns() {
        let ds = dataset(&[&[0.0, 1.0]]);
        let p = Partition1D::new(0.5).unwrap();
        assert!(matches!(
            build_pair_histogram(&ds, 1, 1, p),
            Err(Error::SelfPair(1))
        ));
        assert!(matches!(
            build_pair_histogram(&ds, 0, 2, p),
            Err(Error::VertexOutOfRange { .. })
        ));
    }

    #[test]
    fn marginal_matches_pair_marginalization() {
        let ds = dataset(&[&[0.1, 0.6], &[0.6, 0.6], &[-0.2, 1.4], &[0.45, 0.9]]);
        let p = Partition1D::new(0.5).unwrap();
        let ph = build_pair_histogram(&ds, 0, 1, p).unwrap();
        assert_eq!(
            ph.marginal_axis1(),
            build_marginal_histogram(&ds, 0, p).unwrap()
        );
        assert_eq!(
            ph.marginal_axis2(),
            build_marginal_histogram(&ds, 1, p).unwrap()
        );
    }

    #[test]
    fn marginal_two_values() {
        let ds = dataset(&[&[0.1, 0.0], &[0.6, 0.0]]);
        let p = Partition1D::new(0.5).unwrap();
        let mh = build_marginal_histogram(&ds, 0, p).unwrap();
        assert_eq!(mh.count(0), 1);
        assert_eq!(mh.count(1), 1);
        assert_eq!(mh.n(), 2);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let ds = Dataset::parse_csv("a,b\n0.5,1\n-2,3.25\n", true).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.names().unwrap(), ["a".to_string(), "b".to_string()]);
        assert_eq!(ds.value(1, 1), 3.25);
        let back = Dataset::parse_csv(&ds.to_csv(), true).unwrap();
        assert_eq!(back, ds);

        let err = Dataset::parse_csv("0.5,1\n2,oops\n", false).unwrap_err();
        match err {
            Error::CsvParse { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let err = Dataset::parse_csv("0.5,1\n2\n", false).unwrap_err();
        match err {
            Error::CsvParse { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(Dataset::parse_csv("1,nan\n", false).is_err());

        // provenance comments and blank lines are skipped, and reported
        // row numbers still refer to file lines
        let ds = Dataset::parse_csv("# provenance\na,b\n\n1,2\n", true).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.names().unwrap(), ["a".to_string(), "b".to_string()]);
        let err = Dataset::parse_csv("# x\n1,2\n1,bad\n", false).unwrap_err();
        match err {
            Error::CsvParse { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dataset_shape_checks() {
        assert!(Dataset::new(vec![1.0], 1, 1, None).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], 1, 2, None).is_err());
    }

    #[test]
    fn from_counts_validates_totals() {
        let p = Partition1D::new(1.0).unwrap();
        let mut counts = BTreeMap::new();
        counts.insert((0, 0), 2u64);
        assert!(PairHistogram::from_counts(p, counts.clone(), 3).is_err());
        assert!(PairHistogram::from_counts(p, counts, 2).is_ok());
    }
}
