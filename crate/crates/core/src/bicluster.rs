//! Mean-squared-residue biclustering seeded by per-column hierarchical
//! clustering.
//!
//! Mining runs in four steps:
//!
//! 1. [`seed_columns`]: single-linkage agglomeration of every column's
//!    values, cut where the nearest gap exceeds `epsilon`.
//! 2. [`refine`]: expand a seed's rows to every column, then greedily delete
//!    the row or column whose removal leaves the smallest MSR until the
//!    submatrix MSR drops to `delta`.
//! 3. [`dedup`]: drop exact duplicates.
//! 4. Truncate to the `max_biclusters` largest by area.

use std::cmp::Ordering;
use std::collections::HashSet;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// Candidate MSRs closer than this are treated as tied.
pub const TIE_EPS: f64 = 1e-12;

/// Rows whose values in one column were merged by 1-D clustering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub column: usize,
    /// Ascending row indices.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bicluster {
    /// Ascending row indices.
    pub rows: Vec<usize>,
    /// Ascending column indices.
    pub cols: Vec<usize>,
    pub msr: f64,
    /// Column means over `rows`, one per entry of `cols`.
    pub centroid: Vec<f64>,
}

impl Bicluster {
    pub fn area(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    /// Builds a bicluster from index sets, computing MSR and centroid.
    pub fn from_indices(values: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> Result<Self> {
        let mut rows = rows.to_vec();
        let mut cols = cols.to_vec();
        rows.sort_unstable();
        cols.sort_unstable();
        let msr = msr_of(values, &rows, &cols)?;
        let centroid = cols
            .iter()
            .map(|&c| rows.iter().map(|&r| values[[r, c]]).sum::<f64>() / rows.len() as f64)
            .collect();
        Ok(Bicluster {
            rows,
            cols,
            msr,
            centroid,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningParams {
    /// Largest gap merged by the 1-D seed clustering (normalized units).
    #[serde(default = "MiningParams::default_epsilon")]
    pub epsilon: f64,
    /// Minimum seed size and row floor during refinement. `None` resolves to
    /// `max(4, ceil(0.05 m))`.
    #[serde(default)]
    pub min_rows: Option<usize>,
    /// MSR acceptance threshold.
    #[serde(default = "MiningParams::default_delta")]
    pub delta: f64,
    #[serde(default = "MiningParams::default_min_cols")]
    pub min_cols: usize,
    #[serde(default = "MiningParams::default_max_biclusters")]
    pub max_biclusters: usize,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams {
            epsilon: Self::default_epsilon(),
            min_rows: None,
            delta: Self::default_delta(),
            min_cols: Self::default_min_cols(),
            max_biclusters: Self::default_max_biclusters(),
        }
    }
}

impl MiningParams {
    fn default_epsilon() -> f64 {
        0.05
    }
    fn default_delta() -> f64 {
        0.02
    }
    fn default_min_cols() -> usize {
        2
    }
    fn default_max_biclusters() -> usize {
        32
    }

    pub fn min_rows_for(&self, m: usize) -> usize {
        self.min_rows
            .unwrap_or_else(|| 4.max((0.05 * m as f64).ceil() as usize))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return bad("delta must be positive");
        }
        if matches!(self.min_rows, Some(r) if r < 2) {
            return bad("min_rows must be at least 2");
        }
        if self.min_cols < 2 {
            return bad("min_cols must be at least 2");
        }
        if self.max_biclusters < 1 {
            return bad("max_biclusters must be at least 1");
        }
        Ok(())
    }
}

/// One-dimensional clusters of every column.
///
/// Single linkage on a line merges neighbours in sorted order, so merging
/// while the nearest inter-cluster gap is at most `epsilon` is the same as
/// cutting the sorted column at every gap larger than `epsilon`.
pub fn seed_columns(matrix: &FeatureMatrix, epsilon: f64, min_rows: usize) -> Vec<Seed> {
    let values = &matrix.values;
    let mut seeds = Vec::new();
    for col in 0..values.ncols() {
        let mut order: Vec<(f64, usize)> = (0..values.nrows()).map(|r| (values[[r, col]], r)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut start = 0;
        for k in 1..=order.len() {
            if k == order.len() || order[k].0 - order[k - 1].0 > epsilon {
                if k - start >= min_rows {
                    let mut rows: Vec<usize> = order[start..k].iter().map(|&(_, r)| r).collect();
                    rows.sort_unstable();
                    seeds.push(Seed { column: col, rows });
                }
                start = k;
            }
        }
    }
    seeds
}

/// Mean squared residue of the submatrix `rows × cols`.
pub fn msr(matrix: &FeatureMatrix, rows: &[usize], cols: &[usize]) -> Result<f64> {
    msr_of(matrix.values.view(), rows, cols)
}

pub(crate) fn msr_of(values: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> Result<f64> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    let (nr, nc) = (rows.len() as f64, cols.len() as f64);
    let row_means: Vec<f64> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| values[[r, c]]).sum::<f64>() / nc)
        .collect();
    let col_means: Vec<f64> = cols
        .iter()
        .map(|&c| rows.iter().map(|&r| values[[r, c]]).sum::<f64>() / nr)
        .collect();
    let overall = row_means.iter().sum::<f64>() / nr;
    let mut acc = 0.0;
    for (&r, rm) in rows.iter().zip(&row_means) {
        for (&c, cm) in cols.iter().zip(&col_means) {
            let residue = values[[r, c]] - rm - cm + overall;
            acc += residue * residue;
        }
    }
    Ok(acc / (nr * nc))
}

/// A single greedy step of [`refine`]. Indices are matrix rows/columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Deletion {
    Row(usize),
    Col(usize),
}

/// Row and column sums of a submatrix, enough to price every single
/// deletion in `O(|R| |C|)` total.
///
/// With `s_i` the row sums, `t_j` the column sums, `T` the total and `Q` the
/// sum of squares,
/// `|R||C| MSR = Q - Σ s_i² / |C| - Σ t_j² / |R| + T² / (|R||C|)`.
struct SubmatrixSums {
    row_sums: Vec<f64>,
    col_sums: Vec<f64>,
    row_sq: Vec<f64>,
    col_sq: Vec<f64>,
    total: f64,
    total_sq: f64,
}

impl SubmatrixSums {
    fn new(values: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> Self {
        let mut row_sums = vec![0.0; rows.len()];
        let mut col_sums = vec![0.0; cols.len()];
        let mut row_sq = vec![0.0; rows.len()];
        let mut col_sq = vec![0.0; cols.len()];
        for (a, &r) in rows.iter().enumerate() {
            for (b, &c) in cols.iter().enumerate() {
                let v = values[[r, c]];
                row_sums[a] += v;
                col_sums[b] += v;
                row_sq[a] += v * v;
                col_sq[b] += v * v;
            }
        }
        let total = row_sums.iter().sum();
        let total_sq = row_sq.iter().sum();
        SubmatrixSums {
            row_sums,
            col_sums,
            row_sq,
            col_sq,
            total,
            total_sq,
        }
    }

    fn msr_without_row(&self, values: ArrayView2<f64>, r: usize, a: usize, cols: &[usize]) -> f64 {
        let nr = (self.row_sums.len() - 1) as f64;
        let nc = self.col_sums.len() as f64;
        let row_part =
            (self.row_sums.iter().map(|s| s * s).sum::<f64>() - self.row_sums[a].powi(2)) / nc;
        let col_part = cols
            .iter()
            .zip(&self.col_sums)
            .map(|(&c, t)| (t - values[[r, c]]).powi(2))
            .sum::<f64>()
            / nr;
        let total = self.total - self.row_sums[a];
        let q = self.total_sq - self.row_sq[a];
        ((q - row_part - col_part + total * total / (nr * nc)) / (nr * nc)).max(0.0)
    }

    fn msr_without_col(&self, values: ArrayView2<f64>, c: usize, b: usize, rows: &[usize]) -> f64 {
        let nr = self.row_sums.len() as f64;
        let nc = (self.col_sums.len() - 1) as f64;
        let col_part =
            (self.col_sums.iter().map(|t| t * t).sum::<f64>() - self.col_sums[b].powi(2)) / nr;
        let row_part = rows
            .iter()
            .zip(&self.row_sums)
            .map(|(&r, s)| (s - values[[r, c]]).powi(2))
            .sum::<f64>()
            / nc;
        let total = self.total - self.col_sums[b];
        let q = self.total_sq - self.col_sq[b];
        ((q - row_part - col_part + total * total / (nr * nc)) / (nr * nc)).max(0.0)
    }
}

/// Greedy refinement of one seed; see [`refine_with_trace`].
pub fn refine(matrix: &FeatureMatrix, seed: &Seed, params: &MiningParams) -> Option<Bicluster> {
    refine_with_trace(matrix, seed, params).0
}

/// Greedy refinement that also returns the deletions in the order applied.
///
/// Starts from `seed.rows × all columns`. While the MSR exceeds `delta`,
/// every single-row and single-column deletion permitted by the size floors
/// is priced and the cheapest is applied; ties (within [`TIE_EPS`]) prefer
/// rows, then the lower index.
pub fn refine_with_trace(
    matrix: &FeatureMatrix,
    seed: &Seed,
    params: &MiningParams,
) -> (Option<Bicluster>, Vec<Deletion>) {
    let values = matrix.values.view();
    let row_floor = params.min_rows_for(matrix.n_samples()).max(2);
    let col_floor = params.min_cols.max(2);
    let mut rows = seed.rows.clone();
    let mut cols: Vec<usize> = (0..matrix.n_features()).collect();
    let mut trace = Vec::new();

    if rows.len() < row_floor || cols.len() < col_floor {
        return (None, trace);
    }
    let mut current = msr_of(values, &rows, &cols).expect("non-empty seed");
    while current > params.delta {
        let sums = SubmatrixSums::new(values, &rows, &cols);
        let mut best: Option<(f64, Deletion, usize)> = None;
        let mut consider = |score: f64, del: Deletion, pos: usize| {
            if best.is_none_or(|(b, _, _)| score < b - TIE_EPS) {
                best = Some((score, del, pos));
            }
        };
        if rows.len() > row_floor {
            for (a, &r) in rows.iter().enumerate() {
                consider(sums.msr_without_row(values, r, a, &cols), Deletion::Row(r), a);
            }
        }
        if cols.len() > col_floor {
            for (b, &c) in cols.iter().enumerate() {
                consider(sums.msr_without_col(values, c, b, &rows), Deletion::Col(c), b);
            }
        }
        let Some((_, del, pos)) = best else {
            return (None, trace);
        };
        match del {
            Deletion::Row(_) => rows.remove(pos),
            Deletion::Col(_) => cols.remove(pos),
        };
        trace.push(del);
        current = msr_of(values, &rows, &cols).expect("floors keep the submatrix non-empty");
    }
    let bicluster = Bicluster::from_indices(values, &rows, &cols).expect("non-empty");
    (Some(bicluster), trace)
}

fn canonical_cmp(a: &Bicluster, b: &Bicluster) -> Ordering {
    a.rows.cmp(&b.rows).then_with(|| a.cols.cmp(&b.cols))
}

/// Removes exact duplicates (same rows and columns), keeping the first
/// occurrence, and orders the survivors by descending area, then by
/// (rows, cols).
pub fn dedup(biclusters: Vec<Bicluster>) -> Vec<Bicluster> {
    let mut seen = HashSet::new();
    let mut out: Vec<Bicluster> = biclusters
        .into_iter()
        .map(|mut b| {
            b.rows.sort_unstable();
            b.cols.sort_unstable();
            b
        })
        .filter(|b| seen.insert((b.rows.clone(), b.cols.clone())))
        .collect();
    out.sort_by(|a, b| b.area().cmp(&a.area()).then_with(|| canonical_cmp(a, b)));
    out
}

/// Full mining pass: seed, refine, dedup, truncate.
pub fn mine(matrix: &FeatureMatrix, params: &MiningParams) -> Vec<Bicluster> {
    let min_rows = params.min_rows_for(matrix.n_samples());
    let seeds = seed_columns(matrix, params.epsilon, min_rows);
    // Refinement ignores the seed column, so identical row sets give
    // identical results.
    let mut seen = HashSet::new();
    let unique: Vec<&Seed> = seeds.iter().filter(|s| seen.insert(&s.rows)).collect();

    #[cfg(feature = "parallel")]
    let refined: Vec<Option<Bicluster>> = {
        use rayon::prelude::*;
        unique.par_iter().map(|s| refine(matrix, s, params)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let refined: Vec<Option<Bicluster>> = unique.iter().map(|s| refine(matrix, s, params)).collect();

    let mut out = dedup(refined.into_iter().flatten().collect());
    out.truncate(params.max_biclusters);
    out
}

/// Column means of `rows` over `cols` of a raw value array.
pub fn column_means(values: &Array2<f64>, rows: &[usize], cols: &[usize]) -> Vec<f64> {
    cols.iter()
        .map(|&c| rows.iter().map(|&r| values[[r, c]]).sum::<f64>() / rows.len() as f64)
        .collect()
}
