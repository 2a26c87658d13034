//! Distance-to-centroid features derived from biclusters.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bicluster::{mine, Bicluster, MiningParams};
use crate::dataset::{FeatureMatrix, MinMaxStats};
use crate::error::{Error, Result};
use crate::kgraph::AugmentedTable;

/// One augmented column: Euclidean distance of every sample to a
/// bicluster's centroid, measured over the bicluster's columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedFeature {
    pub index: usize,
    pub source: Bicluster,
    pub columns: Vec<usize>,
    pub centroid: Vec<f64>,
    /// One distance per sample, in matrix row order.
    pub values: Vec<f64>,
}

impl AugmentedFeature {
    pub fn name(&self) -> String {
        format!("AUG{}", self.index)
    }
}

/// Column means over the bicluster rows, one per bicluster column.
pub fn centroid(matrix: &FeatureMatrix, bicluster: &Bicluster) -> Vec<f64> {
    crate::bicluster::column_means(&matrix.values, &bicluster.rows, &bicluster.cols)
}

/// One feature per bicluster, evaluated for every sample.
pub fn distance_features(matrix: &FeatureMatrix, biclusters: &[Bicluster]) -> Vec<AugmentedFeature> {
    biclusters
        .iter()
        .enumerate()
        .map(|(index, b)| {
            let center = centroid(matrix, b);
            let values = matrix
                .values
                .rows()
                .into_iter()
                .map(|row| {
                    b.cols
                        .iter()
                        .zip(&center)
                        .map(|(&c, t)| (row[c] - t).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            AugmentedFeature {
                index,
                source: b.clone(),
                columns: b.cols.clone(),
                centroid: center,
                values,
            }
        })
        .collect()
}

/// Equal-width bins over the observed range of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinScheme {
    pub n_bins: usize,
    /// `n_bins + 1` ascending boundaries; empty for a constant feature.
    pub edges: Vec<f64>,
}

impl BinScheme {
    pub fn fit(values: &[f64], n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::InvalidParameter("n_bins must be at least 2".into()));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let edges = if hi > lo {
            let width = (hi - lo) / n_bins as f64;
            (0..=n_bins)
                .map(|k| if k == n_bins { hi } else { lo + width * k as f64 })
                .collect()
        } else {
            Vec::new()
        };
        Ok(BinScheme { n_bins, edges })
    }

    /// Bin of `value`: the last interior edge not above it, so the maximum
    /// lands in the top bin and values outside the range are clamped.
    pub fn bin(&self, value: f64) -> usize {
        if self.edges.is_empty() {
            return 0;
        }
        let interior = &self.edges[1..self.n_bins];
        interior.partition_point(|&e| e <= value)
    }
}

/// Discretizes one feature into `n_bins` equal-width bins.
pub fn quantize(feature: &AugmentedFeature, n_bins: usize) -> Result<(Vec<usize>, BinScheme)> {
    let scheme = BinScheme::fit(&feature.values, n_bins)?;
    let bins = feature.values.iter().map(|&v| scheme.bin(v)).collect();
    Ok((bins, scheme))
}

/// An augmented feature together with its discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedFeature {
    pub feature: AugmentedFeature,
    pub scheme: BinScheme,
    pub bins: Vec<usize>,
}

pub fn quantize_all(features: &[AugmentedFeature], n_bins: usize) -> Result<Vec<QuantizedFeature>> {
    features
        .iter()
        .map(|f| {
            let (bins, scheme) = quantize(f, n_bins)?;
            Ok(QuantizedFeature {
                feature: f.clone(),
                scheme,
                bins,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentParams {
    #[serde(default)]
    pub mining: MiningParams,
    #[serde(default = "AugmentParams::default_bins")]
    pub n_bins: usize,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            mining: MiningParams::default(),
            n_bins: Self::default_bins(),
        }
    }
}

impl AugmentParams {
    fn default_bins() -> usize {
        5
    }
}

/// Biclusters mined from a raw table and the quantized features they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub biclusters: Vec<Bicluster>,
    pub table: AugmentedTable,
}

/// Normalizes `raw`, mines biclusters and derives one quantized feature per
/// bicluster for every sample.
///
/// With `rows = Some(..)` the normalization statistics and the mining only
/// see those rows; distances are still computed for all samples.
pub fn build_augmentation(raw: &FeatureMatrix, params: &AugmentParams, rows: Option<&[usize]>) -> Result<Augmentation> {
    params.mining.validate()?;
    let normalized = MinMaxStats::fit(raw, rows).apply(raw);
    let biclusters = match rows {
        None => mine(&normalized, &params.mining),
        Some(rows) => {
            let visible = normalized.select_rows(rows);
            mine(&visible, &params.mining)
                .into_iter()
                .map(|b| {
                    let mapped: Vec<usize> = b.rows.iter().map(|&r| rows[r]).collect();
                    Bicluster::from_indices(normalized.values.view(), &mapped, &b.cols)
                })
                .collect::<Result<_>>()?
        }
    };
    let features = distance_features(&normalized, &biclusters);
    Ok(Augmentation {
        biclusters,
        table: AugmentedTable {
            sample_ids: raw.sample_ids.clone(),
            features: quantize_all(&features, params.n_bins)?,
        },
    })
}

/// Writes `sample_id,AUG0,AUG1,...` with raw distances.
pub fn write_augmented_csv(
    path: &Path,
    sample_ids: &[String],
    features: &[AugmentedFeature],
) -> Result<()> {
    let mut out = Vec::new();
    let mut header = vec!["sample_id".to_string()];
    header.extend(features.iter().map(AugmentedFeature::name));
    writeln!(out, "{}", header.join(",")).expect("write to Vec");
    for (s, id) in sample_ids.iter().enumerate() {
        let mut line = id.clone();
        for f in features {
            line.push(',');
            line.push_str(&f.values[s].to_string());
        }
        writeln!(out, "{line}").expect("write to Vec");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::dataset::synthetic::planted_additive_block;
    use crate::rng;

    fn matrix(values: Array2<f64>) -> FeatureMatrix {
        let (m, n) = values.dim();
        FeatureMatrix::new(
            (0..m).map(|i| i.to_string()).collect(),
            (0..n).map(|j| j.to_string()).collect(),
            values,
            None,
        )
        .unwrap()
    }

    fn bicluster(m: &FeatureMatrix, rows: &[usize], cols: &[usize]) -> Bicluster {
        Bicluster::from_indices(m.values.view(), rows, cols).unwrap()
    }

    #[test]
    fn centroid_examples() {
        let m = matrix(Array2::from_elem((3, 3), 0.4));
        let c = centroid(&m, &bicluster(&m, &[0, 1, 2], &[0, 2]));
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|v| (v - 0.4).abs() < 1e-15));
        let m = matrix(array![[0.0, 1.0], [1.0, 1.0]]);
        let c = centroid(&m, &bicluster(&m, &[0, 1], &[0, 1]));
        assert_eq!(c[0], 0.5);
        let one = centroid(&m, &bicluster(&m, &[0, 1], &[1]));
        assert_eq!(one, vec![1.0]);
    }

    #[test]
    fn distance_examples() {
        let m = matrix(array![[0.5, 0.5, 0.0], [0.5, 0.5, 1.0], [1.5, 1.5, 1.5]]);
        let b = bicluster(&m, &[0, 1], &[0, 1]);
        let f = &distance_features(&m, &[b])[0];
        assert_eq!(f.values[0], 0.0);
        assert_eq!(f.values[1], 0.0);
        assert!((f.values[2] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distances_match_per_sample_summation() {
        let mut r = rng::stream(3, "test");
        let m = matrix(Array2::from_shape_simple_fn((5, 3), || r.random::<f64>()));
        let b = bicluster(&m, &[1, 3, 4], &[0, 2]);
        let f = &distance_features(&m, std::slice::from_ref(&b))[0];
        for s in 0..5 {
            let mut acc = 0.0;
            for &c in &[0usize, 2] {
                let mean = (m.values[[1, c]] + m.values[[3, c]] + m.values[[4, c]]) / 3.0;
                acc += (m.values[[s, c]] - mean).powi(2);
            }
            assert!((f.values[s] - acc.sqrt()).abs() < 1e-15);
        }
    }

    fn feature(values: Vec<f64>) -> AugmentedFeature {
        AugmentedFeature {
            index: 0,
            source: Bicluster {
                rows: vec![],
                cols: vec![],
                msr: 0.0,
                centroid: vec![],
            },
            columns: vec![],
            centroid: vec![],
            values,
        }
    }

    #[test]
    fn quantize_examples() {
        let (bins, _) = quantize(&feature(vec![0.0, 0.5, 1.0]), 2).unwrap();
        assert_eq!(bins, vec![0, 1, 1]);
        let (bins, scheme) = quantize(&feature(vec![0.3; 4]), 5).unwrap();
        assert_eq!(bins, vec![0; 4]);
        assert!(scheme.edges.is_empty());
        assert!(quantize(&feature(vec![0.0, 1.0]), 1).is_err());
    }

    #[test]
    fn uniform_values_fill_all_bins() {
        let mut r = rng::stream(8, "test");
        let vals: Vec<f64> = (0..500).map(|_| r.random::<f64>()).collect();
        let (bins, scheme) = quantize(&feature(vals.clone()), 5).unwrap();
        for k in 0..5 {
            assert!(bins.contains(&k));
        }
        for (v, b) in vals.iter().zip(&bins) {
            // Bin recomputed from the emitted edges.
            let expect = (1..5).filter(|&k| scheme.edges[k] <= *v).count();
            assert_eq!(*b, expect);
            assert!(scheme.edges[*b] <= *v);
        }
    }

    #[test]
    fn members_sit_closer_than_outsiders() {
        let mut wins = 0;
        for seed in 0..100 {
            let p = planted_additive_block(40, 10, 10, 4, 0.2, seed);
            let b = bicluster(&p.matrix, &p.rows, &p.cols);
            let f = &distance_features(&p.matrix, &[b])[0];
            let inside: f64 = p.rows.iter().map(|&r| f.values[r]).sum::<f64>() / p.rows.len() as f64;
            let outside_rows: Vec<usize> = (0..40).filter(|r| !p.rows.contains(r)).collect();
            let outside: f64 =
                outside_rows.iter().map(|&r| f.values[r]).sum::<f64>() / outside_rows.len() as f64;
            if inside <= outside {
                wins += 1;
            }
        }
        assert!(wins >= 95, "{wins}/100");
    }

    proptest! {
        #[test]
        fn distances_respect_triangle_inequality(
            vals in proptest::collection::vec(0.0f64..1.0, 24),
            a in 0usize..6,
            b in 0usize..6,
        ) {
            let m = matrix(Array2::from_shape_vec((6, 4), vals).unwrap());
            let bc = bicluster(&m, &[0, 2, 5], &[1, 3]);
            let f = &distance_features(&m, &[bc])[0];
            let direct = [1usize, 3].iter().map(|&c| (m.values[[a, c]] - m.values[[b, c]]).powi(2)).sum::<f64>().sqrt();
            prop_assert!((f.values[a] - f.values[b]).abs() <= direct + 1e-12);
            prop_assert!(f.values.iter().all(|&d| d >= 0.0));
        }

        #[test]
        fn quantization_is_monotone(vals in proptest::collection::vec(-3.0f64..3.0, 2..40), n_bins in 2usize..9) {
            let (bins, _) = quantize(&feature(vals.clone()), n_bins).unwrap();
            for i in 0..vals.len() {
                prop_assert!(bins[i] < n_bins);
                for j in 0..vals.len() {
                    if vals[i] <= vals[j] {
                        prop_assert!(bins[i] <= bins[j]);
                    }
                }
            }
        }
    }
}
