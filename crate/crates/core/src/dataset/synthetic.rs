//! Synthetic tables for tests, the `check` command and the browser demo.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;

use super::{ColumnKind, FeatureMatrix, FeatureSpec, Label, LabelSpec, TableSchema};
use crate::rng;

/// Matrix with one additive block planted in uniform noise.
#[derive(Debug, Clone)]
pub struct PlantedBlock {
    pub matrix: FeatureMatrix,
    /// Planted rows, ascending.
    pub rows: Vec<usize>,
    /// Planted columns, ascending.
    pub cols: Vec<usize>,
}

/// `m × n` matrix of U(0, 1) noise with a `block_rows × block_cols` block
/// `x_ij = a_i + b_j` (a_i ~ U(0, row_spread), b_j ~ U(0.2, 0.8)). Entries
/// stay in `[0, 1]` for `row_spread ≤ 0.2`, so the matrix can be mined
/// without renormalizing.
pub fn planted_additive_block(
    m: usize,
    n: usize,
    block_rows: usize,
    block_cols: usize,
    row_spread: f64,
    seed: u64,
) -> PlantedBlock {
    assert!(block_rows <= m && block_cols <= n);
    assert!((0.0..=0.2).contains(&row_spread));
    let mut rng = rng::stream(seed, "planted-block");
    let mut values = Array2::from_shape_simple_fn((m, n), || rng.random::<f64>());
    let mut rows = sample(&mut rng, m, block_rows).into_vec();
    let mut cols = sample(&mut rng, n, block_cols).into_vec();
    rows.sort_unstable();
    cols.sort_unstable();
    let a: Vec<f64> = rows.iter().map(|_| rng.random::<f64>() * row_spread).collect();
    let b: Vec<f64> = cols.iter().map(|_| rng.random_range(0.2..0.8)).collect();
    for (ai, &r) in a.iter().zip(&rows) {
        for (bj, &c) in b.iter().zip(&cols) {
            values[[r, c]] = ai + bj;
        }
    }
    PlantedBlock {
        matrix: FeatureMatrix::new(
            (0..m).map(|i| format!("r{i:03}")).collect(),
            (0..n).map(|j| format!("c{j:02}")).collect(),
            values,
            None,
        )
        .expect("well-formed synthetic matrix"),
        rows,
        cols,
    }
}

/// Ordinal patient table with a binary diagnosis driven by a joint pattern.
///
/// Each of `n` features takes levels `0..levels`. Malignant patients draw a
/// shared severity `s` and set the first `n / 2` features to `s` ± 1; benign
/// patients draw every feature independently. The remaining features are
/// noise for both classes. A fraction `label_noise` of labels is flipped.
pub fn ordinal_patients(
    m: usize,
    n: usize,
    levels: usize,
    label_noise: f64,
    seed: u64,
) -> FeatureMatrix {
    assert!(levels >= 3 && n >= 2);
    let mut rng = rng::stream(seed, "ordinal-patients");
    let top = (levels - 1) as i64;
    let coherent = n / 2;
    let mut values = Array2::zeros((m, n));
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let malignant = rng.random_bool(0.5);
        let severity = rng.random_range(top / 2..=top);
        for j in 0..n {
            let v = if malignant && j < coherent {
                (severity + rng.random_range(-1..=1)).clamp(0, top)
            } else {
                rng.random_range(0..=top)
            };
            values[[i, j]] = v as f64;
        }
        let flip = rng.random_bool(label_noise);
        labels.push(if malignant != flip {
            Label::Malignant
        } else {
            Label::Benign
        });
    }
    let level_names: Vec<String> = (0..levels).map(|l| l.to_string()).collect();
    FeatureMatrix::with_kinds(
        (0..m).map(|i| format!("p{i:03}")).collect(),
        (0..n).map(|j| format!("F{j}")).collect(),
        vec![
            ColumnKind::Categorical {
                levels: level_names
            };
            n
        ],
        values,
        Some(labels),
    )
    .expect("well-formed synthetic matrix")
}

/// CSV text (`id`, features, `diagnosis`) and the schema that reads it
/// back into `matrix`.
pub fn to_csv(matrix: &FeatureMatrix) -> (String, TableSchema) {
    let mut out = String::from("id");
    for name in &matrix.feature_names {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",diagnosis\n");
    for (i, id) in matrix.sample_ids.iter().enumerate() {
        out.push_str(id);
        for (j, kind) in matrix.kinds.iter().enumerate() {
            let v = matrix.values[[i, j]];
            out.push(',');
            match kind {
                ColumnKind::Numeric => out.push_str(&v.to_string()),
                ColumnKind::Categorical { levels } => out.push_str(&levels[v as usize]),
            }
        }
        let label = matrix.labels.as_ref().map_or("", |l| match l[i] {
            Label::Malignant => "M",
            Label::Benign => "B",
        });
        out.push(',');
        out.push_str(label);
        out.push('\n');
    }
    let features = matrix
        .feature_names
        .iter()
        .zip(&matrix.kinds)
        .map(|(name, kind)| match kind {
            ColumnKind::Numeric => FeatureSpec::numeric(name.clone()),
            ColumnKind::Categorical { levels } => FeatureSpec {
                name: name.clone(),
                levels: Some(levels.clone()),
            },
        })
        .collect();
    let schema = TableSchema {
        has_header: true,
        column_names: None,
        id_column: Some("id".into()),
        features,
        label: matrix.labels.as_ref().map(|_| LabelSpec {
            column: "diagnosis".into(),
            positive: vec!["M".into()],
            negative: vec!["B".into()],
        }),
        delimiter: ',',
        drop_missing_rows: false,
    };
    (out, schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_block_is_additive() {
        let p = planted_additive_block(30, 8, 10, 4, 0.2, 1);
        let v = &p.matrix.values;
        let (r0, c0) = (p.rows[0], p.cols[0]);
        for &r in &p.rows {
            for &c in &p.cols {
                let expect = v[[r, c0]] + v[[r0, c]] - v[[r0, c0]];
                assert!((v[[r, c]] - expect).abs() < 1e-12);
            }
        }
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn ordinal_patients_are_reproducible() {
        let a = ordinal_patients(40, 6, 5, 0.1, 9);
        let b = ordinal_patients(40, 6, 5, 0.1, 9);
        assert_eq!(a, b);
        assert!(a.values.iter().all(|&x| (0.0..=4.0).contains(&x)));
    }

    #[test]
    fn csv_round_trips() {
        let a = ordinal_patients(25, 4, 5, 0.1, 3);
        let (text, schema) = to_csv(&a);
        assert_eq!(super::super::read_table(text.as_bytes(), &schema).unwrap(), a);
        let p = planted_additive_block(12, 5, 4, 2, 0.1, 0).matrix;
        let (text, schema) = to_csv(&p);
        let back = super::super::read_table(text.as_bytes(), &schema).unwrap();
        assert_eq!(back.values, p.values);
    }
}
