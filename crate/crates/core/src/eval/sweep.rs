//! Training-ratio sweeps with paired baseline/augmented cells.
//!
//! A cell is one `(ratio, variant, seed)` triple. Both variants of a seed
//! share the split, so they are scored on the same held-out patients. The
//! seed also drives model initialization, shuffling and dropout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{metrics_from_confusion, ConfusionCounts, Metrics};
use super::roc::{roc_auc, Roc};
use crate::augment::{build_augmentation, Augmentation};
use crate::config::{RunConfig, Variant};
use crate::dataset::{split_by_ratio, FeatureMatrix, Label, SplitPlan};
use crate::error::{Error, Result};
use crate::kgraph::{patient_entity, triples_from_table, without_diagnoses, without_patients, AugmentedTable, KnowledgeGraph, TripleSet};
use crate::tucker::{decide, diagnosis_scores, train, TrainConfig, TuckerModel};

/// Training graph from attribute/diagnosis triples `so` and optional
/// bicluster triples `sa`: the diagnoses of `test_ids` are held out, and in
/// strict mode every triple of those patients is dropped while the patients
/// stay in the entity vocabulary.
pub fn training_graph(so: &TripleSet, sa: Option<&TripleSet>, test_ids: &[String], strict: bool) -> KnowledgeGraph {
    let mut triples: TripleSet = without_diagnoses(so, test_ids);
    if let Some(sa) = sa {
        triples.extend(sa.iter().cloned());
    }
    let mut extra = Vec::new();
    if strict {
        triples = without_patients(&triples, test_ids);
        extra = test_ids.iter().map(|id| patient_entity(id)).collect();
    }
    KnowledgeGraph::build(&triples, extra)
}

/// [`training_graph`] built straight from the table.
pub fn cell_graph(
    raw: &FeatureMatrix,
    augmentation: Option<&AugmentedTable>,
    test_ids: &[String],
    config: &RunConfig,
) -> Result<KnowledgeGraph> {
    let (so, sa) = triples_from_table(raw, augmentation, &config.triples)?;
    let sa = augmentation.is_some().then_some(&sa);
    Ok(training_graph(&so, sa, test_ids, config.protocol.strict))
}

/// Held-out predictions of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub sample_ids: Vec<String>,
    pub truth: Vec<Label>,
    pub predicted: Vec<Label>,
    /// ROC score per patient.
    pub scores: Vec<f64>,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    /// `None` when the held-out patients are all of one class.
    pub roc: Option<Roc>,
}

impl Evaluation {
    pub fn auc(&self) -> Option<f64> {
        self.roc.as_ref().map(|r| r.auc)
    }
}

pub fn evaluate(
    model: &TuckerModel,
    graph: &KnowledgeGraph,
    raw: &FeatureMatrix,
    rows: &[usize],
    renormalized_roc: bool,
) -> Result<Evaluation> {
    let labels = raw
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("dataset has no labels".into()))?;
    if rows.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let sample_ids: Vec<String> = rows.iter().map(|&r| raw.sample_ids[r].clone()).collect();
    let patients = sample_ids.iter().map(|id| graph.patient(id)).collect::<Result<Vec<_>>>()?;
    let pairs = diagnosis_scores(model, graph, &patients)?;
    let truth: Vec<Label> = rows.iter().map(|&r| labels[r]).collect();
    let predicted: Vec<Label> = pairs.iter().map(|&(b, m)| decide(b, m)).collect();
    let scores: Vec<f64> = pairs
        .iter()
        .map(|&(b, m)| if renormalized_roc { m / (m + b) } else { m })
        .collect();
    let counts = ConfusionCounts::from_predictions(&truth, &predicted);
    let positive: Vec<bool> = truth.iter().map(|l| l.is_positive()).collect();
    let roc = match roc_auc(&scores, &positive) {
        Ok(roc) => Some(roc),
        Err(Error::SingleClass { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(Evaluation {
        sample_ids,
        truth,
        predicted,
        scores,
        metrics: metrics_from_confusion(&counts)?,
        counts,
        roc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub ratio: f64,
    pub variant: Variant,
    pub seed: u64,
    pub n_biclusters: Option<usize>,
    pub final_loss: Option<f64>,
    pub evaluation: Evaluation,
}

/// Training configuration of a cell: the run's settings with the cell seed.
pub fn cell_train_config(config: &RunConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..config.train.clone()
    }
}

/// Augmentation a cell should use: the shared one, or one fitted on the
/// cell's training rows when the protocol asks for it.
pub fn cell_augmentation(
    raw: &FeatureMatrix,
    split: &SplitPlan,
    shared: Option<&Augmentation>,
    config: &RunConfig,
) -> Result<Augmentation> {
    match shared {
        Some(a) if !config.protocol.train_only_preprocessing => Ok(a.clone()),
        _ if config.protocol.train_only_preprocessing => {
            build_augmentation(raw, &config.augment_params(), Some(&split.train))
        }
        _ => build_augmentation(raw, &config.augment_params(), None),
    }
}

pub fn run_cell(
    raw: &FeatureMatrix,
    shared: Option<&Augmentation>,
    ratio: f64,
    variant: Variant,
    seed: u64,
    config: &RunConfig,
) -> Result<CellResult> {
    let split = split_by_ratio(raw, ratio, seed)?;
    let augmentation = match variant {
        Variant::Baseline => None,
        Variant::Augmented => Some(cell_augmentation(raw, &split, shared, config)?),
    };
    let graph = cell_graph(raw, augmentation.as_ref().map(|a| &a.table), &split.test_ids, config)?;
    let outcome = train::train(&graph, &cell_train_config(config, seed))?;
    let evaluation = evaluate(&outcome.model, &graph, raw, &split.test, config.protocol.renormalized_roc)?;
    Ok(CellResult {
        ratio,
        variant,
        seed,
        n_biclusters: augmentation.map(|a| a.biclusters.len()),
        final_loss: outcome.history.last().copied(),
        evaluation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub dataset: String,
    /// Ordered by ratio (as configured), variant, then seed (as configured).
    pub cells: Vec<CellResult>,
}

/// Every configured `(ratio, variant, seed)`, in report order.
pub fn sweep_cells(config: &RunConfig) -> Vec<(f64, Variant, u64)> {
    let mut cells = Vec::new();
    for &ratio in &config.ratios {
        for variant in config.variant.variants() {
            for &seed in &config.seeds {
                cells.push((ratio, variant, seed));
            }
        }
    }
    cells
}

pub fn cell_label(ratio: f64, variant: Variant, seed: u64) -> String {
    format!("cell ratio={ratio} variant={variant} seed={seed}")
}

/// Runs every cell. Cells are independent and run concurrently when the
/// `parallel` feature is on; results come back in report order.
pub fn ratio_sweep(dataset: &str, raw: &FeatureMatrix, config: &RunConfig) -> Result<SweepResult> {
    config.validate()?;
    let cells = sweep_cells(config);
    let needs_shared = !config.protocol.train_only_preprocessing
        && cells.iter().any(|&(_, v, _)| v == Variant::Augmented);
    let shared = if needs_shared {
        Some(build_augmentation(raw, &config.augment_params(), None).map_err(|e| e.in_stage("augment"))?)
    } else {
        None
    };
    let run = |&(ratio, variant, seed): &(f64, Variant, u64)| {
        run_cell(raw, shared.as_ref(), ratio, variant, seed, config).map_err(|e| e.in_stage(cell_label(ratio, variant, seed)))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<CellResult>> = {
        use rayon::prelude::*;
        cells.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<CellResult>> = cells.iter().map(run).collect();
    Ok(SweepResult {
        dataset: dataset.to_string(),
        cells: results.into_iter().collect::<Result<_>>()?,
    })
}

/// Mean over seeds of one `(ratio, variant)`; each metric averages the
/// seeds where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub ratio: f64,
    pub variant: Variant,
    pub n_seeds: usize,
    pub acc: f64,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

impl SweepResult {
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(f64, Variant)> = Vec::new();
        for c in &self.cells {
            if !keys.iter().any(|&(r, v)| r == c.ratio && v == c.variant) {
                keys.push((c.ratio, c.variant));
            }
        }
        keys.into_iter()
            .map(|(ratio, variant)| {
                let group: Vec<&CellResult> = self.cells.iter().filter(|c| c.ratio == ratio && c.variant == variant).collect();
                let m = |f: &dyn Fn(&Metrics) -> Option<f64>| mean_defined(group.iter().map(|c| f(&c.evaluation.metrics)));
                SummaryRow {
                    ratio,
                    variant,
                    n_seeds: group.len(),
                    acc: m(&|x| Some(x.acc)).expect("non-empty group"),
                    sen: m(&|x| x.sen),
                    spe: m(&|x| x.spe),
                    f1: m(&|x| x.f1),
                    auc: mean_defined(group.iter().map(|c| c.evaluation.auc())),
                }
            })
            .collect()
    }

    /// Seeds where the augmented cell beats the paired baseline cell on
    /// ACC, and the number of pairs compared.
    pub fn paired_wins(&self, ratio: f64) -> (usize, usize) {
        let mut wins = 0;
        let mut pairs = 0;
        for a in self.cells.iter().filter(|c| c.ratio == ratio && c.variant == Variant::Augmented) {
            if let Some(b) = self
                .cells
                .iter()
                .find(|c| c.ratio == ratio && c.variant == Variant::Baseline && c.seed == a.seed)
            {
                pairs += 1;
                wins += usize::from(a.evaluation.metrics.acc > b.evaluation.metrics.acc);
            }
        }
        (wins, pairs)
    }
}

pub const METRICS_HEADER: &str = "dataset,ratio,variant,seed,acc,sen,spe,f1,auc";

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn row(dataset: &str, ratio: &str, variant: &str, seed: &str, values: [Option<f64>; 5]) -> String {
    let mut line = format!("{dataset},{ratio},{variant},{seed}");
    for v in values {
        line.push(',');
        line.push_str(&cell(v));
    }
    line
}

/// One row per cell.
pub fn metrics_csv(result: &SweepResult) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for c in &result.cells {
        let m = &c.evaluation.metrics;
        out.push_str(&row(
            &result.dataset,
            &c.ratio.to_string(),
            c.variant.as_str(),
            &c.seed.to_string(),
            [Some(m.acc), m.sen, m.spe, m.f1, c.evaluation.auc()],
        ));
        out.push('\n');
    }
    out
}

/// One row per `(ratio, variant)` with `seed = mean`.
pub fn summary_csv(result: &SweepResult) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for s in result.summary() {
        out.push_str(&row(
            &result.dataset,
            &s.ratio.to_string(),
            s.variant.as_str(),
            "mean",
            [Some(s.acc), s.sen, s.spe, s.f1, s.auc],
        ));
        out.push('\n');
    }
    out
}

/// Published single-run numbers, kept for side-by-side reading only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub dataset: &'static str,
    pub ratio: Option<f64>,
    pub variant: Variant,
    pub acc: Option<f64>,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

pub fn reference_rows() -> Vec<ReferenceRow> {
    use Variant::{Augmented, Baseline};
    let ratios = [0.1, 0.3, 0.5, 0.7, 0.9];
    // Rows: ACC, SEN, SPE, F1; columns follow `ratios`.
    let birads: [(Variant, [[f64; 5]; 4]); 2] = [
        (
            Baseline,
            [
                [0.6492, 0.9587, 0.9650, 0.9731, 0.9597],
                [0.5615, 0.9814, 0.9817, 0.9849, 0.9724],
                [0.9926, 0.8798, 0.9179, 0.9385, 0.9249],
                [0.7192, 0.9736, 0.9764, 0.9820, 0.9724],
            ],
        ),
        (
            Augmented,
            [
                [0.7074, 0.9644, 0.9663, 0.9753, 0.9597],
                [0.6361, 0.9888, 0.9781, 0.9879, 0.9816],
                [0.9925, 0.8798, 0.9333, 0.9385, 0.925],
                [0.7767, 0.9773, 0.9772, 0.9835, 0.9727],
            ],
        ),
    ];
    let mut rows = Vec::new();
    for (variant, table) in birads {
        for (k, &ratio) in ratios.iter().enumerate() {
            rows.push(ReferenceRow {
                dataset: "BI-RADS",
                ratio: Some(ratio),
                variant,
                acc: Some(table[0][k]),
                sen: Some(table[1][k]),
                spe: Some(table[2][k]),
                f1: Some(table[3][k]),
                auc: None,
            });
        }
    }
    // ACC, SEN, SPE, F1 at the 10% ratio.
    let others: [(&str, Variant, [f64; 4]); 4] = [
        ("TI-RADS", Baseline, [0.8347, 0.9999, 0.6733, 0.8566]),
        ("TI-RADS", Augmented, [0.8662, 0.9999, 0.7355, 0.8807]),
        ("POP", Baseline, [0.443, 0.5, 0.2631, 0.5769]),
        ("POP", Augmented, [0.5569, 0.5666, 0.5263, 0.6601]),
    ];
    for (dataset, variant, [acc, sen, spe, f1]) in others {
        rows.push(ReferenceRow {
            dataset,
            ratio: Some(0.1),
            variant,
            acc: Some(acc),
            sen: Some(sen),
            spe: Some(spe),
            f1: Some(f1),
            auc: None,
        });
    }
    // Areas under the BI-RADS ROC curves; the ratio is not reported.
    for (variant, auc) in [(Baseline, 0.9759), (Augmented, 0.98)] {
        rows.push(ReferenceRow {
            dataset: "BI-RADS",
            ratio: None,
            variant,
            acc: None,
            sen: None,
            spe: None,
            f1: None,
            auc: Some(auc),
        });
    }
    rows
}

/// Reference values in the metrics table layout, with `seed = reported`.
pub fn reference_csv() -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in reference_rows() {
        out.push_str(&row(
            r.dataset,
            &r.ratio.map_or_else(|| "NA".to_string(), |x| x.to_string()),
            r.variant.as_str(),
            "reported",
            [r.acc, r.sen, r.spe, r.f1, r.auc],
        ));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DatasetConfig, Preset, VariantSelection};
    use crate::dataset::synthetic::ordinal_patients;

    fn tiny_config() -> RunConfig {
        let mut c = RunConfig::for_dataset(DatasetConfig {
            path: "unused".into(),
            name: Some("synthetic".into()),
            preset: Some(Preset::PostOperative),
            schema: None,
        });
        c.train = TrainConfig {
            epochs: 3,
            entity_dim: 6,
            relation_dim: 4,
            batch_size: 16,
            ..TrainConfig::default()
        };
        c.ratios = vec![0.5];
        c.seeds = vec![1];
        c
    }

    #[test]
    fn one_ratio_one_seed_both_variants_gives_two_cells() {
        let raw = ordinal_patients(24, 4, 3, 0.0, 7);
        let result = ratio_sweep("synthetic", &raw, &tiny_config()).unwrap();
        assert_eq!(result.cells.len(), 2);
        assert_eq!(result.cells[0].variant, Variant::Baseline);
        assert_eq!(result.cells[1].variant, Variant::Augmented);
        assert_eq!(metrics_csv(&result).lines().count(), 3);
    }

    #[test]
    fn paired_cells_share_held_out_patients() {
        let raw = ordinal_patients(24, 4, 3, 0.0, 7);
        let mut c = tiny_config();
        c.seeds = vec![1, 2];
        let result = ratio_sweep("synthetic", &raw, &c).unwrap();
        for seed in [1, 2] {
            let ids: Vec<&Vec<String>> = result
                .cells
                .iter()
                .filter(|x| x.seed == seed)
                .map(|x| &x.evaluation.sample_ids)
                .collect();
            assert_eq!(ids.len(), 2);
            assert_eq!(ids[0], ids[1]);
        }
        let (_, pairs) = result.paired_wins(0.5);
        assert_eq!(pairs, 2);
    }

    #[test]
    fn test_diagnoses_never_reach_the_training_graph() {
        let raw = ordinal_patients(20, 4, 3, 0.0, 3);
        let split = split_by_ratio(&raw, 0.5, 0).unwrap();
        let mut c = tiny_config();
        let g = cell_graph(&raw, None, &split.test_ids, &c).unwrap();
        let triples = g.triple_set();
        for id in &split.test_ids {
            let p = patient_entity(id);
            assert!(!triples.iter().any(|t| t.subject == p && t.relation == crate::kgraph::DIAGNOSIS));
            assert!(triples.iter().any(|t| t.subject == p));
        }
        c.protocol.strict = true;
        let g = cell_graph(&raw, None, &split.test_ids, &c).unwrap();
        for id in &split.test_ids {
            let p = patient_entity(id);
            assert!(!g.triple_set().iter().any(|t| t.subject == p));
            assert!(g.patient(id).is_ok());
        }
    }

    #[test]
    fn baseline_only_selection() {
        let raw = ordinal_patients(16, 4, 3, 0.0, 1);
        let mut c = tiny_config();
        c.variant = VariantSelection::Baseline;
        let result = ratio_sweep("synthetic", &raw, &c).unwrap();
        assert!(result.cells.iter().all(|x| x.variant == Variant::Baseline && x.n_biclusters.is_none()));
    }

    #[test]
    fn summary_averages_defined_values() {
        let raw = ordinal_patients(24, 4, 3, 0.0, 7);
        let mut c = tiny_config();
        c.seeds = vec![1, 2, 3];
        c.variant = VariantSelection::Baseline;
        let result = ratio_sweep("synthetic", &raw, &c).unwrap();
        let s = result.summary();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].n_seeds, 3);
        let mean = result.cells.iter().map(|x| x.evaluation.metrics.acc).sum::<f64>() / 3.0;
        assert!((s[0].acc - mean).abs() < 1e-12);
    }

    #[test]
    fn reference_table_layout() {
        let csv = reference_csv();
        assert!(csv.starts_with(METRICS_HEADER));
        assert!(csv.contains("POP,0.1,baseline,reported,0.443,0.5,0.2631,0.5769,NA"));
        assert!(csv.contains("BI-RADS,NA,augmented,reported,NA,NA,NA,NA,0.98"));
        assert_eq!(reference_rows().len(), 10 + 4 + 2);
    }

    #[test]
    fn renormalized_scores_stay_in_unit_interval() {
        let raw = ordinal_patients(20, 4, 3, 0.0, 2);
        let mut c = tiny_config();
        c.protocol.renormalized_roc = true;
        c.variant = VariantSelection::Baseline;
        let result = ratio_sweep("synthetic", &raw, &c).unwrap();
        assert!(result.cells[0].evaluation.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }
}
