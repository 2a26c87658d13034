//! Measurements behind the `check` command and the acceptance suite.
//!
//! Each function runs one experiment against the slow references in
//! [`crate::oracle`] or against synthetic data with a known answer and
//! reports what it measured. Thresholds are left to the caller.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bicluster::{mine, refine_with_trace, seed_columns, Deletion, MiningParams, Seed};
use crate::dataset::synthetic::planted_additive_block;
use crate::dataset::{FeatureMatrix, Label};
use crate::error::Result;
use crate::eval::roc_auc;
use crate::eval::variance::{variance_reduction_check, SyntheticVarianceSpec, VarianceReport};
use crate::kgraph::{KnowledgeGraph, Triple, TripleSet};
use crate::oracle;
use crate::rng;
use crate::tucker::{init_model, predict_diagnosis, train, DropoutMasks, Mode, TrainConfig};

fn small_matrix(r: &mut rng::Rng, rows: usize, cols: usize) -> FeatureMatrix {
    // Half the matrices use a coarse grid so that tied deletions occur.
    let grid = r.random_bool(0.5);
    let values = Array2::from_shape_simple_fn((rows, cols), || {
        if grid {
            f64::from(r.random_range(0..5u8)) / 4.0
        } else {
            r.random::<f64>()
        }
    });
    FeatureMatrix::new(
        (0..rows).map(|i| i.to_string()).collect(),
        (0..cols).map(|j| j.to_string()).collect(),
        values,
        None,
    )
    .expect("well-formed random matrix")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiclusterOracleReport {
    pub matrices: usize,
    pub deletions_checked: usize,
    /// Greedy steps where `refine` and the exhaustive search disagree.
    pub mismatches: usize,
    pub biclusters_checked: usize,
    pub max_msr_error: f64,
}

/// Replays every refinement on random matrices up to `6 × 5` and compares
/// each applied deletion with the exhaustive argmin; recomputes the MSR of
/// every mined bicluster from scratch.
pub fn bicluster_oracle(matrices: usize, seed: u64) -> BiclusterOracleReport {
    let mut r = rng::stream(seed, "check-bicluster");
    let mut report = BiclusterOracleReport {
        matrices,
        deletions_checked: 0,
        mismatches: 0,
        biclusters_checked: 0,
        max_msr_error: 0.0,
    };
    for _ in 0..matrices {
        let (rows, cols) = (r.random_range(2..=6), r.random_range(2..=5));
        let matrix = small_matrix(&mut r, rows, cols);
        let params = MiningParams {
            epsilon: r.random_range(0.05..0.5),
            delta: r.random_range(0.001..0.02),
            min_rows: Some(2),
            min_cols: 2,
            ..MiningParams::default()
        };
        let values = matrix.values.view();
        let mut seeds = seed_columns(&matrix, params.epsilon, 2);
        seeds.push(Seed {
            column: 0,
            rows: (0..rows).collect(),
        });
        for seed in &seeds {
            let (_, trace) = refine_with_trace(&matrix, seed, &params);
            let mut kept_rows = seed.rows.clone();
            let mut kept_cols: Vec<usize> = (0..cols).collect();
            for &applied in &trace {
                let expected = oracle::best_deletion(values, &kept_rows, &kept_cols, 2, 2);
                report.deletions_checked += 1;
                if expected != Some(applied) {
                    report.mismatches += 1;
                }
                match applied {
                    Deletion::Row(i) => kept_rows.retain(|&x| x != i),
                    Deletion::Col(j) => kept_cols.retain(|&x| x != j),
                }
            }
        }
        for b in mine(&matrix, &params) {
            let err = (b.msr - oracle::msr_direct(values, &b.rows, &b.cols)).abs();
            report.max_msr_error = report.max_msr_error.max(err);
            report.biclusters_checked += 1;
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRecoveryReport {
    pub trials: usize,
    /// Trials where one mined bicluster holds at least `min_recall` of the
    /// planted rows and of the planted columns.
    pub recovered: usize,
    pub min_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSetup {
    pub m: usize,
    pub n: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    pub row_spread: f64,
    pub params: MiningParams,
}

pub fn planted_recovery(setup: &PlantedSetup, trials: usize, min_recall: f64, seed: u64) -> PlantedRecoveryReport {
    let recall = |planted: &[usize], found: &[usize]| {
        planted.iter().filter(|x| found.contains(x)).count() as f64 / planted.len() as f64
    };
    let recovered = (0..trials as u64)
        .filter(|t| {
            let p = planted_additive_block(
                setup.m,
                setup.n,
                setup.block_rows,
                setup.block_cols,
                setup.row_spread,
                seed.wrapping_add(*t),
            );
            mine(&p.matrix, &setup.params)
                .iter()
                .any(|b| recall(&p.rows, &b.rows) >= min_recall && recall(&p.cols, &b.cols) >= min_recall)
        })
        .count();
    PlantedRecoveryReport {
        trials,
        recovered,
        min_recall,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerOracleReport {
    pub models: usize,
    /// Models without batch normalization, whose scores are compared.
    pub scored_models: usize,
    pub max_score_error: f64,
    pub probes: usize,
    pub max_gradient_error: f64,
}

/// Random tiny models (at most 6 entities, ranks at most 3). Scores are
/// compared with the explicit triple sum; gradients with central
/// differences, `probes_per_model` probes each, across evaluation mode,
/// dropout and batch normalization.
pub fn tucker_oracle(models: usize, probes_per_model: usize, seed: u64) -> Result<TuckerOracleReport> {
    let mut r = rng::stream(seed, "check-tucker");
    let mut report = TuckerOracleReport {
        models,
        scored_models: 0,
        max_score_error: 0.0,
        probes: 0,
        max_gradient_error: 0.0,
    };
    for k in 0..models {
        let n_e = r.random_range(2..=6);
        let n_r = r.random_range(1..=3);
        let config = TrainConfig {
            entity_dim: r.random_range(1..=3),
            relation_dim: r.random_range(1..=3),
            seed: r.random(),
            batch_norm: k % 4 == 3,
            ..TrainConfig::default()
        };
        let mut model = init_model(n_e, n_r, &config)?;
        // Larger core entries keep the logits away from zero.
        model.core.mapv_inplace(|w| w * 10.0);
        // The reference contraction has no normalization layers.
        for s in (0..n_e).filter(|_| !config.batch_norm) {
            for rel in 0..n_r {
                let scores = model.score_all(s, rel)?;
                for (o, p) in scores.iter().enumerate() {
                    let err = (p - oracle::tucker_probability(&model, s, rel, o)).abs();
                    report.max_score_error = report.max_score_error.max(err);
                }
            }
        }
        report.scored_models += usize::from(!config.batch_norm);
        let batch = r.random_range(2..=4);
        let queries: Vec<(usize, usize)> = (0..batch).map(|_| (r.random_range(0..n_e), r.random_range(0..n_r))).collect();
        let targets = Array2::from_shape_simple_fn((batch, n_e), || f64::from(u8::from(r.random_bool(0.3))));
        let masks = DropoutMasks::sample(&mut r, batch, config.entity_dim, &config);
        let mode = if k % 2 == 0 { Mode::Eval } else { Mode::Train(&masks) };
        // Batch statistics need more than one distinct row to be smooth.
        let mode = if config.batch_norm { Mode::Train(&masks) } else { mode };
        let (_, grads) = model.loss_and_grads(&queries, targets.view(), mode);
        let err = oracle::max_gradient_error(&model, &grads, &queries, targets.view(), mode, probes_per_model, r.random());
        report.max_gradient_error = report.max_gradient_error.max(err);
        report.probes += probes_per_model;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucOracleReport {
    pub sets: usize,
    pub max_error: f64,
}

/// Random score/label sets of size 2 to 20 drawn from a coarse grid, so
/// most contain ties.
pub fn auc_oracle(sets: usize, seed: u64) -> Result<AucOracleReport> {
    let mut r = rng::stream(seed, "check-auc");
    let mut max_error: f64 = 0.0;
    let mut done = 0;
    while done < sets {
        let n = r.random_range(2..=20);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..8u8)) / 7.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let auc = roc_auc(&scores, &labels)?.auc;
        max_error = max_error.max((auc - oracle::pairwise_auc(&scores, &labels)).abs());
        done += 1;
    }
    Ok(AucOracleReport { sets, max_error })
}

/// Twelve patients with three binary features and a diagnosis each:
/// `12 + 3 · 2 + 2 = 20` entities.
pub fn memorization_graph() -> (KnowledgeGraph, Vec<(String, Label)>) {
    let mut set = TripleSet::new();
    let mut truth = Vec::new();
    for p in 0..12usize {
        let label = if p % 3 == 0 { Label::Malignant } else { Label::Benign };
        let id = format!("m{p:02}");
        set.insert(Triple::new(
            crate::kgraph::patient_entity(&id),
            crate::kgraph::DIAGNOSIS,
            crate::kgraph::label_entity(label),
        ));
        for f in 0..3 {
            set.insert(Triple::new(
                crate::kgraph::patient_entity(&id),
                crate::kgraph::feature_relation(&format!("f{f}")),
                crate::kgraph::value_entity(&format!("f{f}"), &((p >> f) & 1).to_string()),
            ));
        }
        truth.push((id, label));
    }
    (KnowledgeGraph::build(&set, std::iter::empty()), truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizationReport {
    pub entities: usize,
    pub epochs: usize,
    pub accuracy: f64,
    pub first_loss: f64,
    pub final_loss: f64,
    pub parameters_finite: bool,
}

/// Trains on [`memorization_graph`] and scores its own diagnoses.
pub fn memorization(config: &TrainConfig) -> Result<MemorizationReport> {
    let (graph, truth) = memorization_graph();
    let outcome = train::train(&graph, config)?;
    let mut correct = 0;
    for (id, label) in &truth {
        let (_, predicted) = predict_diagnosis(&outcome.model, &graph, graph.patient(id)?)?;
        correct += usize::from(predicted == *label);
    }
    let m = &outcome.model;
    Ok(MemorizationReport {
        entities: graph.n_entities(),
        epochs: config.epochs,
        accuracy: correct as f64 / truth.len() as f64,
        first_loss: outcome.history.first().copied().unwrap_or(f64::NAN),
        final_loss: outcome.history.last().copied().unwrap_or(f64::NAN),
        parameters_finite: m.entity.iter().chain(m.relation.iter()).chain(m.core.iter()).all(|v| v.is_finite()),
    })
}

pub fn variance(spec: &SyntheticVarianceSpec) -> Result<VarianceReport> {
    variance_reduction_check(spec)
}
