use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;

use super::{bn, init_model, DropoutMasks, Mode, OptimizerState, TrainConfig, TuckerModel};
use crate::error::{Error, Result};
use crate::kgraph::KnowledgeGraph;
use crate::rng;

pub struct TrainOutcome {
    pub model: TuckerModel,
    /// Mean training loss of every epoch.
    pub history: Vec<f64>,
    pub optimizer: OptimizerState,
}

/// Distinct `(subject, relation)` queries with every observed object.
pub fn training_queries(graph: &KnowledgeGraph) -> BTreeMap<(usize, usize), Vec<usize>> {
    let mut queries: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for &(s, r, o) in &graph.triples {
        queries.entry((s, r)).or_default().push(o);
    }
    queries
}

/// Trains a fresh model on every triple of `graph`.
pub fn train(graph: &KnowledgeGraph, config: &TrainConfig) -> Result<TrainOutcome> {
    let model = init_model(graph.n_entities(), graph.n_relations(), config)?;
    train_with_state(model, graph, config)
}

/// Continues training `model`, which must match the graph vocabularies.
pub fn train_with_state(
    mut model: TuckerModel,
    graph: &KnowledgeGraph,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if model.n_entities() != graph.n_entities() || model.n_relations() != graph.n_relations() {
        return Err(Error::InvalidParameter(
            "model shape does not match the graph vocabularies".into(),
        ));
    }
    let queries = training_queries(graph);
    if queries.is_empty() {
        return Err(Error::InvalidParameter("graph has no training triples".into()));
    }
    let mut order: Vec<((usize, usize), Vec<usize>)> = queries.into_iter().collect();
    let n_e = graph.n_entities();
    let smoothing = config.label_smoothing;
    let mut optimizer = OptimizerState::new(&model);
    let mut shuffle_rng = rng::stream(config.seed, "shuffle");
    let mut dropout_rng = rng::stream(config.seed, "dropout");
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(usize, usize)> = chunk.iter().map(|(q, _)| *q).collect();
            let mut targets = Array2::<f64>::zeros((batch.len(), n_e));
            for (row, (_, objects)) in chunk.iter().enumerate() {
                for &o in objects {
                    targets[[row, o]] = 1.0;
                }
            }
            if smoothing > 0.0 {
                targets.mapv_inplace(|y| (1.0 - smoothing) * y + 1.0 / n_e as f64);
            }
            let masks = DropoutMasks::sample(&mut dropout_rng, batch.len(), model.entity_dim(), config);
            let (loss, grads, cache) = model.loss_grads_cache(&batch, targets.view(), Mode::Train(&masks));
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss * batch.len() as f64;
            optimizer.apply(&mut model, &grads, config.learning_rate);
            if let (Some(layer), Some(c)) = (model.bn0.as_mut(), cache.bn0.as_ref()) {
                bn::update_running(layer, c, batch.len());
            }
            if let (Some(layer), Some(c)) = (model.bn1.as_mut(), cache.bn1.as_ref()) {
                bn::update_running(layer, c, batch.len());
            }
        }
        let mean = total / order.len() as f64;
        let finite = model.entity.iter().all(|v| v.is_finite())
            && model.relation.iter().all(|v| v.is_finite())
            && model.core.iter().all(|v| v.is_finite());
        if !finite || !mean.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: if finite { mean } else { f64::NAN },
            });
        }
        history.push(mean);
    }
    Ok(TrainOutcome {
        model,
        history,
        optimizer,
    })
}
