//! Binary model checkpoint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "KGDATKR1"
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON (CheckpointHeader)
//! tensors      for each entry of header.tensors, in order:
//!              product(shape) f64 values, row-major
//! ```
//!
//! The header records dimensions, the SHA-256 of both vocabularies (names
//! joined by `\n`), the seed and the full training configuration.

use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BatchNorm, TrainConfig, TuckerModel};
use crate::error::{Error, Result};
use crate::kgraph::{KnowledgeGraph, Vocab};

const MAGIC: &[u8; 8] = b"KGDATKR1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub n_entities: usize,
    pub n_relations: usize,
    pub entity_dim: usize,
    pub relation_dim: usize,
    pub entity_vocab_sha256: String,
    pub relation_vocab_sha256: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub tensors: Vec<TensorInfo>,
}

impl CheckpointHeader {
    /// Fails unless the checkpoint was trained on these vocabularies.
    pub fn check_graph(&self, graph: &KnowledgeGraph) -> Result<()> {
        if self.entity_vocab_sha256 != vocab_hash(&graph.entities)
            || self.relation_vocab_sha256 != vocab_hash(&graph.relations)
        {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
        Ok(())
    }
}

pub fn vocab_hash(vocab: &Vocab) -> String {
    let mut h = Sha256::new();
    for (i, name) in vocab.names().iter().enumerate() {
        if i > 0 {
            h.update(b"\n");
        }
        h.update(name.as_bytes());
    }
    hex::encode(h.finalize())
}

fn tensors(model: &TuckerModel) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut out = vec![
        ("entity".to_string(), model.entity.shape().to_vec(), model.entity.iter().copied().collect()),
        ("relation".to_string(), model.relation.shape().to_vec(), model.relation.iter().copied().collect()),
        ("core".to_string(), model.core.shape().to_vec(), model.core.iter().copied().collect()),
    ];
    for (prefix, layer) in [("bn0", &model.bn0), ("bn1", &model.bn1)] {
        if let Some(b) = layer {
            for (field, values) in [
                ("gamma", &b.gamma),
                ("beta", &b.beta),
                ("running_mean", &b.running_mean),
                ("running_var", &b.running_var),
            ] {
                out.push((format!("{prefix}.{field}"), vec![values.len()], values.to_vec()));
            }
        }
    }
    out
}

pub fn encode(model: &TuckerModel, graph: &KnowledgeGraph, config: &TrainConfig) -> Result<Vec<u8>> {
    let parts = tensors(model);
    let header = CheckpointHeader {
        n_entities: model.n_entities(),
        n_relations: model.n_relations(),
        entity_dim: model.entity_dim(),
        relation_dim: model.relation_dim(),
        entity_vocab_sha256: vocab_hash(&graph.entities),
        relation_vocab_sha256: vocab_hash(&graph.relations),
        seed: model.seed,
        config: config.clone(),
        tensors: parts
            .iter()
            .map(|(name, shape, _)| TensorInfo {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let n_values: usize = parts.iter().map(|p| p.2.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * n_values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, values) in &parts {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(TuckerModel, CheckpointHeader)> {
    let bad = |msg: &str| Error::Checkpoint(msg.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = 16usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..body])?;

    let mut cursor = body;
    let mut take = |info: &TensorInfo| -> Result<Vec<f64>> {
        let n: usize = info.shape.iter().product();
        let end = cursor + 8 * n;
        if end > bytes.len() {
            return Err(bad("truncated tensor data"));
        }
        let values = bytes[cursor..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        cursor = end;
        Ok(values)
    };

    let mut entity = None;
    let mut relation = None;
    let mut core = None;
    let mut bn: [Option<BatchNorm>; 2] = [None, None];
    for info in &header.tensors {
        let values = take(info)?;
        let shape_err = |_| bad(&format!("tensor `{}` has an inconsistent shape", info.name));
        match (info.name.as_str(), info.shape.as_slice()) {
            ("entity", &[a, b]) => entity = Some(Array2::from_shape_vec((a, b), values).map_err(shape_err)?),
            ("relation", &[a, b]) => relation = Some(Array2::from_shape_vec((a, b), values).map_err(shape_err)?),
            ("core", &[a, b, c]) => core = Some(Array3::from_shape_vec((a, b, c), values).map_err(shape_err)?),
            (name, &[d]) if name.starts_with("bn0.") || name.starts_with("bn1.") => {
                let slot = &mut bn[usize::from(name.starts_with("bn1."))];
                let layer = slot.get_or_insert_with(|| BatchNorm::new(d));
                let values = Array1::from(values);
                match &name[4..] {
                    "gamma" => layer.gamma = values,
                    "beta" => layer.beta = values,
                    "running_mean" => layer.running_mean = values,
                    "running_var" => layer.running_var = values,
                    other => return Err(bad(&format!("unknown tensor field `{other}`"))),
                }
            }
            (name, _) => return Err(bad(&format!("unexpected tensor `{name}`"))),
        }
    }
    if cursor != bytes.len() {
        return Err(bad("trailing bytes after tensors"));
    }
    let [bn0, bn1] = bn;
    let model = TuckerModel {
        entity: entity.ok_or_else(|| bad("missing entity tensor"))?,
        relation: relation.ok_or_else(|| bad("missing relation tensor"))?,
        core: core.ok_or_else(|| bad("missing core tensor"))?,
        bn0,
        bn1,
        seed: header.seed,
    };
    if model.n_entities() != header.n_entities
        || model.n_relations() != header.n_relations
        || model.entity_dim() != header.entity_dim
        || model.relation_dim() != header.relation_dim
        || model.core.shape() != [header.entity_dim, header.relation_dim, header.entity_dim]
    {
        return Err(bad("tensor shapes disagree with the header"));
    }
    Ok((model, header))
}

pub fn save(path: &Path, model: &TuckerModel, graph: &KnowledgeGraph, config: &TrainConfig) -> Result<()> {
    let bytes = encode(model, graph, config)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(TuckerModel, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::{Triple, TripleSet};
    use crate::tucker::{init_model, train};

    fn graph() -> KnowledgeGraph {
        let mut set = TripleSet::new();
        set.insert(Triple::new("patient:a", "diagnosis", "label:benign"));
        set.insert(Triple::new("patient:b", "has:x", "val:x=1"));
        KnowledgeGraph::build(&set, std::iter::empty())
    }

    #[test]
    fn round_trip_reproduces_scores_bitwise() {
        let g = graph();
        for batch_norm in [false, true] {
            let cfg = TrainConfig {
                entity_dim: 5,
                relation_dim: 3,
                epochs: 3,
                batch_size: 1,
                batch_norm,
                ..TrainConfig::default()
            };
            let model = train::train(&g, &cfg).unwrap().model;
            let bytes = encode(&model, &g, &cfg).unwrap();
            let (back, header) = decode(&bytes).unwrap();
            assert_eq!(back, model);
            assert_eq!(header.config, cfg);
            header.check_graph(&g).unwrap();
            let p = g.patient("a").unwrap();
            assert_eq!(
                model.score_all(p, g.diagnosis_relation).unwrap(),
                back.score_all(p, g.diagnosis_relation).unwrap()
            );
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let g = graph();
        let cfg = TrainConfig {
            entity_dim: 2,
            relation_dim: 2,
            ..TrainConfig::default()
        };
        let model = init_model(g.n_entities(), g.n_relations(), &cfg).unwrap();
        let bytes = encode(&model, &g, &cfg).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"not a checkpoint").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
    }

    #[test]
    fn vocabulary_mismatch_is_detected() {
        let g = graph();
        let cfg = TrainConfig {
            entity_dim: 2,
            relation_dim: 2,
            ..TrainConfig::default()
        };
        let model = init_model(g.n_entities(), g.n_relations(), &cfg).unwrap();
        let (_, header) = decode(&encode(&model, &g, &cfg).unwrap()).unwrap();
        let mut other = TripleSet::new();
        other.insert(Triple::new("patient:z", "diagnosis", "label:benign"));
        let g2 = KnowledgeGraph::build(&other, std::iter::empty());
        assert!(header.check_graph(&g2).is_err());
    }
}
