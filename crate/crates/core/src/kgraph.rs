//! Knowledge-graph triples built from the feature table and fused by set
//! union.
//!
//! Naming convention (all names are plain UTF-8 without tabs or newlines):
//!
//! | kind              | name                      |
//! |-------------------|---------------------------|
//! | patient entity    | `patient:<sample id>`     |
//! | feature relation  | `has:<feature>`           |
//! | value entity      | `val:<feature>=<level>`   |
//! | diagnosis         | `diagnosis`               |
//! | label entities    | `label:benign`, `label:malignant` |
//!
//! Augmented features use `AUG<i>` as the feature name and the bin index as
//! the level.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{BinScheme, QuantizedFeature};
use crate::dataset::{ColumnKind, FeatureMatrix, Label};
use crate::error::{Error, Result};

pub const DIAGNOSIS: &str = "diagnosis";
pub const BENIGN: &str = "label:benign";
pub const MALIGNANT: &str = "label:malignant";
const PATIENT_PREFIX: &str = "patient:";
const REVERSE_SUFFIX: &str = "~reverse";

/// Numeric columns with at most this many distinct values keep their raw
/// values as levels; wider columns are binned.
pub const MAX_RAW_LEVELS: usize = 10;

pub fn patient_entity(sample_id: &str) -> String {
    format!("{PATIENT_PREFIX}{sample_id}")
}

pub fn feature_relation(feature: &str) -> String {
    format!("has:{feature}")
}

pub fn value_entity(feature: &str, level: &str) -> String {
    format!("val:{feature}={level}")
}

pub fn label_entity(label: Label) -> &'static str {
    match label {
        Label::Benign => BENIGN,
        Label::Malignant => MALIGNANT,
    }
}

pub fn is_patient(entity: &str) -> bool {
    entity.starts_with(PATIENT_PREFIX)
}

/// A triple of entity and relation names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triple {
    pub fn new(subject: impl Into<String>, relation: impl Into<String>, object: impl Into<String>) -> Self {
        Triple {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }
}

pub type TripleSet = BTreeSet<Triple>;

/// Quantized augmented features aligned with a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedTable {
    pub sample_ids: Vec<String>,
    pub features: Vec<QuantizedFeature>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleOptions {
    /// Bins for numeric columns with more than [`MAX_RAW_LEVELS`] values.
    #[serde(default = "TripleOptions::default_bins")]
    pub numeric_bins: usize,
    /// Add `(object, relation~reverse, subject)` for every attribute triple.
    #[serde(default)]
    pub reciprocal: bool,
}

impl Default for TripleOptions {
    fn default() -> Self {
        TripleOptions {
            numeric_bins: Self::default_bins(),
            reciprocal: false,
        }
    }
}

impl TripleOptions {
    fn default_bins() -> usize {
        5
    }
}

/// Level names of one original column.
enum LevelNames {
    Categorical(Vec<String>),
    Raw,
    Binned(BinScheme),
}

impl LevelNames {
    fn for_column(kind: &ColumnKind, column: &[f64], n_bins: usize) -> Result<Self> {
        Ok(match kind {
            ColumnKind::Categorical { levels } => LevelNames::Categorical(levels.clone()),
            ColumnKind::Numeric => {
                let mut distinct: Vec<f64> = column.to_vec();
                distinct.sort_by(f64::total_cmp);
                distinct.dedup();
                if distinct.len() <= MAX_RAW_LEVELS {
                    LevelNames::Raw
                } else {
                    LevelNames::Binned(BinScheme::fit(column, n_bins)?)
                }
            }
        })
    }

    fn name(&self, value: f64) -> String {
        match self {
            LevelNames::Categorical(levels) => levels[value as usize].clone(),
            LevelNames::Raw => value.to_string(),
            LevelNames::Binned(scheme) => format!("bin{}", scheme.bin(value)),
        }
    }
}

/// Attribute and diagnosis triples of the original table (`S_o`) and the
/// augmented-feature triples (`S_a`).
pub fn triples_from_table(
    matrix: &FeatureMatrix,
    augmented: Option<&AugmentedTable>,
    options: &TripleOptions,
) -> Result<(TripleSet, TripleSet)> {
    let mut original = TripleSet::new();
    let names: Vec<LevelNames> = matrix
        .kinds
        .iter()
        .enumerate()
        .map(|(j, kind)| LevelNames::for_column(kind, &matrix.values.column(j).to_vec(), options.numeric_bins))
        .collect::<Result<_>>()?;
    let patients: Vec<String> = matrix.sample_ids.iter().map(|id| patient_entity(id)).collect();

    for (s, patient) in patients.iter().enumerate() {
        for (j, feature) in matrix.feature_names.iter().enumerate() {
            let level = names[j].name(matrix.values[[s, j]]);
            push_attribute(
                &mut original,
                patient,
                &feature_relation(feature),
                &value_entity(feature, &level),
                options.reciprocal,
            );
        }
        if let Some(labels) = &matrix.labels {
            original.insert(Triple::new(patient.clone(), DIAGNOSIS, label_entity(labels[s])));
        }
    }

    let mut extra = TripleSet::new();
    if let Some(aug) = augmented {
        if aug.sample_ids != matrix.sample_ids
            || aug.features.iter().any(|f| f.bins.len() != patients.len())
        {
            return Err(Error::MisalignedSamples);
        }
        for q in &aug.features {
            let name = q.feature.name();
            let relation = feature_relation(&name);
            for (patient, bin) in patients.iter().zip(&q.bins) {
                push_attribute(
                    &mut extra,
                    patient,
                    &relation,
                    &value_entity(&name, &bin.to_string()),
                    options.reciprocal,
                );
            }
        }
    }
    Ok((original, extra))
}

fn push_attribute(set: &mut TripleSet, patient: &str, relation: &str, value: &str, reciprocal: bool) {
    set.insert(Triple::new(patient, relation, value));
    if reciprocal {
        set.insert(Triple::new(value, format!("{relation}{REVERSE_SUFFIX}"), patient));
    }
}

/// Drops the diagnosis triples of the given patients.
pub fn without_diagnoses<'a>(set: &TripleSet, sample_ids: impl IntoIterator<Item = &'a String>) -> TripleSet {
    let held: BTreeSet<String> = sample_ids.into_iter().map(|id| patient_entity(id)).collect();
    set.iter()
        .filter(|t| !(t.relation == DIAGNOSIS && held.contains(&t.subject)))
        .cloned()
        .collect()
}

/// Drops every triple touching the given patients.
pub fn without_patients<'a>(set: &TripleSet, sample_ids: impl IntoIterator<Item = &'a String>) -> TripleSet {
    let held: BTreeSet<String> = sample_ids.into_iter().map(|id| patient_entity(id)).collect();
    set.iter()
        .filter(|t| !held.contains(&t.subject) && !held.contains(&t.object))
        .cloned()
        .collect()
}

/// Bidirectional name ↔ index map.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Indices follow sorted name order.
    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Self {
        let sorted: BTreeSet<String> = names.into_iter().collect();
        let names: Vec<String> = sorted.into_iter().collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Vocab { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Fused graph with integer vocabularies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub entities: Vocab,
    pub relations: Vocab,
    /// `(subject, relation, object)` ids, sorted and unique.
    pub triples: Vec<(usize, usize, usize)>,
    pub diagnosis_relation: usize,
    /// `[benign, malignant]` entity ids.
    pub label_entities: [usize; 2],
}

impl KnowledgeGraph {
    /// Graph over `triples`. The label entities, the diagnosis relation and
    /// `extra_entities` are always part of the vocabularies.
    pub fn build<I: IntoIterator<Item = String>>(triples: &TripleSet, extra_entities: I) -> Self {
        let entities = Vocab::from_names(
            triples
                .iter()
                .flat_map(|t| [t.subject.clone(), t.object.clone()])
                .chain([BENIGN.to_string(), MALIGNANT.to_string()])
                .chain(extra_entities),
        );
        let relations = Vocab::from_names(
            triples
                .iter()
                .map(|t| t.relation.clone())
                .chain([DIAGNOSIS.to_string()]),
        );
        let mut ids: Vec<(usize, usize, usize)> = triples
            .iter()
            .map(|t| {
                (
                    entities.id(&t.subject).expect("subject in vocabulary"),
                    relations.id(&t.relation).expect("relation in vocabulary"),
                    entities.id(&t.object).expect("object in vocabulary"),
                )
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        KnowledgeGraph {
            diagnosis_relation: relations.id(DIAGNOSIS).expect("diagnosis relation"),
            label_entities: [
                entities.id(BENIGN).expect("benign entity"),
                entities.id(MALIGNANT).expect("malignant entity"),
            ],
            entities,
            relations,
            triples: ids,
        }
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn patient(&self, sample_id: &str) -> Result<usize> {
        let name = patient_entity(sample_id);
        self.entities.id(&name).ok_or(Error::UnknownEntity(name))
    }

    /// The triples as names, for serialization.
    pub fn triple_set(&self) -> TripleSet {
        self.triples
            .iter()
            .map(|&(s, r, o)| {
                Triple::new(
                    self.entities.names[s].clone(),
                    self.relations.names[r].clone(),
                    self.entities.names[o].clone(),
                )
            })
            .collect()
    }
}

/// Union of the original and augmented triple sets.
pub fn fuse(original: &TripleSet, augmented: &TripleSet) -> KnowledgeGraph {
    let union: TripleSet = original.union(augmented).cloned().collect();
    KnowledgeGraph::build(&union, std::iter::empty())
}

const FILE_HEADER: &str = "# subject\trelation\tobject";

/// Writes one `subject<TAB>relation<TAB>object` line per triple, in sorted
/// order, after a single comment header.
pub fn write_triples<W: Write>(mut out: W, triples: &TripleSet) -> Result<()> {
    let io = |e| Error::io("<triples>", e);
    writeln!(out, "{FILE_HEADER}").map_err(io)?;
    for (k, t) in triples.iter().enumerate() {
        for part in [&t.subject, &t.relation, &t.object] {
            if part.is_empty() || part.contains(['\t', '\n', '\r']) || part.starts_with('#') {
                return Err(Error::TripleFormat {
                    line: k + 2,
                    reason: format!("name `{part}` cannot be written"),
                });
            }
        }
        writeln!(out, "{}\t{}\t{}", t.subject, t.relation, t.object).map_err(io)?;
    }
    Ok(())
}

pub fn read_triples<R: BufRead>(input: R) -> Result<TripleSet> {
    let mut set = TripleSet::new();
    for (k, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<triples>", e))?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        match parts.as_slice() {
            [s, r, o] if !s.is_empty() && !r.is_empty() && !o.is_empty() => {
                set.insert(Triple::new(*s, *r, *o));
            }
            _ => {
                return Err(Error::TripleFormat {
                    line: k + 1,
                    reason: format!("expected three tab-separated fields, got `{line}`"),
                })
            }
        }
    }
    Ok(set)
}

pub fn save_triples(path: &Path, triples: &TripleSet) -> Result<()> {
    let mut buf = Vec::new();
    write_triples(&mut buf, triples)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_triples(path: &Path) -> Result<TripleSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_triples(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    use super::*;
    use crate::augment::{distance_features, quantize_all};
    use crate::bicluster::Bicluster;

    fn one_patient() -> FeatureMatrix {
        FeatureMatrix::with_kinds(
            vec!["p1".into()],
            vec!["shape".into(), "size".into()],
            vec![
                ColumnKind::Categorical {
                    levels: vec!["oval".into(), "irregular".into()],
                },
                ColumnKind::Numeric,
            ],
            array![[1.0, 2.5]],
            Some(vec![Label::Malignant]),
        )
        .unwrap()
    }

    fn augmented_for(matrix: &FeatureMatrix, k: usize) -> AugmentedTable {
        let m = matrix.n_samples();
        let b = Bicluster {
            rows: (0..m).collect(),
            cols: vec![0, 1],
            msr: 0.0,
            centroid: vec![0.0, 0.0],
        };
        let feats = distance_features(matrix, &vec![b; k]);
        let feats: Vec<_> = feats
            .into_iter()
            .enumerate()
            .map(|(i, mut f)| {
                f.index = i;
                f
            })
            .collect();
        AugmentedTable {
            sample_ids: matrix.sample_ids.clone(),
            features: quantize_all(&feats, 3).unwrap(),
        }
    }

    #[test]
    fn counting_examples() {
        let m = one_patient();
        let (so, sa) = triples_from_table(&m, Some(&augmented_for(&m, 3)), &TripleOptions::default()).unwrap();
        assert_eq!(so.len(), 3);
        assert_eq!(sa.len(), 3);
        assert!(so.contains(&Triple::new("patient:p1", "has:shape", "val:shape=irregular")));
        assert!(so.contains(&Triple::new("patient:p1", "has:size", "val:size=2.5")));
        assert!(so.contains(&Triple::new("patient:p1", DIAGNOSIS, MALIGNANT)));
        assert!(sa.contains(&Triple::new("patient:p1", "has:AUG2", "val:AUG2=0")));
    }

    #[test]
    fn misaligned_ids_are_rejected() {
        let m = one_patient();
        let mut aug = augmented_for(&m, 1);
        aug.sample_ids = vec!["other".into()];
        assert!(matches!(
            triples_from_table(&m, Some(&aug), &TripleOptions::default()),
            Err(Error::MisalignedSamples)
        ));
    }

    #[test]
    fn wide_numeric_columns_are_binned() {
        let vals: Vec<f64> = (0..20).map(f64::from).collect();
        let m = FeatureMatrix::new(
            (0..20).map(|i| i.to_string()).collect(),
            vec!["age".into()],
            Array2::from_shape_vec((20, 1), vals).unwrap(),
            None,
        )
        .unwrap();
        let (so, _) = triples_from_table(&m, None, &TripleOptions::default()).unwrap();
        let objects: BTreeSet<&str> = so.iter().map(|t| t.object.as_str()).collect();
        assert_eq!(objects.len(), 5);
        assert!(objects.contains("val:age=bin4"));
    }

    #[test]
    fn fuse_examples() {
        let m = one_patient();
        let (so, sa) = triples_from_table(&m, Some(&augmented_for(&m, 2)), &TripleOptions::default()).unwrap();
        assert_eq!(fuse(&so, &TripleSet::new()), KnowledgeGraph::build(&so, std::iter::empty()));

        let g1 = fuse(&so, &sa);
        let again = fuse(&g1.triple_set(), &sa);
        assert_eq!(g1, again);

        let mut overlap = sa.clone();
        overlap.insert(so.iter().next().unwrap().clone());
        let g = fuse(&so, &overlap);
        assert_eq!(g.triples.len(), so.len() + sa.len());
    }

    #[test]
    fn graph_invariants() {
        let m = one_patient();
        let (so, sa) = triples_from_table(&m, Some(&augmented_for(&m, 2)), &TripleOptions::default()).unwrap();
        let g = fuse(&so, &sa);
        for &(s, _, o) in &g.triples {
            assert!(is_patient(g.entities.name(s).unwrap()));
            assert!(!is_patient(g.entities.name(o).unwrap()));
        }
        let diag = g.triples.iter().filter(|t| t.1 == g.diagnosis_relation).count();
        assert_eq!(diag, 1);
        assert_eq!(g.entities.name(g.label_entities[1]), Some(MALIGNANT));
    }

    #[test]
    fn held_out_diagnoses_keep_patients_in_vocabulary() {
        let m = one_patient();
        let (so, _) = triples_from_table(&m, None, &TripleOptions::default()).unwrap();
        let train = without_diagnoses(&so, &m.sample_ids);
        assert_eq!(train.len(), 2);
        let g = KnowledgeGraph::build(&train, std::iter::empty());
        assert!(g.patient("p1").is_ok());
        assert!(g.entities.id(MALIGNANT).is_some());

        let strict = without_patients(&so, &m.sample_ids);
        assert!(strict.is_empty());
    }

    #[test]
    fn reciprocal_triples() {
        let m = one_patient();
        let opts = TripleOptions {
            reciprocal: true,
            ..Default::default()
        };
        let (so, _) = triples_from_table(&m, None, &opts).unwrap();
        assert_eq!(so.len(), 5);
        assert!(so.contains(&Triple::new("val:size=2.5", "has:size~reverse", "patient:p1")));
    }

    #[test]
    fn bad_lines_are_rejected() {
        assert!(read_triples("a\tb\n".as_bytes()).is_err());
        assert!(read_triples("a\tb\tc\td\n".as_bytes()).is_err());
        let ok = read_triples("# comment\n\na\tb\tc\n".as_bytes()).unwrap();
        assert_eq!(ok.len(), 1);
        let mut bad = TripleSet::new();
        bad.insert(Triple::new("a\tb", "r", "o"));
        assert!(write_triples(Vec::new(), &bad).is_err());
    }

    fn name() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9:=_. -]{1,12}".prop_filter("no leading #", |s| !s.starts_with('#'))
    }

    proptest! {
        #[test]
        fn file_round_trip_is_exact(triples in proptest::collection::btree_set((name(), name(), name()), 0..30)) {
            let set: TripleSet = triples.into_iter().map(|(s, r, o)| Triple::new(s, r, o)).collect();
            let g = KnowledgeGraph::build(&set, std::iter::empty());
            let mut buf = Vec::new();
            write_triples(&mut buf, &g.triple_set()).unwrap();
            let reloaded = KnowledgeGraph::build(&read_triples(buf.as_slice()).unwrap(), std::iter::empty());
            prop_assert_eq!(&g, &reloaded);
            let mut buf2 = Vec::new();
            write_triples(&mut buf2, &reloaded.triple_set()).unwrap();
            prop_assert_eq!(buf, buf2);
        }

        #[test]
        fn union_size_bound(
            a in proptest::collection::btree_set((0u8..4, 0u8..3, 0u8..4), 0..20),
            b in proptest::collection::btree_set((0u8..4, 0u8..3, 0u8..4), 0..20),
        ) {
            let to_set = |s: &BTreeSet<(u8, u8, u8)>| -> TripleSet {
                s.iter().map(|(x, r, y)| Triple::new(format!("e{x}"), format!("r{r}"), format!("e{y}"))).collect()
            };
            let (sa, sb) = (to_set(&a), to_set(&b));
            let g = fuse(&sa, &sb);
            prop_assert!(g.triples.len() <= sa.len() + sb.len());
            prop_assert_eq!(g.triples.len() == sa.len() + sb.len(), sa.is_disjoint(&sb));
        }
    }
}
