//! Stage-by-stage execution with every artifact written to disk.
//!
//! Output layout under the run directory:
//!
//! ```text
//! mine/     biclusters.json
//! augment/  augmented.csv  bins.json  features.json
//! fuse/     original.tsv  augmented.tsv  fused.tsv
//! train/    split.json  <variant>/model.ckpt  <variant>/loss.csv
//! eval/     metrics.csv  <variant>/roc.csv  <variant>/predictions.csv
//! sweep/    metrics.csv  summary.csv  reference.csv  roc/*.csv
//! check/    report.json
//! ```
//!
//! Every stage directory also holds `manifest.json` with the configuration
//! hash, the seeds and the SHA-256 of each artifact. A stage is built in a
//! `.<stage>.partial` directory and renamed into place only on success.
//!
//! The single-cell stages (`train`, `eval`, and `mine`/`augment` under
//! train-only preprocessing) use the first configured ratio and seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{distance_features, quantize_all, write_augmented_csv, BinScheme};
use crate::bicluster::{Bicluster, MiningParams};
use crate::checks::{self, PlantedSetup};
use crate::config::{RunConfig, Variant};
use crate::dataset::{split_by_ratio, FeatureMatrix, MinMaxStats, SplitPlan};
use crate::error::{Error, Result};
use crate::eval::roc::write_roc_csv;
use crate::eval::sweep::{
    cell_train_config, evaluate, metrics_csv, ratio_sweep, reference_csv, summary_csv, training_graph, Evaluation,
    SweepResult, METRICS_HEADER,
};
use crate::eval::variance::SyntheticVarianceSpec;
use crate::kgraph::{load_triples, save_triples, triples_from_table, AugmentedTable, KnowledgeGraph, TripleSet};
use crate::tucker::{checkpoint, train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Mine,
    Augment,
    Fuse,
    Train,
    Eval,
    Sweep,
    Check,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Mine => "mine",
            Stage::Augment => "augment",
            Stage::Fuse => "fuse",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Sweep => "sweep",
            Stage::Check => "check",
        }
    }

    /// The stage whose artifacts this one reads.
    pub fn input(self) -> Option<Stage> {
        match self {
            Stage::Augment => Some(Stage::Mine),
            Stage::Fuse => Some(Stage::Augment),
            Stage::Train => Some(Stage::Fuse),
            Stage::Eval => Some(Stage::Train),
            Stage::Mine | Stage::Sweep | Stage::Check => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the stage directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub config_sha256: String,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<ArtifactEntry>,
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: Stage,
    pub dir: PathBuf,
    /// Human-readable lines for the console.
    pub summary: Vec<String>,
    /// `false` only for a `check` run with a failing measurement.
    pub passed: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn files_under(dir: &Path, prefix: &str, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let name = entry.file_name().to_string_lossy().into_owned();
        let rel = if prefix.is_empty() { name } else { format!("{prefix}/{name}") };
        let path = entry.path();
        if path.is_dir() {
            files_under(&path, &rel, out)?;
        } else if rel != MANIFEST {
            out.push((rel, path));
        }
    }
    Ok(())
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NamedScheme {
    feature: String,
    #[serde(flatten)]
    scheme: BinScheme,
}

pub struct Pipeline {
    config: RunConfig,
    out: PathBuf,
    hash: String,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            out: config.output_dir.clone(),
            hash: config.canonical_hash(),
            config,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    /// Whether `stage` has a manifest for the current configuration and all
    /// of its artifacts still exist.
    pub fn is_current(&self, stage: Stage) -> bool {
        let dir = self.stage_dir(stage);
        match read_json::<Manifest>(&dir.join(MANIFEST)) {
            Ok(m) => m.config_sha256 == self.hash && m.artifacts.iter().all(|a| dir.join(&a.path).is_file()),
            Err(_) => false,
        }
    }

    /// Runs `stage`, first running any earlier stage whose artifacts are
    /// missing or stale.
    pub fn run(&self, stage: Stage) -> Result<StageOutcome> {
        if let Some(input) = stage.input() {
            if !self.is_current(input) {
                self.run(input)?;
            }
        }
        let name = stage.name();
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let tmp = self.out.join(format!(".{name}.partial"));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        std::fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let result = match stage {
            Stage::Mine => self.mine(&tmp),
            Stage::Augment => self.augment(&tmp),
            Stage::Fuse => self.fuse(&tmp),
            Stage::Train => self.train(&tmp),
            Stage::Eval => self.eval(&tmp),
            Stage::Sweep => self.sweep(&tmp),
            Stage::Check => self.check(&tmp),
        };
        let (summary, passed) = match result.and_then(|r| self.finish(stage, &tmp).map(|()| r)) {
            Ok(r) => r,
            Err(e) => {
                let _ = std::fs::remove_dir_all(&tmp);
                return Err(e.in_stage(name));
            }
        };
        Ok(StageOutcome {
            stage,
            dir: self.stage_dir(stage),
            summary,
            passed,
        })
    }

    fn finish(&self, stage: Stage, tmp: &Path) -> Result<()> {
        let mut files = Vec::new();
        files_under(tmp, "", &mut files)?;
        let artifacts = files
            .into_iter()
            .map(|(path, full)| {
                let bytes = std::fs::read(&full).map_err(|e| Error::io(&full, e))?;
                Ok(ArtifactEntry {
                    path,
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write_json(
            &tmp.join(MANIFEST),
            &Manifest {
                stage,
                config_sha256: self.hash.clone(),
                ratios: self.config.ratios.clone(),
                seeds: self.config.seeds.clone(),
                artifacts,
            },
        )?;
        let dest = self.stage_dir(stage);
        if dest.exists() {
            std::fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
        }
        std::fs::rename(tmp, &dest).map_err(|e| Error::io(&dest, e))
    }

    fn dataset(&self) -> Result<FeatureMatrix> {
        self.config.dataset.load()
    }

    /// Split of the single-cell stages.
    fn split(&self, raw: &FeatureMatrix) -> Result<SplitPlan> {
        split_by_ratio(raw, self.config.ratios[0], self.config.seeds[0])
    }

    /// Rows visible to normalization and mining.
    fn fit_rows(&self, raw: &FeatureMatrix) -> Result<Option<Vec<usize>>> {
        Ok(if self.config.protocol.train_only_preprocessing {
            Some(self.split(raw)?.train)
        } else {
            None
        })
    }

    fn normalized(&self, raw: &FeatureMatrix) -> Result<FeatureMatrix> {
        let rows = self.fit_rows(raw)?;
        Ok(MinMaxStats::fit(raw, rows.as_deref()).apply(raw))
    }

    fn mine(&self, dir: &Path) -> Result<(Vec<String>, bool)> {
        let raw = self.dataset()?;
        let rows = self.fit_rows(&raw)?;
        let augmentation = crate::augment::build_augmentation(&raw, &self.config.augment_params(), rows.as_deref())?;
        write_json(&dir.join("biclusters.json"), &augmentation.biclusters)?;
        Ok((vec![format!("{} biclusters", augmentation.biclusters.len())], true))
    }

    fn augment(&self, dir: &Path) -> Result<(Vec<String>, bool)> {
        let raw = self.dataset()?;
        let biclusters: Vec<Bicluster> = read_json(&self.stage_dir(Stage::Mine).join("biclusters.json"))?;
        let normalized = self.normalized(&raw)?;
        let features = distance_features(&normalized, &biclusters);
        write_augmented_csv(&dir.join("augmented.csv"), &raw.sample_ids, &features)?;
        let quantized = quantize_all(&features, self.config.n_bins)?;
        let schemes: Vec<NamedScheme> = quantized
            .iter()
            .map(|q| NamedScheme {
                feature: q.feature.name(),
                scheme: q.scheme.clone(),
            })
            .collect();
        write_json(&dir.join("bins.json"), &schemes)?;
        let table = AugmentedTable {
            sample_ids: raw.sample_ids.clone(),
            features: quantized,
        };
        write_json(&dir.join("features.json"), &table)?;
        Ok((vec![format!("{} augmented features", features.len())], true))
    }

    fn fuse(&self, dir: &Path) -> Result<(Vec<String>, bool)> {
        let raw = self.dataset()?;
        let table: AugmentedTable = read_json(&self.stage_dir(Stage::Augment).join("features.json"))?;
        let (so, sa) = triples_from_table(&raw, Some(&table), &self.config.triples)?;
        let fused: TripleSet = so.union(&sa).cloned().collect();
        save_triples(&dir.join("original.tsv"), &so)?;
        save_triples(&dir.join("augmented.tsv"), &sa)?;
        save_triples(&dir.join("fused.tsv"), &fused)?;
        Ok((
            vec![format!(
                "{} original, {} augmented, {} fused triples",
                so.len(),
                sa.len(),
                fused.len()
            )],
            true,
        ))
    }

    /// Training graph of one variant, rebuilt from the fuse artifacts.
    fn variant_graph(&self, variant: Variant, split: &SplitPlan) -> Result<KnowledgeGraph> {
        let fuse = self.stage_dir(Stage::Fuse);
        let so = load_triples(&fuse.join("original.tsv"))?;
        let sa = match variant {
            Variant::Baseline => None,
            Variant::Augmented => Some(load_triples(&fuse.join("augmented.tsv"))?),
        };
        Ok(training_graph(&so, sa.as_ref(), &split.test_ids, self.config.protocol.strict))
    }

    fn train_config(&self) -> TrainConfig {
        cell_train_config(&self.config, self.config.seeds[0])
    }

    fn train(&self, dir: &Path) -> Result<(Vec<String>, bool)> {
        let raw = self.dataset()?;
        let split = self.split(&raw)?;
        write_json(&dir.join("split.json"), &split)?;
        let cfg = self.train_config();
        let mut summary = Vec::new();
        for variant in self.config.variant.variants() {
            let graph = self.variant_graph(variant, &split)?;
            let outcome = train::train(&graph, &cfg).map_err(|e| e.in_stage(variant.as_str()))?;
            checkpoint::save(&dir.join(variant.as_str()).join("model.ckpt").tap_parent()?, &outcome.model, &graph, &cfg)?;
            let mut loss = String::from("epoch,loss\n");
            for (epoch, l) in outcome.history.iter().enumerate() {
                let _ = writeln!(loss, "{epoch},{l}");
            }
            write(&dir.join(variant.as_str()).join("loss.csv"), loss)?;
            summary.push(format!(
                "{variant}: {} entities, {} relations, {} triples, final loss {}",
                graph.n_entities(),
                graph.n_relations(),
                graph.triples.len(),
                outcome.history.last().map_or_else(|| "NA".to_string(), |l| format!("{l:.6}"))
            ));
        }
        Ok((summary, true))
    }

    fn eval(&self, dir: &Path) -> Result<(Vec<String>, bool)> {
        let raw = self.dataset()?;
        let train_dir = self.stage_dir(Stage::Train);
        let split: SplitPlan = read_json(&train_dir.join("split.json"))?;
        let dataset = self.config.dataset.display_name();
        let mut metrics = format!("{METRICS_HEADER}\n");
        let mut summary = Vec::new();
        for variant in self.config.variant.variants() {
            let graph = self.variant_graph(variant, &split)?;
            let (model, header) = checkpoint::load(&train_dir.join(variant.as_str()).join("model.ckpt"))?;
            header.check_graph(&graph)?;
            let ev = evaluate(&model, &graph, &raw, &split.test, self.config.protocol.renormalized_roc)?;
            write_evaluation(&dir.join(variant.as_str()), &ev)?;
            metrics.push_str(&metrics_line(&dataset, split.ratio, variant, split.seed, &ev));
            summary.push(describe(variant, &ev));
        }
        write(&dir.join("metrics.csv"), metrics)?;
        Ok((summary, true))
    }

    fn sweep(&self, dir: &Path) -> Result<(Vec<String>, bool)> {
        let raw = self.dataset()?;
        let result = ratio_sweep(&self.config.dataset.display_name(), &raw, &self.config)?;
        write_sweep(dir, &result)?;
        let summary = result
            .summary()
            .iter()
            .map(|s| {
                format!(
                    "ratio {} {}: mean acc {:.4} over {} seeds",
                    s.ratio, s.variant, s.acc, s.n_seeds
                )
            })
            .collect();
        Ok((summary, true))
    }

    fn check(&self, dir: &Path) -> Result<(Vec<String>, bool)> {
        let report = run_checks()?;
        write_json(&dir.join("report.json"), &report)?;
        let lines = report
            .items
            .iter()
            .map(|i| format!("{} {}: {}", if i.passed { "PASS" } else { "FAIL" }, i.name, i.detail))
            .collect();
        Ok((lines, report.items.iter().all(|i| i.passed)))
    }
}

trait TapParent {
    fn tap_parent(self) -> Result<PathBuf>;
}

impl TapParent for PathBuf {
    /// Creates the parent directory and hands the path back.
    fn tap_parent(self) -> Result<PathBuf> {
        if let Some(p) = self.parent() {
            std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
        }
        Ok(self)
    }
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn metrics_line(dataset: &str, ratio: f64, variant: Variant, seed: u64, ev: &Evaluation) -> String {
    let m = &ev.metrics;
    format!(
        "{dataset},{ratio},{variant},{seed},{},{},{},{},{}\n",
        m.acc,
        na(m.sen),
        na(m.spe),
        na(m.f1),
        na(ev.auc())
    )
}

fn describe(variant: Variant, ev: &Evaluation) -> String {
    let m = &ev.metrics;
    format!(
        "{variant}: acc {:.4} sen {} spe {} f1 {} auc {} on {} patients",
        m.acc,
        na(m.sen),
        na(m.spe),
        na(m.f1),
        na(ev.auc()),
        ev.sample_ids.len()
    )
}

/// `predictions.csv` and, when both classes are present, `roc.csv`.
pub fn write_evaluation(dir: &Path, ev: &Evaluation) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = String::from("sample_id,truth,predicted,score\n");
    for k in 0..ev.sample_ids.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            ev.sample_ids[k],
            label_name(ev.truth[k]),
            label_name(ev.predicted[k]),
            ev.scores[k]
        );
    }
    write(&dir.join("predictions.csv"), out)?;
    if let Some(roc) = &ev.roc {
        write_roc_csv(&dir.join("roc.csv"), roc)?;
    }
    Ok(())
}

fn label_name(l: crate::dataset::Label) -> &'static str {
    if l.is_positive() {
        "malignant"
    } else {
        "benign"
    }
}

pub fn write_sweep(dir: &Path, result: &SweepResult) -> Result<()> {
    write(&dir.join("metrics.csv"), metrics_csv(result))?;
    write(&dir.join("summary.csv"), summary_csv(result))?;
    write(&dir.join("reference.csv"), reference_csv())?;
    let roc_dir = dir.join("roc");
    std::fs::create_dir_all(&roc_dir).map_err(|e| Error::io(&roc_dir, e))?;
    for c in &result.cells {
        if let Some(roc) = &c.evaluation.roc {
            write_roc_csv(&roc_dir.join(format!("r{}_{}_s{}.csv", c.ratio, c.variant, c.seed)), roc)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub measurements: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

/// Oracle comparisons, planted-block recovery, memorization and the
/// variance experiment, each against a fixed bar.
pub fn run_checks() -> Result<CheckReport> {
    let mut items = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String, value: serde_json::Value| {
        items.push(CheckItem {
            name: name.to_string(),
            passed,
            detail,
            measurements: value,
        });
    };

    let b = checks::bicluster_oracle(200, 0);
    push(
        "bicluster-oracle",
        b.mismatches == 0 && b.max_msr_error < 1e-9,
        format!(
            "{} mismatches in {} greedy steps, max MSR error {:.2e}",
            b.mismatches, b.deletions_checked, b.max_msr_error
        ),
        serde_json::to_value(&b)?,
    );

    let setup = PlantedSetup {
        m: 30,
        n: 8,
        block_rows: 10,
        block_cols: 4,
        row_spread: 0.02,
        params: MiningParams::default(),
    };
    let p = checks::planted_recovery(&setup, 100, 0.9, 0);
    push(
        "planted-recovery",
        p.recovered * 100 >= 95 * p.trials,
        format!("{}/{} trials recovered", p.recovered, p.trials),
        serde_json::to_value(&p)?,
    );

    let t = checks::tucker_oracle(140, 1, 0)?;
    push(
        "tucker-oracle",
        t.max_score_error < 1e-10 && t.max_gradient_error < 1e-4,
        format!(
            "max score error {:.2e} over {} models, max gradient error {:.2e} over {} probes",
            t.max_score_error, t.scored_models, t.max_gradient_error, t.probes
        ),
        serde_json::to_value(&t)?,
    );

    let a = checks::auc_oracle(1000, 0)?;
    push(
        "auc-oracle",
        a.max_error < 1e-12,
        format!("max error {:.2e} over {} sets", a.max_error, a.sets),
        serde_json::to_value(&a)?,
    );

    let mem = checks::memorization(&TrainConfig::default())?;
    push(
        "memorization",
        mem.accuracy == 1.0 && mem.parameters_finite,
        format!("training accuracy {} after {} epochs", mem.accuracy, mem.epochs),
        serde_json::to_value(&mem)?,
    );

    let v = checks::variance(&SyntheticVarianceSpec::default())?;
    push(
        "variance-reduction",
        v.pass_fraction.is_some_and(|f| f >= 0.95),
        format!(
            "{}/{} conclusive trials pass, {} inconclusive",
            v.passes, v.conclusive, v.inconclusive
        ),
        serde_json::json!({
            "trials": v.trials,
            "conclusive": v.conclusive,
            "passes": v.passes,
            "pass_fraction": v.pass_fraction,
            "raw_variance": v.raw_variance,
            "augmented_variance": v.augmented_variance,
        }),
    );
    Ok(CheckReport { items })
}

/// Artifact hashes of every stage manifest found under `out`, keyed by
/// stage name.
pub fn manifests(out: &Path) -> Result<BTreeMap<String, Manifest>> {
    let mut found = BTreeMap::new();
    for stage in [
        Stage::Mine,
        Stage::Augment,
        Stage::Fuse,
        Stage::Train,
        Stage::Eval,
        Stage::Sweep,
        Stage::Check,
    ] {
        let path = out.join(stage.name()).join(MANIFEST);
        if path.is_file() {
            found.insert(stage.name().to_string(), read_json(&path)?);
        }
    }
    Ok(found)
}
