//! Positive-class evaluation: metrics, multi-seed runs, the feature ablation
//! grid, the example-count sweep and deployment aggregation.
//!
//! Only the `relevant` class is scored; there is deliberately no accuracy.
//! Multi-seed reports give the mean and population standard deviation of
//! each per-seed metric.

mod deployment;
mod predictions;
mod report;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingestion::{Article, ArticleId};
use crate::pipeline::{ExamplePool, Label, Pipeline, PipelineConfig, Switches};

pub use deployment::{aggregate_deployment, DeploymentReport, WeekInput, WeekRow};
pub use predictions::{export_predictions, import_external_predictions, Prediction};
pub use report::{fmt2, mean_std_cell, round2, sweep_csv, triple_cell, ComparisonTable};

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const DEFAULT_SWEEP_KS: [usize; 5] = [2, 4, 6, 8, 10];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("invalid argument: {message}{}", if offenders.is_empty() { String::new() } else { format!(" [{}]", offenders.join(", ")) })]
    InvalidArgument { message: String, offenders: Vec<String> },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o: {0}")]
    Io(String),
}

impl EvalError {
    fn invalid(message: impl Into<String>) -> Self {
        EvalError::InvalidArgument { message: message.into(), offenders: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Demonstrations,
    Train,
    Validation,
    Test,
}

/// One line of a dataset file: an article with its gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledItem {
    #[serde(flatten)]
    pub article: Article,
    pub gold_label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub items: Vec<LabeledItem>,
    pub language: String,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(items: Vec<LabeledItem>, language: impl Into<String>, split: Split) -> Result<Self, EvalError> {
        let language = language.into();
        let mut seen = HashSet::new();
        let mut dupes = Vec::new();
        for it in &items {
            if !seen.insert(&it.article.id) {
                dupes.push(it.article.id.to_string());
            }
        }
        if !dupes.is_empty() {
            return Err(EvalError::InvalidArgument { message: "duplicate article ids".into(), offenders: dupes });
        }
        let foreign: Vec<String> =
            items.iter().filter(|i| i.article.language != language).map(|i| i.article.id.to_string()).collect();
        if !foreign.is_empty() {
            return Err(EvalError::InvalidArgument {
                message: format!("articles not in dataset language `{language}`"),
                offenders: foreign,
            });
        }
        Ok(LabeledDataset { items, language, split })
    }

    /// Loads a newline-delimited dataset file; the language comes from the
    /// first record.
    pub fn load(path: &Path, split: Split) -> Result<Self, EvalError> {
        let items: Vec<LabeledItem> = crate::jsonl::read(path).map_err(|e| match e {
            crate::jsonl::JsonlError::Parse { line, message, .. } => EvalError::Parse { line, message },
            other => EvalError::Io(other.to_string()),
        })?;
        let language = items.first().map(|i| i.article.language.clone()).unwrap_or_default();
        Self::new(items, language, split)
    }

    pub fn articles(&self) -> Vec<Article> {
        self.items.iter().map(|i| i.article.clone()).collect()
    }

    pub fn gold_positive_count(&self) -> usize {
        self.items.iter().filter(|i| i.gold_label.is_relevant()).count()
    }
}

/// Fails when an article id appears in more than one split of one language.
pub fn check_disjoint_splits(datasets: &[&LabeledDataset]) -> Result<(), EvalError> {
    let mut owner: HashMap<(&str, &ArticleId), Split> = HashMap::new();
    let mut offenders = Vec::new();
    for ds in datasets {
        for it in &ds.items {
            if let Some(prev) = owner.insert((ds.language.as_str(), &it.article.id), ds.split) {
                if prev != ds.split {
                    offenders.push(it.article.id.to_string());
                }
            }
        }
    }
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(EvalError::InvalidArgument { message: "articles shared between splits".into(), offenders })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        Counts { tp, fp, fn_, tn }
    }

    pub fn record(&mut self, predicted: Label, gold: Label) {
        match (predicted, gold) {
            (Label::Relevant, Label::Relevant) => self.tp += 1,
            (Label::Relevant, Label::NotRelevant) => self.fp += 1,
            (Label::NotRelevant, Label::Relevant) => self.fn_ += 1,
            (Label::NotRelevant, Label::NotRelevant) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.precision(), self.recall())
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Metrics of one prediction set against gold labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    /// Precision is reported as 0 because nothing was predicted positive.
    pub no_positives_predicted: bool,
}

impl SliceMetrics {
    pub fn from_counts(counts: Counts) -> Self {
        SliceMetrics {
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            counts,
            no_positives_predicted: counts.tp + counts.fp == 0,
        }
    }
}

/// Exact positive-class counting. Every gold id must be predicted exactly
/// once and every prediction must refer to a gold id.
pub fn compute_metrics(predictions: &[(ArticleId, Label)], gold: &LabeledDataset) -> Result<SliceMetrics, EvalError> {
    let gold_map: HashMap<&ArticleId, Label> = gold.items.iter().map(|i| (&i.article.id, i.gold_label)).collect();
    let mut seen: HashSet<&ArticleId> = HashSet::new();
    let mut offenders = Vec::new();
    let mut counts = Counts::default();
    for (id, label) in predictions {
        match gold_map.get(id) {
            Some(g) if seen.insert(id) => counts.record(*label, *g),
            Some(_) => offenders.push(format!("{id} (predicted twice)")),
            None => offenders.push(format!("{id} (not in gold)")),
        }
    }
    for it in &gold.items {
        if !seen.contains(&it.article.id) {
            offenders.push(format!("{} (not predicted)", it.article.id));
        }
    }
    if !offenders.is_empty() {
        return Err(EvalError::InvalidArgument { message: "predictions do not match gold".into(), offenders });
    }
    Ok(SliceMetrics::from_counts(counts))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: SliceMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub failed_articles: usize,
    pub first_error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean over completed seeds.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_seed: Vec<SeedMetrics>,
    pub mean_std: MetricSummary,
    /// Summed over completed seeds.
    pub counts: Counts,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_seeds: Vec<SeedFailure>,
    /// Some requested seed did not complete; means cover completed seeds only.
    pub partial: bool,
}

impl MetricsReport {
    pub fn from_seeds(per_seed: Vec<SeedMetrics>, failed_seeds: Vec<SeedFailure>) -> Self {
        let col = |f: fn(&SliceMetrics) -> f64| per_seed.iter().map(|s| f(&s.metrics)).collect::<Vec<_>>();
        let mean_std = MetricSummary {
            precision: MeanStd::of(&col(|m| m.precision)),
            recall: MeanStd::of(&col(|m| m.recall)),
            f1: MeanStd::of(&col(|m| m.f1)),
        };
        MetricsReport {
            precision: mean_std.precision.mean,
            recall: mean_std.recall.mean,
            f1: mean_std.f1.mean,
            counts: per_seed.iter().map(|s| s.metrics.counts).sum(),
            partial: !failed_seeds.is_empty(),
            per_seed,
            mean_std,
            failed_seeds,
        }
    }

    pub fn single(seed: u64, metrics: SliceMetrics) -> Self {
        Self::from_seeds(vec![SeedMetrics { seed, metrics }], Vec::new())
    }

    /// Row cells `P (std)`, `R (std)`, `F1 (std)`, or `n/a` with no seeds.
    pub fn cells(&self) -> [String; 3] {
        if self.per_seed.is_empty() {
            return ["n/a".into(), "n/a".into(), "n/a".into()];
        }
        let m = &self.mean_std;
        [mean_std_cell(m.precision), mean_std_cell(m.recall), mean_std_cell(m.f1)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub switches: Switches,
    pub report: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The eight feature-switch cells in table order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub cells: Vec<AblationCell>,
}

impl AblationGrid {
    pub fn is_complete(&self) -> bool {
        let keys: HashSet<Switches> = self.cells.iter().map(|c| c.switches).collect();
        self.cells.len() == 8 && keys.len() == 8
    }

    pub fn cell(&self, s: Switches) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.switches == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub report: MetricsReport,
}

/// Runs pipeline configurations over a labeled dataset.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    pipeline: &'a Pipeline,
    parallelism: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(pipeline: &'a Pipeline) -> Self {
        Evaluator { pipeline, parallelism: 1 }
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    /// Predictions for one configuration, or the failures if any article failed.
    pub fn predict(
        &self,
        dataset: &LabeledDataset,
        pool: &ExamplePool,
        config: &PipelineConfig,
    ) -> Result<Vec<(ArticleId, Label)>, Vec<crate::pipeline::StageFailure>> {
        let articles = dataset.articles();
        let results = self.pipeline.run_batch(&articles, pool, config, self.parallelism);
        let mut preds = Vec::with_capacity(results.len());
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(v) => preds.push((v.article_ref, v.final_label)),
                Err(f) => failures.push(f),
            }
        }
        if failures.is_empty() {
            Ok(preds)
        } else {
            Err(failures)
        }
    }

    /// One pipeline pass per seed; only the demonstration order changes.
    pub fn run_seeds(
        &self,
        dataset: &LabeledDataset,
        pool: &ExamplePool,
        base: &PipelineConfig,
        seeds: &[u64],
    ) -> Result<MetricsReport, EvalError> {
        if seeds.is_empty() {
            return Err(EvalError::invalid("at least one seed is required"));
        }
        base.validate().map_err(|e| EvalError::invalid(e.to_string()))?;
        pool.validate_for(base).map_err(|e| EvalError::invalid(e.to_string()))?;
        let mut per_seed = Vec::new();
        let mut failed = Vec::new();
        for &seed in seeds {
            match self.predict(dataset, pool, &base.with_seed(seed)) {
                Ok(preds) => per_seed.push(SeedMetrics { seed, metrics: compute_metrics(&preds, dataset)? }),
                Err(failures) => failed.push(SeedFailure {
                    seed,
                    failed_articles: failures.len(),
                    first_error: failures[0].to_string(),
                }),
            }
        }
        Ok(MetricsReport::from_seeds(per_seed, failed))
    }

    pub fn run_ablation(
        &self,
        dataset: &LabeledDataset,
        pool: &ExamplePool,
        base: &PipelineConfig,
        seeds: &[u64],
    ) -> Result<AblationGrid, EvalError> {
        if base.k > pool.len() {
            return Err(EvalError::invalid(format!("k = {} exceeds the pool size {}", base.k, pool.len())));
        }
        let cells = Switches::grid()
            .into_iter()
            .map(|switches| match self.run_seeds(dataset, pool, &base.with_switches(switches), seeds) {
                Ok(report) => AblationCell { switches, report: Some(report), error: None },
                Err(e) => AblationCell { switches, report: None, error: Some(e.to_string()) },
            })
            .collect();
        Ok(AblationGrid { cells })
    }

    /// One multi-seed run per `k`, in ascending `k`.
    pub fn sweep_examples(
        &self,
        dataset: &LabeledDataset,
        pool: &ExamplePool,
        base: &PipelineConfig,
        ks: &[usize],
        seeds: &[u64],
    ) -> Result<Vec<SweepRow>, EvalError> {
        let mut ks = ks.to_vec();
        ks.sort_unstable();
        ks.dedup();
        if let Some(&max) = ks.last() {
            if max > pool.len() {
                return Err(EvalError::invalid(format!("k = {max} exceeds the pool size {}", pool.len())));
            }
        }
        ks.into_iter()
            .map(|k| Ok(SweepRow { k, report: self.run_seeds(dataset, pool, &base.with_k(k), seeds)? }))
            .collect()
    }
}
