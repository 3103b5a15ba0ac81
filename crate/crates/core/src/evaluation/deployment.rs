//! Weekly deployment metrics. Gold labels exist for every article scored that
//! week; the aggregate row pools the weekly confusion counts.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Counts, EvalError, SliceMetrics};
use crate::ingestion::ArticleId;
use crate::pipeline::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekInput {
    pub week: String,
    pub predictions: Vec<(ArticleId, Label)>,
    pub gold: Vec<(ArticleId, Label)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekRow {
    pub week: String,
    /// Number of gold-labeled data points.
    pub points: usize,
    pub metrics: SliceMetrics,
    /// No gold data at all; rendered as `n/a`.
    pub empty: bool,
}

impl WeekRow {
    fn new(week: String, counts: Counts) -> Self {
        WeekRow { week, points: counts.total(), metrics: SliceMetrics::from_counts(counts), empty: counts.total() == 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentReport {
    pub weeks: Vec<WeekRow>,
    pub aggregate: WeekRow,
}

pub const AGGREGATE_LABEL: &str = "Aggr.";

/// Per-week and pooled metrics. Every gold id needs a prediction and every
/// predicted positive needs a gold label; predicted negatives without gold
/// labels are ignored.
pub fn aggregate_deployment(weeks: &[WeekInput]) -> Result<DeploymentReport, EvalError> {
    if weeks.is_empty() {
        return Err(EvalError::InvalidArgument { message: "no weeks to aggregate".into(), offenders: Vec::new() });
    }
    let mut rows = Vec::with_capacity(weeks.len());
    let mut offenders = Vec::new();
    for w in weeks {
        let preds: HashMap<&ArticleId, Label> = w.predictions.iter().map(|(id, l)| (id, *l)).collect();
        let mut gold_ids = HashSet::new();
        let mut counts = Counts::default();
        for (id, gold) in &w.gold {
            if !gold_ids.insert(id) {
                offenders.push(format!("{}: {id} (gold twice)", w.week));
                continue;
            }
            match preds.get(id) {
                Some(p) => counts.record(*p, *gold),
                None => offenders.push(format!("{}: {id} (not predicted)", w.week)),
            }
        }
        for (id, l) in &w.predictions {
            if l.is_relevant() && !gold_ids.contains(id) {
                offenders.push(format!("{}: {id} (positive without gold)", w.week));
            }
        }
        rows.push(WeekRow::new(w.week.clone(), counts));
    }
    if !offenders.is_empty() {
        return Err(EvalError::InvalidArgument { message: "deployment labels incomplete".into(), offenders });
    }
    let pooled = rows.iter().map(|r| r.metrics.counts).sum();
    Ok(DeploymentReport { aggregate: WeekRow::new(AGGREGATE_LABEL.into(), pooled), weeks: rows })
}

impl DeploymentReport {
    pub fn render_table(&self) -> String {
        let mut out = String::from("Week | # Ex. | P | R | F1\n");
        for r in self.weeks.iter().chain(std::iter::once(&self.aggregate)) {
            out.push_str(&format!("{} | {} | {}\n", r.week, r.points, row_cells(r).join(" | ")));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("week,points,tp,fp,fn,tn,precision,recall,f1\n");
        for r in self.weeks.iter().chain(std::iter::once(&self.aggregate)) {
            let c = r.metrics.counts;
            let [p, rc, f] = row_cells(r);
            out.push_str(&format!("{},{},{},{},{},{},{p},{rc},{f}\n", r.week, r.points, c.tp, c.fp, c.fn_, c.tn));
        }
        out
    }
}

fn row_cells(r: &WeekRow) -> [String; 3] {
    if r.empty {
        return ["n/a".into(), "n/a".into(), "n/a".into()];
    }
    let m = &r.metrics;
    [super::fmt2(m.precision), super::fmt2(m.recall), super::fmt2(m.f1)]
}
