//! CSV and JSONL dumps of stored predictions, feedback and pools.

use std::io::Write;

use serde::Serialize;
use serow_core::jsonl;

use crate::{Result, Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Predictions,
    Feedback,
    Pool,
}

impl std::str::FromStr for ExportKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "predictions" => Ok(ExportKind::Predictions),
            "feedback" => Ok(ExportKind::Feedback),
            "pool" => Ok(ExportKind::Pool),
            other => Err(format!("unknown export `{other}` (predictions, feedback, pool)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "jsonl" => Ok(ExportFormat::Jsonl),
            other => Err(format!("unknown format `{other}` (csv, jsonl)")),
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct ExportFilter<'a> {
    pub run_id: Option<&'a str>,
    /// Required for pools; the latest version unless `pool_version` is set.
    pub language: Option<&'a str>,
    pub pool_version: Option<u32>,
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    prediction_id: i64,
    run_id: &'a str,
    article_id: &'a str,
    url: &'a str,
    title: &'a str,
    final_label: &'a str,
    justification: &'a str,
    reflection_invoked: bool,
    expert_label: &'a str,
    failure: &'a str,
}

#[derive(Serialize)]
struct FeedbackRow<'a> {
    feedback_id: i64,
    prediction_id: i64,
    article_ref: &'a str,
    run_ref: &'a str,
    expert_label: &'a str,
    labeled_at: String,
    annotator: &'a str,
    promoted_to_pool: bool,
    superseded_at: String,
}

#[derive(Serialize)]
struct DemonstrationRow<'a> {
    article_ref: &'a str,
    title: &'a str,
    summary: &'a str,
    label: &'a str,
    explanation: &'a str,
    language: &'a str,
}

fn csv_out<W: Write, T: Serialize>(out: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| StoreError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one export. Returns the number of records written.
pub fn export<W: Write>(
    store: &Store,
    kind: ExportKind,
    format: ExportFormat,
    filter: &ExportFilter<'_>,
    mut out: W,
) -> Result<usize> {
    match kind {
        ExportKind::Predictions => {
            let items = store.predictions(filter.run_id)?;
            match format {
                ExportFormat::Jsonl => jsonl::write_to(&mut out, &items)?,
                ExportFormat::Csv => csv_out(
                    &mut out,
                    items.iter().map(|i| PredictionRow {
                        prediction_id: i.prediction_id,
                        run_id: &i.run_id,
                        article_id: i.article_id.as_str(),
                        url: &i.url,
                        title: &i.title,
                        final_label: i.final_label.map_or("", |l| l.as_str()),
                        justification: i.classification_justification.as_deref().unwrap_or(""),
                        reflection_invoked: i.reflection_invoked,
                        expert_label: i.feedback.as_ref().map_or("", |f| f.expert_label.as_str()),
                        failure: i.failure.as_deref().unwrap_or(""),
                    }),
                )?,
            }
            Ok(items.len())
        }
        ExportKind::Feedback => {
            let mut records = store.all_feedback()?;
            if let Some(run) = filter.run_id {
                records.retain(|r| r.run_ref == run);
            }
            match format {
                ExportFormat::Jsonl => jsonl::write_to(&mut out, &records)?,
                ExportFormat::Csv => csv_out(
                    &mut out,
                    records.iter().map(|r| FeedbackRow {
                        feedback_id: r.feedback_id,
                        prediction_id: r.prediction_id,
                        article_ref: r.article_ref.as_str(),
                        run_ref: &r.run_ref,
                        expert_label: r.expert_label.as_str(),
                        labeled_at: r.labeled_at.to_rfc3339(),
                        annotator: &r.annotator,
                        promoted_to_pool: r.promoted_to_pool,
                        superseded_at: r.superseded_at.map(|t| t.to_rfc3339()).unwrap_or_default(),
                    }),
                )?,
            }
            Ok(records.len())
        }
        ExportKind::Pool => {
            let language = filter
                .language
                .ok_or_else(|| StoreError::InvalidArgument("pool export needs a language".into()))?;
            let pool = match filter.pool_version {
                Some(v) => store.pool_at(language, v)?,
                None => store.current_pool(language)?.map(|(_, p)| p),
            }
            .ok_or_else(|| StoreError::NotFound(format!("pool for {language}")))?;
            match format {
                ExportFormat::Jsonl => jsonl::write_to(&mut out, &pool.demonstrations)?,
                ExportFormat::Csv => csv_out(
                    &mut out,
                    pool.demonstrations.iter().map(|d| DemonstrationRow {
                        article_ref: d.article_ref.as_str(),
                        title: &d.title,
                        summary: &d.summary,
                        label: d.label.as_str(),
                        explanation: &d.explanation,
                        language: &d.language,
                    }),
                )?,
            }
            Ok(pool.len())
        }
    }
}
