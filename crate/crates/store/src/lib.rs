//! Persistence for the weekly deployment loop: articles, runs, verdicts,
//! expert feedback and demonstration pool versions, plus the review API.

pub mod api;
mod db;
pub mod export;
mod weekly;

use serde::{Deserialize, Serialize};
use serow_core::ingestion::ArticleId;
use serow_core::pipeline::Label;

pub use db::Store;
pub use weekly::{weekly_run, weekly_run_with, WeeklyPlan};

pub const ENV_API_TOKEN: &str = "SEROW_API_TOKEN";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("database: {0}")]
    Db(#[from] rusqlite::Error),
    #[error("stored data is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Ingest(#[from] serow_core::ingestion::IngestError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Partial,
    Failed,
}

impl RunStatus {
    fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Partial => "partial",
            RunStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(RunStatus::Ok),
            "partial" => Ok(RunStatus::Partial),
            "failed" => Ok(RunStatus::Failed),
            other => Err(StoreError::Corrupt(format!("run status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub week: String,
    pub language: String,
    pub started_at: chrono::DateTime<chrono::Utc>,
    pub finished_at: chrono::DateTime<chrono::Utc>,
    pub config_fingerprint: String,
    pub pool_version: u32,
    pub article_count: usize,
    pub positive_count: usize,
    pub failed_count: usize,
    pub status: RunStatus,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

/// An expert label as submitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackLabel {
    pub article_ref: ArticleId,
    pub run_ref: String,
    pub expert_label: Label,
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub feedback_id: i64,
    pub prediction_id: i64,
    pub article_ref: ArticleId,
    pub run_ref: String,
    pub expert_label: Label,
    pub labeled_at: chrono::DateTime<chrono::Utc>,
    pub annotator: String,
    pub promoted_to_pool: bool,
    /// Set once a later label replaced this one.
    pub superseded_at: Option<chrono::DateTime<chrono::Utc>>,
}

/// One prediction as shown in the review queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub prediction_id: i64,
    pub run_id: String,
    pub article_id: ArticleId,
    pub title: String,
    pub url: String,
    pub language: String,
    pub summary_used: Option<String>,
    /// `None` when the pipeline failed on this article.
    pub final_label: Option<Label>,
    pub classification_label: Option<Label>,
    pub classification_justification: Option<String>,
    pub reflection_invoked: bool,
    pub reflection_confirmed: Option<bool>,
    pub failure: Option<String>,
    pub feedback: Option<FeedbackRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub page: usize,
    pub per_page: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFilter {
    #[default]
    Relevant,
    NotRelevant,
    Failed,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolVersionInfo {
    pub language: String,
    pub version: u32,
    pub size: usize,
    pub created_at: chrono::DateTime<chrono::Utc>,
    pub note: String,
}

/// Row counts per table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TableCounts {
    pub articles: usize,
    pub runs: usize,
    pub verdicts: usize,
    pub feedback: usize,
    pub pool_versions: usize,
}
