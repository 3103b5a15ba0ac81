use chrono::{NaiveDate, Utc};
use serow_core::ingestion::{apply_filter, fetch_window_with, Article, HttpFetcher, IngestConfig, UreqFetcher};
use serow_core::pipeline::{Pipeline, PipelineConfig};
use serow_core::text::short_digest;

use crate::{Result, RunRecord, RunStatus, Store, StoreError};

/// One week of the deployment loop.
#[derive(Debug, Clone)]
pub struct WeeklyPlan {
    /// Free-form week label, e.g. `2023-W05`. Part of the idempotence key.
    pub week: String,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub ingest: IngestConfig,
    pub pipeline: PipelineConfig,
    pub parallelism: usize,
}

impl WeeklyPlan {
    pub fn run_id(&self) -> String {
        short_digest(&format!("{}\n{}", self.week, self.pipeline.fingerprint()))
    }
}

/// Fetches, filters and classifies one week and stores the result.
///
/// A week that already has a run under the same config fingerprint is
/// returned as stored without fetching or calling the model again.
pub fn weekly_run(store: &Store, pipeline: &Pipeline, plan: &WeeklyPlan) -> Result<RunRecord> {
    weekly_run_with(store, pipeline, plan, &UreqFetcher::default())
}

pub fn weekly_run_with(store: &Store, pipeline: &Pipeline, plan: &WeeklyPlan, http: &dyn HttpFetcher) -> Result<RunRecord> {
    if plan.week.trim().is_empty() {
        return Err(StoreError::InvalidArgument("week label must not be empty".into()));
    }
    plan.pipeline.validate().map_err(|e| StoreError::InvalidArgument(e.to_string()))?;
    let _guard = store.lock_runs();
    let fingerprint = plan.pipeline.fingerprint();
    if let Some(existing) = store.find_run(&plan.week, &fingerprint)? {
        log::info!("week {} already ran as {}", plan.week, existing.run_id);
        return Ok(existing);
    }
    let language = &plan.pipeline.language;
    let (pool_version, pool) = store
        .current_pool(language)?
        .ok_or_else(|| StoreError::Precondition(format!("no demonstration pool for language {language}")))?;
    pool.validate_for(&plan.pipeline).map_err(|e| StoreError::Precondition(e.to_string()))?;

    let started_at = Utc::now();
    let mut diagnostics = Vec::new();
    let mut fetched: Vec<Article> = Vec::new();
    let mut source_failures = 0;
    for source in plan.ingest.sources.iter().filter(|s| &s.language == language) {
        match fetch_window_with(source, plan.from, plan.to, http) {
            Ok(f) => {
                diagnostics.extend(f.diagnostics.into_iter().map(|d| format!("{}: {d}", source.name)));
                fetched.extend(f.articles);
            }
            Err(e) => {
                source_failures += 1;
                diagnostics.push(format!("{}: {e}", source.name));
            }
        }
    }
    let attempted = plan.ingest.sources.iter().filter(|s| &s.language == language).count();
    if attempted == 0 {
        return Err(StoreError::InvalidArgument(format!("no source configured for language {language}")));
    }
    if source_failures == attempted {
        return Err(StoreError::Precondition(format!("every source failed: {}", diagnostics.join("; "))));
    }
    // Two sources may carry the same story.
    let mut seen = std::collections::HashSet::new();
    fetched.retain(|a| seen.insert(a.id.clone()));
    fetched.sort_by(|a, b| (a.published_at, &a.id).cmp(&(b.published_at, &b.id)));
    let articles = apply_filter(&fetched, &plan.ingest.filter);

    let results = pipeline.run_batch(&articles, &pool, &plan.pipeline, plan.parallelism.max(1));
    let failed_count = results.iter().filter(|r| r.is_err()).count();
    let positive_count = results.iter().filter(|r| r.as_ref().is_ok_and(|v| v.final_label.is_relevant())).count();
    for f in results.iter().filter_map(|r| r.as_ref().err()) {
        diagnostics.push(f.to_string());
    }
    let status = if !articles.is_empty() && failed_count == articles.len() {
        RunStatus::Failed
    } else if failed_count > 0 || source_failures > 0 {
        RunStatus::Partial
    } else {
        RunStatus::Ok
    };
    let record = RunRecord {
        run_id: plan.run_id(),
        week: plan.week.clone(),
        language: language.clone(),
        started_at,
        finished_at: Utc::now(),
        config_fingerprint: fingerprint,
        pool_version,
        article_count: articles.len(),
        positive_count,
        failed_count,
        status,
        diagnostics,
    };
    store.save_run(&record, &plan.pipeline, &articles, &results)?;
    log::info!(
        "week {}: {} articles, {} relevant, {} failed",
        record.week,
        record.article_count,
        record.positive_count,
        record.failed_count
    );
    // Stored timestamps carry microseconds; hand back what a rerun will see.
    store.run(&record.run_id)?.ok_or_else(|| StoreError::Corrupt("saved run vanished".into()))
}
