use std::path::Path;
use std::sync::{Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row};
use serow_core::evaluation::{aggregate_deployment, DeploymentReport, WeekInput};
use serow_core::ingestion::{Article, ArticleId};
use serow_core::pipeline::{Demonstration, ExamplePool, Label, PipelineConfig, StageFailure, Verdict};

use crate::{
    FeedbackLabel, FeedbackRecord, LabelFilter, Page, PoolVersionInfo, Result, ReviewItem, RunRecord, RunStatus,
    StoreError, TableCounts,
};

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS articles (
    id TEXT PRIMARY KEY,
    url TEXT NOT NULL,
    source_domain TEXT NOT NULL,
    language TEXT NOT NULL,
    title TEXT NOT NULL,
    body TEXT NOT NULL,
    published_at TEXT NOT NULL,
    fetched_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS configs (
    fingerprint TEXT PRIMARY KEY,
    snapshot TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS runs (
    run_id TEXT PRIMARY KEY,
    week TEXT NOT NULL,
    language TEXT NOT NULL,
    started_at TEXT NOT NULL,
    finished_at TEXT NOT NULL,
    config_fingerprint TEXT NOT NULL REFERENCES configs(fingerprint),
    pool_version INTEGER NOT NULL,
    article_count INTEGER NOT NULL,
    positive_count INTEGER NOT NULL,
    failed_count INTEGER NOT NULL,
    status TEXT NOT NULL,
    diagnostics TEXT NOT NULL,
    UNIQUE (week, config_fingerprint)
);
CREATE TABLE IF NOT EXISTS verdicts (
    prediction_id INTEGER PRIMARY KEY AUTOINCREMENT,
    run_id TEXT NOT NULL REFERENCES runs(run_id),
    article_id TEXT NOT NULL REFERENCES articles(id),
    final_label TEXT,
    verdict TEXT,
    failure TEXT,
    UNIQUE (run_id, article_id)
);
CREATE TABLE IF NOT EXISTS feedback (
    feedback_id INTEGER PRIMARY KEY AUTOINCREMENT,
    prediction_id INTEGER NOT NULL REFERENCES verdicts(prediction_id),
    expert_label TEXT NOT NULL,
    labeled_at TEXT NOT NULL,
    annotator TEXT NOT NULL,
    promoted_to_pool INTEGER NOT NULL DEFAULT 0,
    superseded_at TEXT
);
CREATE INDEX IF NOT EXISTS feedback_active ON feedback (prediction_id) WHERE superseded_at IS NULL;
CREATE TABLE IF NOT EXISTS pool_versions (
    language TEXT NOT NULL,
    version INTEGER NOT NULL,
    created_at TEXT NOT NULL,
    demonstrations TEXT NOT NULL,
    note TEXT NOT NULL,
    PRIMARY KEY (language, version)
);
";

/// A single-file embedded store. Reads and writes go through one
/// connection; a weekly run also holds the run lock for its whole duration.
pub struct Store {
    conn: Mutex<Connection>,
    run_lock: Mutex<()>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").finish_non_exhaustive()
    }
}

fn ts(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

fn parse_ts(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| StoreError::Corrupt(format!("timestamp `{s}`: {e}")))
}

fn parse_label(s: &str) -> Result<Label> {
    s.parse().map_err(|_| StoreError::Corrupt(format!("label `{s}`")))
}

fn from_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| StoreError::Corrupt(e.to_string()))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("stored types serialize")
}

/// Raw columns of a run row, converted outside the rusqlite closure.
type RunRow = (String, String, String, String, String, String, u32, usize, usize, usize, String, String);

const RUN_COLUMNS: &str = "run_id, week, language, started_at, finished_at, config_fingerprint, pool_version, \
     article_count, positive_count, failed_count, status, diagnostics";

fn run_row(r: &Row<'_>) -> rusqlite::Result<RunRow> {
    Ok((
        r.get(0)?,
        r.get(1)?,
        r.get(2)?,
        r.get(3)?,
        r.get(4)?,
        r.get(5)?,
        r.get(6)?,
        r.get(7)?,
        r.get(8)?,
        r.get(9)?,
        r.get(10)?,
        r.get(11)?,
    ))
}

fn run_record(row: RunRow) -> Result<RunRecord> {
    let (run_id, week, language, started, finished, fp, pool_version, n, pos, failed, status, diag) = row;
    Ok(RunRecord {
        run_id,
        week,
        language,
        started_at: parse_ts(&started)?,
        finished_at: parse_ts(&finished)?,
        config_fingerprint: fp,
        pool_version,
        article_count: n,
        positive_count: pos,
        failed_count: failed,
        status: RunStatus::parse(&status)?,
        diagnostics: from_json(&diag)?,
    })
}

type FeedbackRow = (i64, i64, String, String, String, String, String, bool, Option<String>);

const FEEDBACK_COLUMNS: &str = "f.feedback_id, f.prediction_id, v.article_id, v.run_id, f.expert_label, f.labeled_at, \
     f.annotator, f.promoted_to_pool, f.superseded_at";

fn feedback_row(r: &Row<'_>) -> rusqlite::Result<FeedbackRow> {
    Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?, r.get(6)?, r.get(7)?, r.get(8)?))
}

fn feedback_record(row: FeedbackRow) -> Result<FeedbackRecord> {
    let (feedback_id, prediction_id, article, run, label, at, annotator, promoted, superseded) = row;
    Ok(FeedbackRecord {
        feedback_id,
        prediction_id,
        article_ref: ArticleId(article),
        run_ref: run,
        expert_label: parse_label(&label)?,
        labeled_at: parse_ts(&at)?,
        annotator,
        promoted_to_pool: promoted,
        superseded_at: superseded.as_deref().map(parse_ts).transpose()?,
    })
}

impl Store {
    pub fn open(path: &Path) -> Result<Self> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self> {
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Store { conn: Mutex::new(conn), run_lock: Mutex::new(()) })
    }

    fn conn(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn lock_runs(&self) -> MutexGuard<'_, ()> {
        self.run_lock.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn counts(&self) -> Result<TableCounts> {
        let c = self.conn();
        let n = |t: &str| -> Result<usize> { Ok(c.query_row(&format!("SELECT COUNT(*) FROM {t}"), [], |r| r.get(0))?) };
        Ok(TableCounts {
            articles: n("articles")?,
            runs: n("runs")?,
            verdicts: n("verdicts")?,
            feedback: n("feedback")?,
            pool_versions: n("pool_versions")?,
        })
    }

    // ---- pools

    /// Stores `pool` as the next version for its language.
    pub fn put_pool(&self, pool: &ExamplePool, note: &str) -> Result<PoolVersionInfo> {
        pool.validate().map_err(|e| StoreError::InvalidArgument(e.to_string()))?;
        let c = self.conn();
        Self::insert_pool(&c, pool, note)
    }

    fn insert_pool(c: &Connection, pool: &ExamplePool, note: &str) -> Result<PoolVersionInfo> {
        let version: u32 = c.query_row(
            "SELECT COALESCE(MAX(version), 0) + 1 FROM pool_versions WHERE language = ?1",
            [&pool.language],
            |r| r.get(0),
        )?;
        let created_at = Utc::now();
        c.execute(
            "INSERT INTO pool_versions (language, version, created_at, demonstrations, note) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![pool.language, version, ts(&created_at), to_json(&pool.demonstrations), note],
        )?;
        Ok(PoolVersionInfo { language: pool.language.clone(), version, size: pool.len(), created_at, note: note.into() })
    }

    /// Latest pool version for `language`.
    pub fn current_pool(&self, language: &str) -> Result<Option<(u32, ExamplePool)>> {
        let c = self.conn();
        Self::load_pool(&c, language, None)
    }

    pub fn pool_at(&self, language: &str, version: u32) -> Result<Option<ExamplePool>> {
        let c = self.conn();
        Ok(Self::load_pool(&c, language, Some(version))?.map(|(_, p)| p))
    }

    fn load_pool(c: &Connection, language: &str, version: Option<u32>) -> Result<Option<(u32, ExamplePool)>> {
        let row: Option<(u32, String)> = match version {
            Some(v) => c
                .query_row(
                    "SELECT version, demonstrations FROM pool_versions WHERE language = ?1 AND version = ?2",
                    params![language, v],
                    |r| Ok((r.get(0)?, r.get(1)?)),
                )
                .optional()?,
            None => c
                .query_row(
                    "SELECT version, demonstrations FROM pool_versions WHERE language = ?1 ORDER BY version DESC LIMIT 1",
                    [language],
                    |r| Ok((r.get(0)?, r.get(1)?)),
                )
                .optional()?,
        };
        row.map(|(v, demos)| {
            let demonstrations: Vec<Demonstration> = from_json(&demos)?;
            Ok((v, ExamplePool { demonstrations, language: language.into() }))
        })
        .transpose()
    }

    pub fn pool_versions(&self, language: &str) -> Result<Vec<PoolVersionInfo>> {
        let c = self.conn();
        let mut st = c.prepare(
            "SELECT version, created_at, demonstrations, note FROM pool_versions WHERE language = ?1 ORDER BY version",
        )?;
        let rows = st.query_map([language], |r| {
            Ok((r.get::<_, u32>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, String>(3)?))
        })?;
        rows.map(|row| {
            let (version, at, demos, note) = row?;
            let demos: Vec<Demonstration> = from_json(&demos)?;
            Ok(PoolVersionInfo { language: language.into(), version, size: demos.len(), created_at: parse_ts(&at)?, note })
        })
        .collect()
    }

    // ---- runs

    pub fn find_run(&self, week: &str, config_fingerprint: &str) -> Result<Option<RunRecord>> {
        let c = self.conn();
        let row = c
            .query_row(
                &format!("SELECT {RUN_COLUMNS} FROM runs WHERE week = ?1 AND config_fingerprint = ?2"),
                params![week, config_fingerprint],
                run_row,
            )
            .optional()?;
        row.map(run_record).transpose()
    }

    pub fn run(&self, run_id: &str) -> Result<Option<RunRecord>> {
        let c = self.conn();
        let row = c.query_row(&format!("SELECT {RUN_COLUMNS} FROM runs WHERE run_id = ?1"), [run_id], run_row).optional()?;
        row.map(run_record).transpose()
    }

    pub fn runs(&self) -> Result<Vec<RunRecord>> {
        let c = self.conn();
        let mut st = c.prepare(&format!("SELECT {RUN_COLUMNS} FROM runs ORDER BY week, started_at, run_id"))?;
        let rows: Vec<RunRow> = st.query_map([], run_row)?.collect::<rusqlite::Result<_>>()?;
        rows.into_iter().map(run_record).collect()
    }

    pub fn config_snapshot(&self, fingerprint: &str) -> Result<Option<PipelineConfig>> {
        let c = self.conn();
        let s: Option<String> =
            c.query_row("SELECT snapshot FROM configs WHERE fingerprint = ?1", [fingerprint], |r| r.get(0)).optional()?;
        s.as_deref().map(from_json).transpose()
    }

    /// Persists a finished run in one transaction.
    pub fn save_run(
        &self,
        record: &RunRecord,
        config: &PipelineConfig,
        articles: &[Article],
        results: &[std::result::Result<Verdict, StageFailure>],
    ) -> Result<()> {
        if articles.len() != results.len() {
            return Err(StoreError::InvalidArgument("one result per article is required".into()));
        }
        let mut c = self.conn();
        let tx = c.transaction()?;
        tx.execute(
            "INSERT OR IGNORE INTO configs (fingerprint, snapshot) VALUES (?1, ?2)",
            params![record.config_fingerprint, to_json(config)],
        )?;
        for a in articles {
            tx.execute(
                "INSERT OR IGNORE INTO articles (id, url, source_domain, language, title, body, published_at, fetched_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
                params![a.id.0, a.url, a.source_domain, a.language, a.title, a.body, ts(&a.published_at), ts(&a.fetched_at)],
            )?;
        }
        tx.execute(
            &format!("INSERT INTO runs ({RUN_COLUMNS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12)"),
            params![
                record.run_id,
                record.week,
                record.language,
                ts(&record.started_at),
                ts(&record.finished_at),
                record.config_fingerprint,
                record.pool_version,
                record.article_count,
                record.positive_count,
                record.failed_count,
                record.status.as_str(),
                to_json(&record.diagnostics),
            ],
        )?;
        for (a, r) in articles.iter().zip(results) {
            let (label, verdict, failure) = match r {
                Ok(v) => (Some(v.final_label.as_str()), Some(to_json(v)), None),
                Err(f) => (None, None, Some(f.to_string())),
            };
            tx.execute(
                "INSERT INTO verdicts (run_id, article_id, final_label, verdict, failure) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![record.run_id, a.id.0, label, verdict, failure],
            )?;
        }
        tx.commit()?;
        Ok(())
    }

    // ---- review queue

    pub fn review_items(&self, run_id: &str, filter: LabelFilter, page: usize, per_page: usize) -> Result<Page<ReviewItem>> {
        if page == 0 || per_page == 0 || per_page > 500 {
            return Err(StoreError::InvalidArgument("page must be >= 1 and per_page in 1..=500".into()));
        }
        if self.run(run_id)?.is_none() {
            return Err(StoreError::NotFound(format!("run {run_id}")));
        }
        let cond = match filter {
            LabelFilter::Relevant => "AND v.final_label = 'relevant'",
            LabelFilter::NotRelevant => "AND v.final_label = 'not_relevant'",
            LabelFilter::Failed => "AND v.final_label IS NULL",
            LabelFilter::All => "",
        };
        let c = self.conn();
        let total: usize =
            c.query_row(&format!("SELECT COUNT(*) FROM verdicts v WHERE v.run_id = ?1 {cond}"), [run_id], |r| r.get(0))?;
        let mut st = c.prepare(&format!(
            "SELECT v.prediction_id, v.article_id, a.title, a.url, a.language, v.verdict, v.failure
             FROM verdicts v JOIN articles a ON a.id = v.article_id
             WHERE v.run_id = ?1 {cond} ORDER BY v.prediction_id LIMIT ?2 OFFSET ?3"
        ))?;
        type ItemRow = (i64, String, String, String, String, Option<String>, Option<String>);
        let rows: Vec<ItemRow> = st
            .query_map(params![run_id, per_page, (page - 1) * per_page], |r| {
                Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?, r.get(6)?))
            })?
            .collect::<rusqlite::Result<_>>()?;
        let mut items = Vec::with_capacity(rows.len());
        for (prediction_id, article_id, title, url, language, verdict, failure) in rows {
            let verdict: Option<Verdict> = verdict.as_deref().map(from_json).transpose()?;
            items.push(ReviewItem {
                prediction_id,
                run_id: run_id.into(),
                article_id: ArticleId(article_id),
                title,
                url,
                language,
                summary_used: verdict.as_ref().map(|v| v.summary_used.clone()),
                final_label: verdict.as_ref().map(|v| v.final_label),
                classification_label: verdict.as_ref().map(|v| v.classification_label),
                classification_justification: verdict.as_ref().map(|v| v.classification_justification.clone()),
                reflection_invoked: verdict.as_ref().is_some_and(|v| v.reflection_invoked),
                reflection_confirmed: verdict.as_ref().and_then(|v| v.reflection_confirmed),
                failure,
                feedback: Self::active_feedback(&c, prediction_id)?,
            });
        }
        Ok(Page { items, page, per_page, total })
    }

    // ---- feedback

    fn active_feedback(c: &Connection, prediction_id: i64) -> Result<Option<FeedbackRecord>> {
        let row = c
            .query_row(
                &format!(
                    "SELECT {FEEDBACK_COLUMNS} FROM feedback f JOIN verdicts v ON v.prediction_id = f.prediction_id
                     WHERE f.prediction_id = ?1 AND f.superseded_at IS NULL"
                ),
                [prediction_id],
                feedback_row,
            )
            .optional()?;
        row.map(feedback_record).transpose()
    }

    pub fn prediction_id(&self, run_id: &str, article: &ArticleId) -> Result<Option<i64>> {
        let c = self.conn();
        Ok(c
            .query_row(
                "SELECT prediction_id FROM verdicts WHERE run_id = ?1 AND article_id = ?2",
                params![run_id, article.0],
                |r| r.get(0),
            )
            .optional()?)
    }

    pub fn record_feedback(&self, label: &FeedbackLabel) -> Result<FeedbackRecord> {
        let id = self.prediction_id(&label.run_ref, &label.article_ref)?.ok_or_else(|| {
            StoreError::InvalidArgument(format!("no prediction for article {} in run {}", label.article_ref, label.run_ref))
        })?;
        self.record_feedback_for(id, label.expert_label, &label.annotator)
    }

    /// Stores a label for a prediction; any active label for the same
    /// prediction is superseded, not deleted.
    pub fn record_feedback_for(&self, prediction_id: i64, expert_label: Label, annotator: &str) -> Result<FeedbackRecord> {
        if annotator.trim().is_empty() {
            return Err(StoreError::InvalidArgument("annotator must not be empty".into()));
        }
        let mut c = self.conn();
        let tx = c.transaction()?;
        let has_verdict: Option<bool> = tx
            .query_row("SELECT verdict IS NOT NULL FROM verdicts WHERE prediction_id = ?1", [prediction_id], |r| r.get(0))
            .optional()?;
        match has_verdict {
            None => return Err(StoreError::InvalidArgument(format!("prediction {prediction_id} does not exist"))),
            Some(false) => {
                return Err(StoreError::InvalidArgument(format!("prediction {prediction_id} failed and has no verdict")))
            }
            Some(true) => {}
        }
        let now = Utc::now();
        tx.execute(
            "UPDATE feedback SET superseded_at = ?1 WHERE prediction_id = ?2 AND superseded_at IS NULL",
            params![ts(&now), prediction_id],
        )?;
        tx.execute(
            "INSERT INTO feedback (prediction_id, expert_label, labeled_at, annotator) VALUES (?1, ?2, ?3, ?4)",
            params![prediction_id, expert_label.as_str(), ts(&now), annotator],
        )?;
        let record = Self::active_feedback(&tx, prediction_id)?
            .ok_or_else(|| StoreError::Corrupt("inserted feedback vanished".into()))?;
        tx.commit()?;
        Ok(record)
    }

    /// Every label for a prediction, oldest first.
    pub fn feedback_history(&self, prediction_id: i64) -> Result<Vec<FeedbackRecord>> {
        self.feedback_where("f.prediction_id = ?1", params![prediction_id])
    }

    pub fn all_feedback(&self) -> Result<Vec<FeedbackRecord>> {
        self.feedback_where("1 = 1", params![])
    }

    fn feedback_where(&self, cond: &str, p: &[&dyn rusqlite::ToSql]) -> Result<Vec<FeedbackRecord>> {
        let c = self.conn();
        let mut st = c.prepare(&format!(
            "SELECT {FEEDBACK_COLUMNS} FROM feedback f JOIN verdicts v ON v.prediction_id = f.prediction_id
             WHERE {cond} ORDER BY f.feedback_id"
        ))?;
        let rows: Vec<FeedbackRow> = st.query_map(p, feedback_row)?.collect::<rusqlite::Result<_>>()?;
        rows.into_iter().map(feedback_record).collect()
    }

    // ---- promotion

    /// Appends the expert-labeled article to its language's pool as a new
    /// version. Uses the most recent active label and that verdict's summary.
    pub fn promote_demonstration(&self, article: &ArticleId, explanation: &str) -> Result<PoolVersionInfo> {
        if explanation.trim().is_empty() {
            return Err(StoreError::InvalidArgument("explanation must not be empty".into()));
        }
        let mut c = self.conn();
        let tx = c.transaction()?;
        let row: Option<(i64, String, String, String, String)> = tx
            .query_row(
                "SELECT f.feedback_id, f.expert_label, v.verdict, a.title, a.language
                 FROM feedback f JOIN verdicts v ON v.prediction_id = f.prediction_id
                 JOIN articles a ON a.id = v.article_id
                 WHERE v.article_id = ?1 AND f.superseded_at IS NULL
                 ORDER BY f.labeled_at DESC, f.feedback_id DESC LIMIT 1",
                [&article.0],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?)),
            )
            .optional()?;
        let (feedback_id, label, verdict, title, language) =
            row.ok_or_else(|| StoreError::Precondition(format!("article {article} has no expert label")))?;
        let verdict: Verdict = from_json(&verdict)?;
        let mut pool = Self::load_pool(&tx, &language, None)?
            .map(|(_, p)| p)
            .unwrap_or_else(|| ExamplePool { demonstrations: Vec::new(), language: language.clone() });
        if pool.demonstrations.iter().any(|d| &d.article_ref == article) {
            return Err(StoreError::Conflict(format!("article {article} is already in the {language} pool")));
        }
        pool.demonstrations.push(Demonstration {
            article_ref: article.clone(),
            title,
            summary: verdict.summary_used,
            label: parse_label(&label)?,
            explanation: explanation.trim().into(),
            language: language.clone(),
        });
        pool.validate().map_err(|e| StoreError::InvalidArgument(e.to_string()))?;
        let info = Self::insert_pool(&tx, &pool, &format!("promoted {article}"))?;
        tx.execute("UPDATE feedback SET promoted_to_pool = 1 WHERE feedback_id = ?1", [feedback_id])?;
        tx.commit()?;
        Ok(info)
    }

    // ---- reporting

    /// Labeled predictions per run, oldest week first: (run, [(article, predicted, gold)]).
    #[allow(clippy::type_complexity)]
    pub fn labeled_predictions(&self, language: Option<&str>) -> Result<Vec<(RunRecord, Vec<(ArticleId, Label, Label)>)>> {
        let runs: Vec<RunRecord> =
            self.runs()?.into_iter().filter(|r| language.is_none_or(|l| r.language == l)).collect();
        let c = self.conn();
        let mut st = c.prepare(
            "SELECT v.article_id, v.final_label, f.expert_label FROM verdicts v
             JOIN feedback f ON f.prediction_id = v.prediction_id AND f.superseded_at IS NULL
             WHERE v.run_id = ?1 AND v.final_label IS NOT NULL ORDER BY v.prediction_id",
        )?;
        let mut out = Vec::with_capacity(runs.len());
        for run in runs {
            let rows: Vec<(String, String, String)> = st
                .query_map([&run.run_id], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))?
                .collect::<rusqlite::Result<_>>()?;
            let rows = rows
                .into_iter()
                .map(|(a, p, g)| Ok((ArticleId(a), parse_label(&p)?, parse_label(&g)?)))
                .collect::<Result<Vec<_>>>()?;
            out.push((run, rows));
        }
        Ok(out)
    }

    /// Deployment metrics over expert-labeled predictions, one row per run.
    /// `None` when there are no runs.
    pub fn deployment_report(&self, language: Option<&str>) -> Result<Option<DeploymentReport>> {
        let weeks: Vec<WeekInput> = self
            .labeled_predictions(language)?
            .into_iter()
            .map(|(run, rows)| WeekInput {
                week: run.week,
                predictions: rows.iter().map(|(a, p, _)| (a.clone(), *p)).collect(),
                gold: rows.into_iter().map(|(a, _, g)| (a, g)).collect(),
            })
            .collect();
        if weeks.is_empty() {
            return Ok(None);
        }
        aggregate_deployment(&weeks).map(Some).map_err(|e| StoreError::Corrupt(e.to_string()))
    }

    /// Every stored prediction of a run (or all runs), in insertion order.
    pub fn predictions(&self, run_id: Option<&str>) -> Result<Vec<ReviewItem>> {
        let runs: Vec<String> = match run_id {
            Some(r) => vec![r.to_owned()],
            None => self.runs()?.into_iter().map(|r| r.run_id).collect(),
        };
        let mut all = Vec::new();
        for r in runs {
            let mut page = 1;
            loop {
                let p = self.review_items(&r, LabelFilter::All, page, 500)?;
                let done = p.items.len() < 500;
                all.extend(p.items);
                if done {
                    break;
                }
                page += 1;
            }
        }
        Ok(all)
    }
}
