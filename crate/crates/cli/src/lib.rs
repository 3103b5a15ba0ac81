//! Config loading and the subcommand bodies behind the `serow` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::{NaiveDate, Utc};
use serde::Deserialize;
use serow_core::evaluation::{
    compute_metrics, fmt2, import_external_predictions, sweep_csv, Evaluator, LabeledDataset, Split,
};
use serow_core::gateway::{ChatBackend, Gateway, HttpBackend, ScriptedBackend};
use serow_core::ingestion::{apply_filter, fetch_window, sample_for_labeling, Article, IngestConfig, IngestSection};
use serow_core::jsonl;
use serow_core::pipeline::{ExamplePool, Label, Pipeline, PipelineConfig, Verdict};
use serow_store::{Store, WeeklyPlan};

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSection {
    /// Replies from a rule file; no network.
    Scripted { script: PathBuf },
    /// OpenAI-compatible endpoint; needs `SEROW_LIVE=1` and `SEROW_API_KEY`.
    Live {},
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeeklySection {
    pub week: String,
    pub from: NaiveDate,
    pub to: NaiveDate,
    /// Seeds the store when it has no pool for the pipeline language.
    #[serde(default)]
    pub pool: Option<PathBuf>,
    #[serde(default)]
    pub db: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    backend: BackendSection,
    #[serde(default)]
    pipeline: PipelineConfig,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
    #[serde(default)]
    weekly: Option<WeeklySection>,
    #[serde(default)]
    ingest: Option<IngestSection>,
}

fn default_parallelism() -> usize {
    4
}

/// The run config file: backend, pipeline switches and, for the weekly
/// loop, the window and ingestion sources. Relative paths resolve against
/// the file's directory.
#[derive(Debug, Clone)]
pub struct AppConfig {
    pub backend: BackendSection,
    pub pipeline: PipelineConfig,
    pub parallelism: usize,
    pub weekly: Option<WeeklySection>,
    pub ingest: Option<IngestConfig>,
    pub base: PathBuf,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, &base).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        raw.pipeline.validate()?;
        let ingest = raw.ingest.map(|s| s.resolve(base)).transpose()?;
        let mut weekly = raw.weekly;
        if let Some(w) = &mut weekly {
            w.pool = w.pool.take().map(|p| base.join(p));
            w.db = w.db.take().map(|p| base.join(p));
        }
        let backend = match raw.backend {
            BackendSection::Scripted { script } => BackendSection::Scripted { script: base.join(script) },
            live => live,
        };
        Ok(AppConfig {
            backend,
            pipeline: raw.pipeline,
            parallelism: raw.parallelism.max(1),
            weekly,
            ingest,
            base: base.to_path_buf(),
        })
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        let backend: Arc<dyn ChatBackend> = match &self.backend {
            BackendSection::Scripted { script } => Arc::new(ScriptedBackend::from_file(script)?),
            BackendSection::Live {} => Arc::new(HttpBackend::from_env()?),
        };
        Ok(Pipeline::new(Gateway::new(backend)))
    }
}

fn write_out<T: serde::Serialize>(out: Option<&Path>, records: &[T]) -> Result<()> {
    match out {
        Some(p) => jsonl::write(p, records).with_context(|| format!("writing {}", p.display()))?,
        None => jsonl::write_to(&mut std::io::stdout().lock(), records)?,
    }
    Ok(())
}

/// Fetches every source for the window and keeps what passes the filter.
pub fn ingest(config: &Path, from: NaiveDate, to: NaiveDate, out: Option<&Path>) -> Result<String> {
    let cfg = IngestConfig::load(config)?;
    let mut fetched: Vec<Article> = Vec::new();
    let mut notes = Vec::new();
    for source in &cfg.sources {
        let f = fetch_window(source, from, to).with_context(|| format!("source {}", source.name))?;
        notes.extend(f.diagnostics.into_iter().map(|d| format!("{}: {d}", source.name)));
        fetched.extend(f.articles);
    }
    let mut seen = std::collections::HashSet::new();
    fetched.retain(|a| seen.insert(a.id.clone()));
    fetched.sort_by(|a, b| (a.published_at, &a.id).cmp(&(b.published_at, &b.id)));
    let kept = apply_filter(&fetched, &cfg.filter);
    write_out(out, &kept)?;
    for n in &notes {
        log::warn!("{n}");
    }
    Ok(format!("fetched {}, kept {}, skipped {}", fetched.len(), kept.len(), notes.len()))
}

pub fn sample(input: &Path, n: usize, seed: u64, out: Option<&Path>) -> Result<String> {
    let batch: Vec<Article> = jsonl::read(input)?;
    let picked = sample_for_labeling(&batch, n, seed)?;
    write_out(out, &picked)?;
    Ok(format!("sampled {} of {}", picked.len(), batch.len()))
}

pub fn classify(config: &Path, pool: &Path, input: &Path, out: Option<&Path>) -> Result<String> {
    let cfg = AppConfig::load(config)?;
    let pool = ExamplePool::load(pool, Some(&cfg.pipeline.language))?;
    pool.validate_for(&cfg.pipeline)?;
    let articles: Vec<Article> = jsonl::read(input)?;
    let results = cfg.pipeline()?.run_batch(&articles, &pool, &cfg.pipeline, cfg.parallelism);
    let mut verdicts: Vec<Verdict> = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r {
            Ok(v) => verdicts.push(v),
            Err(f) => {
                failed += 1;
                log::error!("{f}");
            }
        }
    }
    write_out(out, &verdicts)?;
    let relevant = verdicts.iter().filter(|v| v.final_label.is_relevant()).count();
    let summary = format!("{} articles, {relevant} relevant, {failed} failed", articles.len());
    if failed > 0 {
        bail!("{summary}");
    }
    Ok(summary)
}

/// Reads either plain `{id, label}` predictions or verdict records.
pub fn load_predictions(path: &Path) -> Result<Vec<(serow_core::ingestion::ArticleId, Label)>> {
    match import_external_predictions(path) {
        Ok(p) => Ok(p.iter().map(|p| p.pair()).collect()),
        Err(first) => match jsonl::read::<Verdict>(path) {
            Ok(v) => Ok(v.into_iter().map(|v| (v.article_ref, v.final_label)).collect()),
            Err(_) => Err(first).context(format!("reading predictions {}", path.display())),
        },
    }
}

pub fn eval(gold: &Path, pred: &Path) -> Result<String> {
    let dataset = LabeledDataset::load(gold, Split::Test)?;
    let m = compute_metrics(&load_predictions(pred)?, &dataset)?;
    let c = m.counts;
    let mut text = format!(
        "precision {}\nrecall {}\nf1 {}\ntp {} fp {} fn {} tn {}",
        fmt2(m.precision),
        fmt2(m.recall),
        fmt2(m.f1),
        c.tp,
        c.fp,
        c.fn_,
        c.tn
    );
    if m.no_positives_predicted {
        text.push_str("\nno positives predicted");
    }
    Ok(text)
}

fn load_eval_inputs(config: &Path, dataset: &Path, pool: &Path) -> Result<(AppConfig, LabeledDataset, ExamplePool)> {
    let cfg = AppConfig::load(config)?;
    let ds = LabeledDataset::load(dataset, Split::Test)?;
    if ds.language != cfg.pipeline.language {
        bail!("dataset language {} does not match pipeline language {}", ds.language, cfg.pipeline.language);
    }
    let pool = ExamplePool::load(pool, Some(&cfg.pipeline.language))?;
    Ok((cfg, ds, pool))
}

fn save(path: Option<&Path>, text: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

pub fn ablate(config: &Path, dataset: &Path, pool: &Path, seeds: &[u64], csv: Option<&Path>) -> Result<String> {
    let (cfg, ds, pool) = load_eval_inputs(config, dataset, pool)?;
    let pipeline = cfg.pipeline()?;
    let grid = Evaluator::new(&pipeline)
        .with_parallelism(cfg.parallelism)
        .run_ablation(&ds, &pool, &cfg.pipeline, seeds)?;
    save(csv, &grid.to_csv())?;
    for c in grid.cells.iter().filter(|c| c.error.is_some()) {
        log::error!("{:?}: {}", c.switches, c.error.as_deref().unwrap_or_default());
    }
    Ok(grid.render_table())
}

pub fn sweep(config: &Path, dataset: &Path, pool: &Path, ks: &[usize], seeds: &[u64], csv: Option<&Path>) -> Result<String> {
    let (cfg, ds, pool) = load_eval_inputs(config, dataset, pool)?;
    let pipeline = cfg.pipeline()?;
    let rows = Evaluator::new(&pipeline)
        .with_parallelism(cfg.parallelism)
        .sweep_examples(&ds, &pool, &cfg.pipeline, ks, seeds)?;
    let text = sweep_csv(&rows);
    save(csv, &text)?;
    Ok(text)
}

/// Runs the configured week against the store, seeding the pool first if
/// the store has none for the language.
pub fn weekly(config: &Path, db: Option<&Path>) -> Result<String> {
    let cfg = AppConfig::load(config)?;
    let w = cfg.weekly.clone().context("config has no [weekly] section")?;
    let ingest = cfg.ingest.clone().context("config has no [ingest] section")?;
    let db = db.map(Path::to_path_buf).or(w.db.clone()).context("no database given (--db or weekly.db)")?;
    let store = Store::open(&db)?;
    let language = &cfg.pipeline.language;
    if store.current_pool(language)?.is_none() {
        let path = w.pool.as_ref().with_context(|| format!("store has no {language} pool and weekly.pool is not set"))?;
        let pool = ExamplePool::load(path, Some(language))?;
        let info = store.put_pool(&pool, &format!("seeded from {}", path.display()))?;
        log::info!("seeded {language} pool v{} with {} demonstrations", info.version, info.size);
    }
    let plan = WeeklyPlan { week: w.week, from: w.from, to: w.to, ingest, pipeline: cfg.pipeline.clone(), parallelism: cfg.parallelism };
    let started = Utc::now();
    let run = serow_store::weekly_run(&store, &cfg.pipeline()?, &plan)?;
    let reused = run.started_at < started;
    Ok(format!(
        "run {} week {} {}: {} articles, {} relevant, {} failed, status {:?}, pool v{}",
        run.run_id,
        run.week,
        if reused { "(existing)" } else { "(new)" },
        run.article_count,
        run.positive_count,
        run.failed_count,
        run.status,
        run.pool_version
    ))
}

pub fn export(
    db: &Path,
    what: serow_store::export::ExportKind,
    format: serow_store::export::ExportFormat,
    run: Option<&str>,
    language: Option<&str>,
    out: Option<&Path>,
) -> Result<usize> {
    let store = Store::open(db)?;
    let filter = serow_store::export::ExportFilter { run_id: run, language, pool_version: None };
    let n = match out {
        Some(p) => {
            let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            serow_store::export::export(&store, what, format, &filter, std::io::BufWriter::new(f))?
        }
        None => {
            let mut lock = std::io::stdout().lock();
            let n = serow_store::export::export(&store, what, format, &filter, &mut lock)?;
            lock.flush()?;
            n
        }
    };
    Ok(n)
}

pub fn report(db: &Path, language: Option<&str>) -> Result<String> {
    let store = Store::open(db)?;
    Ok(match store.deployment_report(language)? {
        Some(r) => r.render_table(),
        None => "no runs".into(),
    })
}

pub fn serve(db: &Path, host: &str, port: u16, token: Option<String>) -> Result<()> {
    let store = Arc::new(Store::open(db)?);
    let addr: std::net::SocketAddr = format!("{host}:{port}").parse().context("bad listen address")?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serow_store::api::serve(store, addr, token))?;
    Ok(())
}
