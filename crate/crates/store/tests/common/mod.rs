#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use serow_core::gateway::{Gateway, RetryPolicy, ScriptRule, ScriptedBackend};
use serow_core::ingestion::{ArticleId, IngestConfig};
use serow_core::pipeline::{Demonstration, ExamplePool, Label, Pipeline, PipelineConfig};
use serow_store::{Store, WeeklyPlan};

pub const STORIES: usize = 30;
/// Stories 28 and 29 come from a domain outside the allowlist.
pub const KEPT: usize = 28;
/// Stories below this number are classified relevant.
pub const CLASSIFIED: usize = 9;
/// Relevant stories the reflection step rejects.
pub const REJECTED: [usize; 2] = [7, 8];
pub const POSITIVES: usize = CLASSIFIED - REJECTED.len();

pub fn title(i: usize) -> String {
    format!("Story {i} from the park")
}

/// Writes the replay file and ingest config into `dir`.
pub fn write_sources(dir: &Path) -> IngestConfig {
    let lines: Vec<String> = (0..STORIES)
        .map(|i| {
            let domain = if i < KEPT { "kathmandupost.com" } else { "example.org" };
            serde_json::json!({
                "url": format!("https://{domain}/news/{i}"),
                "language": "en",
                "title": title(i),
                "body": format!("Rangers met in Chitwan National Park. Item {i} follows. It ends here. Extra sentence."),
                "published_at": format!("2023-02-{:02}T09:00:00Z", 6 + i % 7),
            })
            .to_string()
        })
        .collect();
    std::fs::write(dir.join("week.jsonl"), lines.join("\n")).unwrap();
    IngestConfig::parse(
        r#"
        [[source]]
        name = "post"
        kind = "site_crawl"
        sites = ["https://kathmandupost.com/rss"]
        country_tag = "NP"
        language = "en"
        replay = "week.jsonl"

        [filter]
        domain_allowlist = ["kathmandupost.com"]
        protected_area_terms = ["Chitwan National Park"]
        "#,
        dir,
    )
    .unwrap()
}

pub fn rules() -> Vec<ScriptRule> {
    let mut rules = Vec::new();
    for i in 0..CLASSIFIED {
        rules.push(ScriptRule::new(
            format!("Test article:\nTitle: {}\n", title(i)),
            "Relevant. Explanation: enforcement in a protected area.",
        ));
    }
    for i in REJECTED {
        rules.push(ScriptRule::new(format!("Article under review:\nTitle: {}\n", title(i)), "Incorrect."));
    }
    rules.push(ScriptRule::new("Test article:", "Not relevant. Explanation: routine news."));
    rules.push(ScriptRule::new("Article under review:", "Correct."));
    rules
}

pub fn pipeline(rules: Vec<ScriptRule>) -> (Pipeline, Arc<ScriptedBackend>) {
    let backend = Arc::new(ScriptedBackend::new(rules));
    (Pipeline::new(Gateway::new(backend.clone()).with_retry(RetryPolicy::immediate())), backend)
}

pub fn seed_pool(n: usize) -> ExamplePool {
    let demos = (0..n)
        .map(|i| Demonstration {
            article_ref: ArticleId(format!("seed-{i}")),
            title: format!("Seed example {i}"),
            summary: format!("Seed summary {i}."),
            label: if i % 2 == 0 { Label::Relevant } else { Label::NotRelevant },
            explanation: format!("Seed explanation {i}."),
            language: "en".into(),
        })
        .collect();
    ExamplePool::new("en", demos).unwrap()
}

pub fn config() -> PipelineConfig {
    PipelineConfig { use_zero_shot_summary: false, k: 4, ..PipelineConfig::for_language("en") }
}

pub fn plan(ingest: &IngestConfig, week: &str, from: (u32, u32), to: (u32, u32)) -> WeeklyPlan {
    WeeklyPlan {
        week: week.into(),
        from: NaiveDate::from_ymd_opt(2023, from.0, from.1).unwrap(),
        to: NaiveDate::from_ymd_opt(2023, to.0, to.1).unwrap(),
        ingest: ingest.clone(),
        pipeline: config(),
        parallelism: 2,
    }
}

/// A store with a seeded pool and one finished week.
pub fn seeded_week(dir: &Path) -> (Store, serow_store::RunRecord, Pipeline) {
    let store = Store::open(&dir.join("serow.db")).unwrap();
    store.put_pool(&seed_pool(6), "seed").unwrap();
    let ingest = write_sources(dir);
    let (p, _) = pipeline(rules());
    let run = serow_store::weekly_run(&store, &p, &plan(&ingest, "2023-W06", (2, 6), (2, 12))).unwrap();
    (store, run, p)
}
