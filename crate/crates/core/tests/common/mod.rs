#![allow(dead_code)]

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use serow_core::evaluation::{Counts, LabeledDataset, LabeledItem, Split};
use serow_core::gateway::{Gateway, RetryPolicy, ScriptRule, ScriptedBackend};
use serow_core::ingestion::{Article, ArticleId, FilterRule, RawArticle};
use serow_core::pipeline::{Demonstration, ExamplePool, Label, Pipeline, PipelineConfig, Verdict};

pub const R: Label = Label::Relevant;
pub const N: Label = Label::NotRelevant;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn raw(title: &str, domain: &str, body: &str, language: &str) -> RawArticle {
    RawArticle {
        url: format!("https://{domain}/{}", serow_core::text::short_digest(title)),
        source_domain: Some(domain.into()),
        language: language.into(),
        title: title.into(),
        body: body.into(),
        published_at: Utc.with_ymd_and_hms(2023, 2, 1, 6, 0, 0).unwrap(),
        fetched_at: None,
    }
}

pub fn article(title: &str, body: &str, language: &str) -> Article {
    Article::from_raw(raw(title, "news.example", body, language), Utc.with_ymd_and_hms(2023, 2, 2, 0, 0, 0).unwrap())
        .unwrap()
}

pub fn pool(n: usize, language: &str) -> ExamplePool {
    let demos = (0..n)
        .map(|i| Demonstration {
            article_ref: ArticleId(format!("demo-{i}")),
            title: format!("Demo title {i}"),
            summary: format!("Demo summary number {i}."),
            label: if i % 2 == 0 { R } else { N },
            explanation: format!("Demo explanation {i}."),
            language: language.into(),
        })
        .collect();
    ExamplePool::new(language, demos).unwrap()
}

pub fn scripted(rules: Vec<ScriptRule>) -> (Pipeline, Arc<ScriptedBackend>) {
    let backend = Arc::new(ScriptedBackend::new(rules));
    let gw = Gateway::new(backend.clone()).with_retry(RetryPolicy::immediate());
    (Pipeline::new(gw), backend)
}

pub fn classify_marker(title: &str) -> String {
    format!("Test article:\nTitle: {title}\n")
}

pub fn reflect_marker(title: &str) -> String {
    format!("Article under review:\nTitle: {title}\n")
}

pub fn summarize_rule(title: &str, reply: &str) -> ScriptRule {
    ScriptRule::new("Summarize the following", reply).and(format!("Title: {title}\nArticle:"))
}

pub fn config(cot: bool, summary: bool, reflection: bool) -> PipelineConfig {
    PipelineConfig {
        use_cot: cot,
        use_zero_shot_summary: summary,
        use_reflection: reflection,
        ..PipelineConfig::for_language("en")
    }
}

pub fn dataset(articles: &[Article], gold: &[Label]) -> LabeledDataset {
    let items =
        articles.iter().zip(gold).map(|(a, g)| LabeledItem { article: a.clone(), gold_label: *g }).collect();
    LabeledDataset::new(items, articles[0].language.clone(), Split::Test).unwrap()
}

pub fn predictions(verdicts: &[Verdict]) -> Vec<(ArticleId, Label)> {
    verdicts.iter().map(|v| (v.article_ref.clone(), v.final_label)).collect()
}

/// One hand-written row: scripted classification and reflection replies,
/// the gold label and the final label the pipeline must produce.
pub struct TruthRow {
    pub title: &'static str,
    pub classify: &'static str,
    pub reflect: Option<&'static str>,
    pub gold: Label,
    pub expected: Label,
}

const POS: &str = "Relevant. Explanation: The article is about anti-poaching patrols in a national park.";
const NEG: &str = "Not relevant. Explanation: The article is about a football match.";

pub fn truth_table() -> Vec<TruthRow> {
    let row = |title, classify, reflect, gold, expected| TruthRow { title, classify, reflect, gold, expected };
    vec![
        // classified relevant, reflection confirms
        row("t00", POS, Some("Correct."), R, R),
        row("t01", POS, Some("Correct. The patrols are a conservation effort."), R, R),
        row("t02", POS, Some("Yes, the assessment is accurate."), R, R),
        row("t03", POS, Some("Confirmed."), R, R),
        row("t04", "Relevant.\nExplanation: wildlife crime.", Some("correct"), R, R),
        row("t05", POS, Some("Correct."), N, R),
        row("t06", POS, Some("Accurate."), N, R),
        row("t07", POS, Some("Yes."), N, R),
        // classified relevant, reflection rejects
        row("t08", POS, Some("Incorrect. The article is about tourism."), R, N),
        row("t09", POS, Some("Not correct."), R, N),
        row("t10", POS, Some("No, this is a sports story."), R, N),
        row("t11", POS, Some("Incorrect."), N, N),
        row("t12", POS, Some("Wrong. It only mentions the park."), N, N),
        row("t13", POS, Some("Not accurate."), N, N),
        // classified not relevant, reflection never runs
        row("t14", NEG, None, R, N),
        row("t15", NEG, None, R, N),
        row("t16", "Not relevant.", None, R, N),
        row("t17", NEG, None, N, N),
        row("t18", NEG, None, N, N),
        row("t19", "Not Relevant. Explanation: politics.", None, N, N),
    ]
}

/// Hand count over [`truth_table`]: t00-t04 tp, t05-t07 fp,
/// t08-t10 and t14-t16 fn, the rest tn.
pub const TRUTH_COUNTS: Counts = Counts { tp: 5, fp: 3, fn_: 6, tn: 6 };

pub struct TruthFixture {
    pub articles: Vec<Article>,
    pub dataset: LabeledDataset,
    pub rules: Vec<ScriptRule>,
}

pub fn truth_fixture() -> TruthFixture {
    let rows = truth_table();
    let mut rules = Vec::new();
    let mut articles = Vec::new();
    for r in &rows {
        rules.push(ScriptRule::new(classify_marker(r.title), r.classify));
        // Rows that must not be reflected on get a reply that would flip them.
        rules.push(ScriptRule::new(reflect_marker(r.title), r.reflect.unwrap_or("Incorrect.")));
        let body = format!("Report {t} opens the story. Rangers in the park responded. Officials spoke later. More text.", t = r.title);
        articles.push(article(r.title, &body, "en"));
    }
    rules.push(ScriptRule::new("Summarize the following", "Rangers patrolled the park. Poachers were arrested."));
    let gold: Vec<Label> = rows.iter().map(|r| r.gold).collect();
    let dataset = dataset(&articles, &gold);
    TruthFixture { articles, dataset, rules }
}

/// (table, row, P, R, F1) for every triple printed in the results tables.
pub const TABLE_TRIPLES: [(&str, &str, f64, f64, f64); 32] = [
    ("comparison", "gpt-3.5 zero-shot ne", 0.79, 0.32, 0.46),
    ("comparison", "gpt-3.5 zero-shot es", 1.00, 0.14, 0.25),
    ("comparison", "mBERT few-shot ne", 0.26, 0.70, 0.37),
    ("comparison", "mBERT few-shot es", 0.25, 0.71, 0.36),
    ("comparison", "XLM-R few-shot ne", 0.35, 0.60, 0.43),
    ("comparison", "XLM-R few-shot es", 0.49, 0.61, 0.44),
    ("comparison", "gpt-3.5 few-shot ne", 0.68, 0.58, 0.62),
    ("comparison", "gpt-3.5 few-shot es", 0.39, 1.00, 0.56),
    ("comparison", "serow ne", 0.88, 0.58, 0.70),
    ("comparison", "serow es", 0.89, 0.71, 0.79),
    ("comparison", "mBERT fine-tuned ne", 0.77, 0.57, 0.65),
    ("comparison", "mBERT fine-tuned es", 0.86, 0.80, 0.81),
    ("comparison", "XLM-R fine-tuned ne", 0.70, 0.71, 0.70),
    ("comparison", "XLM-R fine-tuned es", 0.69, 0.95, 0.80),
    ("comparison", "translation test ne", 0.74, 0.64, 0.66),
    ("comparison", "translation test es", 0.76, 0.67, 0.66),
    ("ablation ne", "No No No", 0.68, 0.58, 0.62),
    ("ablation ne", "No No Yes", 0.94, 0.28, 0.43),
    ("ablation ne", "No Yes No", 0.70, 0.68, 0.69),
    ("ablation ne", "No Yes Yes", 0.91, 0.49, 0.63),
    ("ablation ne", "Yes No No", 0.57, 0.82, 0.67),
    ("ablation ne", "Yes No Yes", 0.87, 0.38, 0.53),
    ("ablation ne", "Yes Yes No", 0.60, 0.84, 0.69),
    ("ablation ne", "Yes Yes Yes", 0.88, 0.58, 0.70),
    ("ablation es", "No No No", 0.39, 1.00, 0.56),
    ("ablation es", "No No Yes", 1.00, 0.76, 0.86),
    ("ablation es", "No Yes No", 0.37, 0.98, 0.53),
    ("ablation es", "No Yes Yes", 0.86, 0.72, 0.79),
    ("ablation es", "Yes No No", 0.46, 0.99, 0.62),
    ("ablation es", "Yes No Yes", 1.00, 0.81, 0.89),
    ("ablation es", "Yes Yes No", 0.52, 0.94, 0.67),
    ("ablation es", "Yes Yes Yes", 0.89, 0.71, 0.79),
];

/// Weekly (tp, fp, fn, tn) consistent with every printed weekly row.
pub const NEPALI_WEEKS: [(usize, usize, usize, usize); 8] =
    [(1, 1, 0, 8), (0, 0, 0, 9), (2, 0, 4, 15), (6, 0, 2, 1), (3, 3, 3, 0), (1, 1, 0, 3), (1, 0, 0, 7), (3, 0, 5, 5)];
pub const SPANISH_WEEKS: [(usize, usize, usize, usize); 6] =
    [(4, 3, 0, 21), (7, 0, 3, 12), (4, 4, 1, 19), (5, 3, 2, 16), (4, 2, 1, 28), (3, 5, 3, 12)];

/// Printed weekly rows: (# Ex., P, R, F1).
pub const NEPALI_ROWS: [(usize, f64, f64, f64); 8] = [
    (10, 0.50, 1.00, 0.67),
    (9, 0.00, 0.00, 0.00),
    (21, 1.00, 0.33, 0.50),
    (9, 1.00, 0.75, 0.86),
    (9, 0.50, 0.50, 0.50),
    (5, 0.50, 1.00, 0.67),
    (8, 1.00, 1.00, 1.00),
    (13, 1.00, 0.38, 0.55),
];
pub const SPANISH_ROWS: [(usize, f64, f64, f64); 6] = [
    (28, 0.57, 1.00, 0.73),
    (22, 1.00, 0.70, 0.82),
    (28, 0.50, 0.80, 0.62),
    (26, 0.63, 0.71, 0.67),
    (35, 0.67, 0.80, 0.73),
    (23, 0.38, 0.50, 0.43),
];

/// Turns weekly counts into synthetic prediction/gold lists.
pub fn week_inputs(prefix: &str, weeks: &[(usize, usize, usize, usize)]) -> Vec<serow_core::evaluation::WeekInput> {
    weeks
        .iter()
        .enumerate()
        .map(|(w, &(tp, fp, fn_, tn))| {
            let mut predictions = Vec::new();
            let mut gold = Vec::new();
            let mut push = |kind: &str, n: usize, pred: Label, g: Label| {
                for i in 0..n {
                    let id = ArticleId(format!("{prefix}-w{}-{kind}{i}", w + 1));
                    predictions.push((id.clone(), pred));
                    gold.push((id, g));
                }
            };
            push("tp", tp, R, R);
            push("fp", fp, R, N);
            push("fn", fn_, N, R);
            push("tn", tn, N, N);
            serow_core::evaluation::WeekInput { week: (w + 1).to_string(), predictions, gold }
        })
        .collect()
}

#[derive(serde::Deserialize)]
pub struct FilterFixture {
    pub rules: std::collections::BTreeMap<String, FilterRule>,
    pub cases: Vec<FilterCase>,
}

#[derive(serde::Deserialize)]
pub struct FilterCase {
    pub rule: String,
    pub title: String,
    pub domain: String,
    pub body: String,
    pub keep: bool,
    pub why: String,
}

pub fn filter_fixture() -> FilterFixture {
    serde_json::from_str(&std::fs::read_to_string(fixture("filter_cases.json")).unwrap()).unwrap()
}

impl FilterCase {
    pub fn article(&self) -> Article {
        let lang = if self.rule == "np" { "ne" } else { "es" };
        Article::from_raw(raw(&self.title, &self.domain, &self.body, lang), Utc.with_ymd_and_hms(2023, 2, 2, 0, 0, 0).unwrap())
            .unwrap()
    }
}

/// Returns `None` when every case matches its hand evaluation, or the
/// failing cases.
pub fn check_filter_vectors() -> Result<usize, String> {
    let fx = filter_fixture();
    let mut bad = Vec::new();
    for (i, c) in fx.cases.iter().enumerate() {
        let rule = &fx.rules[&c.rule];
        let kept = serow_core::ingestion::apply_filter(&[c.article()], rule).len() == 1;
        if kept != c.keep {
            bad.push(format!("case {i} ({}): expected keep={}, got {kept}", c.why, c.keep));
        }
    }
    if bad.is_empty() {
        Ok(fx.cases.len())
    } else {
        Err(bad.join("; "))
    }
}

/// A randomized scripted fixture for the reflection gate.
#[derive(Debug, Clone)]
pub struct GateCase {
    /// (classified relevant, reflection reply index, gold relevant)
    pub rows: Vec<(bool, usize, bool)>,
    pub cot: bool,
    pub summary: bool,
}

pub const AFFIRM: [&str; 3] = ["Correct.", "Yes, the assessment is correct.", "Confirmed. It covers poaching."];
pub const REJECT: [&str; 3] = ["Incorrect.", "No. The article is about tourism.", "Wrong, it only mentions a park."];

pub fn gate_strategy() -> impl proptest::strategy::Strategy<Value = GateCase> {
    use proptest::prelude::*;
    (proptest::collection::vec((any::<bool>(), 0usize..6, any::<bool>()), 1..12), any::<bool>(), any::<bool>())
        .prop_map(|(rows, cot, summary)| GateCase { rows, cot, summary })
}

/// Runs the case with reflection off and on and checks containment.
pub fn check_gate(case: &GateCase) -> Result<(), String> {
    let mut rules = Vec::new();
    let mut articles = Vec::new();
    let mut gold = Vec::new();
    for (i, &(pos, reply, g)) in case.rows.iter().enumerate() {
        let title = format!("g{i}");
        let cls = if pos { "Relevant. Explanation: protected wildlife." } else { "Not relevant. Explanation: sport." };
        let refl = if reply < 3 { AFFIRM[reply] } else { REJECT[reply - 3] };
        rules.push(ScriptRule::new(classify_marker(&title), cls));
        rules.push(ScriptRule::new(reflect_marker(&title), refl));
        articles.push(article(&title, &format!("Story {title} begins. It continues. It ends. Extra."), "en"));
        gold.push(if g { R } else { N });
    }
    rules.push(ScriptRule::new("Summarize the following", "A short summary. Two sentences."));
    let (p, _) = scripted(rules);
    let ds = dataset(&articles, &gold);
    let pool = pool(10, "en");
    let run = |reflection: bool| -> Result<(HashSet<ArticleId>, Counts), String> {
        let verdicts: Vec<Verdict> = p
            .run_batch(&articles, &pool, &config(case.cot, case.summary, reflection), 1)
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let m = serow_core::evaluation::compute_metrics(&predictions(&verdicts), &ds).map_err(|e| e.to_string())?;
        let positives = verdicts.iter().filter(|v| v.final_label.is_relevant()).map(|v| v.article_ref.clone()).collect();
        Ok((positives, m.counts))
    };
    let (off, c_off) = run(false)?;
    let (on, c_on) = run(true)?;
    if !on.is_subset(&off) {
        return Err(format!("positives grew: {} -> {}", off.len(), on.len()));
    }
    if c_on.recall() > c_off.recall() {
        return Err(format!("recall grew: {} -> {}", c_off.recall(), c_on.recall()));
    }
    if c_on.fp > c_off.fp {
        return Err(format!("false positives grew: {} -> {}", c_off.fp, c_on.fp));
    }
    Ok(())
}

/// 100 articles for the summary bound: 50 extractive, 50 zero-shot with
/// scripted summaries of 1 to 6 sentences; every tenth one is a
/// two-sentence text that must pass through unchanged.
pub struct SummaryFixture {
    pub articles: Vec<Article>,
    pub rules: Vec<ScriptRule>,
    /// Indices whose summary must equal the input verbatim, with that input.
    pub passthrough: Vec<(usize, String)>,
}

pub fn summary_fixture() -> SummaryFixture {
    let en = ["Rangers counted rhinos.", "The census took ten days!", "Was it accurate?", "Officials say yes…", "More patrols follow.", "Funding rose.", "Tourists returned.", "The park reopened."];
    let ne = ["चितवनमा गैंडा गणना सुरु भयो।", "गणना दस दिन चल्यो।", "वन विभागले तथ्यांक सार्वजनिक गर्‍यो॥", "संरक्षणकर्मी खुसी छन्।", "गस्ती बढाइएको छ।", "पर्यटक फर्किए।"];
    let mut articles = Vec::new();
    let mut rules = Vec::new();
    let mut passthrough = Vec::new();
    for i in 0..100 {
        let (sents, lang): (&[&str], &str) = if i % 2 == 0 { (&en, "en") } else { (&ne, "ne") };
        let n_body = 1 + (i * 7) % sents.len();
        let two = i % 10 == 3 || i % 10 == 8;
        let n_body = if two { 2 } else { n_body };
        let body = sents.iter().cycle().skip(i % 3).take(n_body).copied().collect::<Vec<_>>().join(" ");
        let title = format!("s{i:03}");
        let a = article(&title, &body, lang);
        let zero_shot = i >= 50;
        if zero_shot {
            let n_reply = if two { 2 } else { 1 + (i * 5) % 6 };
            let reply = sents.iter().cycle().skip(1).take(n_reply).copied().collect::<Vec<_>>().join(" ");
            if two {
                passthrough.push((i, reply.clone()));
            }
            rules.push(summarize_rule(&title, &reply));
        } else if two {
            passthrough.push((i, a.body.clone()));
        }
        articles.push(a);
    }
    rules.push(ScriptRule::new("Test article:", "Not relevant. Explanation: none."));
    SummaryFixture { articles, rules, passthrough }
}

pub fn label_config(language: &str, cot: bool, summary: bool) -> PipelineConfig {
    PipelineConfig {
        use_cot: cot,
        use_zero_shot_summary: summary,
        use_reflection: false,
        ..PipelineConfig::for_language(language)
    }
}
