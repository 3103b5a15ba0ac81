//! The per-article classification pipeline.
//!
//! Three stages run in order for each article:
//!
//! 1. **Summarize**: a same-language summary of at most three sentences,
//!    either produced by the model (zero-shot) or taken as the first three
//!    sentences of the body (extractive).
//! 2. **Classify**: a k-shot prompt built from the example pool, in
//!    seed-shuffled order, with explanations when chain-of-thought is on.
//! 3. **Reflect**: only for positive classifications when enabled; the model
//!    judges its own assessment and a rejection flips the final label.
//!
//! Every stage that runs leaves a digest of its rendered prompt in the
//! verdict.

mod parse;
mod templates;

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, ChatRequest, FinishReason, Gateway, GatewayError, ModelConfig};
use crate::ingestion::{Article, ArticleId};
use crate::text;

pub use parse::{justification, parse_label, parse_reflection, LabelTokens, ReflectionTokens};
pub use templates::{Template, TemplateError, TemplateSet};

/// Sentence cap for summaries and extractive excerpts.
pub const SUMMARY_SENTENCES: usize = 3;
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Relevant,
    NotRelevant,
}

impl Label {
    pub fn is_relevant(self) -> bool {
        self == Label::Relevant
    }

    /// Text used inside prompts.
    pub fn prompt_text(self) -> &'static str {
        match self {
            Label::Relevant => "Relevant.",
            Label::NotRelevant => "Not relevant.",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Relevant => "relevant",
            Label::NotRelevant => "not_relevant",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relevant" => Ok(Label::Relevant),
            "not_relevant" => Ok(Label::NotRelevant),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

pub fn language_name(code: &str) -> &str {
    match code {
        "ne" => "Nepali",
        "es" => "Spanish",
        "en" => "English",
        "hi" => "Hindi",
        "pt" => "Portuguese",
        "fr" => "French",
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub article_ref: ArticleId,
    pub title: String,
    pub summary: String,
    pub label: Label,
    /// Chain-of-thought rationale, curated with the pool.
    pub explanation: String,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePool {
    pub demonstrations: Vec<Demonstration>,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("prompt exceeds the context budget by {overflow} tokens ({estimated} estimated, {available} available)")]
    Budget { estimated: usize, available: usize, overflow: usize },
    #[error(transparent)]
    Gateway(GatewayError),
    #[error("unparseable model response: {raw:?}")]
    Parse { raw: String },
    #[error("model response was cut off at the token limit: {raw:?}")]
    Truncated { raw: String },
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl From<GatewayError> for PipelineError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Budget { estimated, available, overflow } => {
                PipelineError::Budget { estimated, available, overflow }
            }
            other => PipelineError::Gateway(other),
        }
    }
}

impl ExamplePool {
    pub fn new(language: impl Into<String>, demonstrations: Vec<Demonstration>) -> Result<Self, PipelineError> {
        let pool = ExamplePool { demonstrations, language: language.into() };
        pool.validate()?;
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.demonstrations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demonstrations.is_empty()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for d in &self.demonstrations {
            if d.language != self.language {
                return Err(PipelineError::InvalidArgument(format!(
                    "demonstration {} is in `{}` but the pool is `{}`",
                    d.article_ref, d.language, self.language
                )));
            }
            if text::count_sentences(&d.summary) > SUMMARY_SENTENCES {
                return Err(PipelineError::InvalidArgument(format!(
                    "demonstration {} summary exceeds {SUMMARY_SENTENCES} sentences",
                    d.article_ref
                )));
            }
        }
        Ok(())
    }

    /// Checks the pool can serve `config`.
    pub fn validate_for(&self, config: &PipelineConfig) -> Result<(), PipelineError> {
        self.validate()?;
        if self.language != config.language {
            return Err(PipelineError::InvalidArgument(format!(
                "pool language `{}` does not match config language `{}`",
                self.language, config.language
            )));
        }
        if config.k > self.len() {
            return Err(PipelineError::InvalidArgument(format!(
                "k = {} exceeds the pool size {}",
                config.k,
                self.len()
            )));
        }
        if config.use_cot {
            if let Some(d) = self.demonstrations.iter().find(|d| d.explanation.trim().is_empty()) {
                return Err(PipelineError::InvalidArgument(format!(
                    "demonstration {} has no explanation but chain-of-thought is on",
                    d.article_ref
                )));
            }
        }
        Ok(())
    }

    /// Reads a newline-delimited JSON pool file. The language is taken from
    /// the records; an empty file needs `language`.
    pub fn load(path: &Path, language: Option<&str>) -> Result<Self, PipelineError> {
        let demos: Vec<Demonstration> =
            crate::jsonl::read(path).map_err(|e| PipelineError::InvalidArgument(e.to_string()))?;
        let language = language
            .map(str::to_owned)
            .or_else(|| demos.first().map(|d| d.language.clone()))
            .ok_or_else(|| PipelineError::InvalidArgument(format!("{} is empty", path.display())))?;
        Self::new(language, demos)
    }

    /// Indices of the demonstrations used for `k` and `seed`: the whole pool
    /// is shuffled by the seed and the first `k` are kept.
    pub fn order(&self, k: usize, seed: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(k);
        idx
    }
}

/// The three feature switches that form one ablation cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Switches {
    pub cot: bool,
    pub summary: bool,
    pub reflection: bool,
}

impl Switches {
    /// All eight cells, ordered CoT-major then summary then reflection,
    /// from No/No/No to Yes/Yes/Yes.
    pub fn grid() -> [Switches; 8] {
        std::array::from_fn(|i| Switches { cot: i & 4 != 0, summary: i & 2 != 0, reflection: i & 1 != 0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub use_cot: bool,
    pub use_zero_shot_summary: bool,
    pub use_reflection: bool,
    pub k: usize,
    pub seed: u64,
    pub model: ModelConfig,
    pub language: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            use_cot: true,
            use_zero_shot_summary: true,
            use_reflection: true,
            k: DEFAULT_K,
            seed: 0,
            model: ModelConfig::default(),
            language: "en".into(),
        }
    }
}

impl PipelineConfig {
    pub fn for_language(language: impl Into<String>) -> Self {
        PipelineConfig { language: language.into(), ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k == 0 {
            return Err(PipelineError::InvalidArgument("k must be positive".into()));
        }
        self.model.validate().map_err(PipelineError::from)
    }

    pub fn switches(&self) -> Switches {
        Switches { cot: self.use_cot, summary: self.use_zero_shot_summary, reflection: self.use_reflection }
    }

    pub fn with_switches(&self, s: Switches) -> Self {
        PipelineConfig {
            use_cot: s.cot,
            use_zero_shot_summary: s.summary,
            use_reflection: s.reflection,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PipelineConfig { seed, ..self.clone() }
    }

    pub fn with_k(&self, k: usize) -> Self {
        PipelineConfig { k, ..self.clone() }
    }

    /// Digest of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        text::short_digest(&serde_json::to_string(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Summarize,
    Classify,
    Reflect,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Summarize => "summarize",
            Stage::Classify => "classify",
            Stage::Reflect => "reflect",
        })
    }
}

/// Digest per executed stage. The extractive summary has no prompt, so its
/// digest covers the excerpt instead.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptFingerprints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summarize: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflect: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub article_ref: ArticleId,
    pub final_label: Label,
    pub summary_used: String,
    pub classification_label: Label,
    pub classification_justification: String,
    pub reflection_invoked: bool,
    pub reflection_confirmed: Option<bool>,
    pub prompt_fingerprints: PromptFingerprints,
}

impl Verdict {
    /// Gate invariants relating the stage outputs to the final label.
    pub fn is_consistent(&self, config: &PipelineConfig) -> bool {
        let invoked_ok =
            self.reflection_invoked == (config.use_reflection && self.classification_label.is_relevant());
        let final_ok = self.final_label.is_relevant()
            == (self.classification_label.is_relevant()
                && (!self.reflection_invoked || self.reflection_confirmed == Some(true)));
        let trace_ok = self.prompt_fingerprints.summarize.is_some()
            && self.prompt_fingerprints.classify.is_some()
            && self.prompt_fingerprints.reflect.is_some() == self.reflection_invoked
            && self.reflection_confirmed.is_some() == self.reflection_invoked;
        invoked_ok && final_ok && trace_ok
    }
}

/// A run that produced no verdict, tagged with the stage that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("article {article_ref}: {stage} failed: {message}")]
pub struct StageFailure {
    pub article_ref: ArticleId,
    pub stage: Stage,
    pub message: String,
    #[serde(skip)]
    pub error: Option<PipelineError>,
}

#[derive(Debug, Clone, Copy)]
pub struct TestItem<'a> {
    pub title: &'a str,
    pub summary: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub label: Label,
    pub justification: String,
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    gateway: Gateway,
    templates: TemplateSet,
    label_tokens: Option<LabelTokens>,
    reflection_tokens: ReflectionTokens,
}

fn fingerprint(request: &ChatRequest) -> String {
    text::short_digest(&request.prompt_text())
}

impl Pipeline {
    pub fn new(gateway: Gateway) -> Self {
        Pipeline {
            gateway,
            templates: TemplateSet::default(),
            label_tokens: None,
            reflection_tokens: ReflectionTokens::default(),
        }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    /// Overrides the per-language default label tokens.
    pub fn with_label_tokens(mut self, tokens: LabelTokens) -> Self {
        self.label_tokens = Some(tokens);
        self
    }

    pub fn with_reflection_tokens(mut self, tokens: ReflectionTokens) -> Self {
        self.reflection_tokens = tokens;
        self
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    fn labels_for(&self, language: &str) -> LabelTokens {
        self.label_tokens.clone().unwrap_or_else(|| LabelTokens::for_language(language))
    }

    pub fn summarization_request(&self, article: &Article, config: &PipelineConfig) -> ChatRequest {
        let prompt = self.templates.summarize.render(&[
            ("title", &article.title),
            ("body", &article.body),
            ("language_name", language_name(&article.language)),
        ]);
        ChatRequest::new(vec![ChatMessage::user(prompt)], config.model.clone())
    }

    /// Returns the summary and its stage fingerprint.
    pub fn summarize(&self, article: &Article, config: &PipelineConfig) -> Result<(String, String), PipelineError> {
        if article.body.trim().is_empty() {
            return Err(PipelineError::Precondition(format!("article {} has an empty body", article.id)));
        }
        let (summary, digest) = if config.use_zero_shot_summary {
            let request = self.summarization_request(article, config);
            let response = self.gateway.complete(&request)?;
            let content = response.content.trim();
            let summary = match response.finish_reason {
                FinishReason::Length => text::complete_sentences(content, SUMMARY_SENTENCES),
                _ => text::first_sentences(content, SUMMARY_SENTENCES),
            };
            if summary.is_empty() {
                return Err(PipelineError::Parse { raw: response.content });
            }
            (summary.to_owned(), fingerprint(&request))
        } else {
            let excerpt = text::first_sentences(&article.body, SUMMARY_SENTENCES).to_owned();
            let digest = text::short_digest(&format!("extractive\n{excerpt}"));
            (excerpt, digest)
        };
        let n = text::count_sentences(&summary);
        if n > SUMMARY_SENTENCES {
            return Err(PipelineError::Internal(format!("summary has {n} sentences after truncation")));
        }
        Ok((summary, digest))
    }

    pub fn build_classification_prompt(
        &self,
        test: TestItem<'_>,
        pool: &ExamplePool,
        config: &PipelineConfig,
    ) -> Result<ChatRequest, PipelineError> {
        config.validate()?;
        pool.validate_for(config)?;
        let demo_template = if config.use_cot { &self.templates.demonstration_cot } else { &self.templates.demonstration };
        let blocks: Vec<String> = pool
            .order(config.k, config.seed)
            .into_iter()
            .enumerate()
            .map(|(i, idx)| {
                let d = &pool.demonstrations[idx];
                let n = (i + 1).to_string();
                demo_template.render(&[
                    ("index", &n),
                    ("title", &d.title),
                    ("summary", &d.summary),
                    ("label", d.label.prompt_text()),
                    ("explanation", &d.explanation),
                ])
            })
            .collect();
        let test_block = self.templates.test.render(&[("title", test.title), ("summary", test.summary)]);
        let task = self.templates.task.render(&[("language_name", language_name(&config.language))]);
        let user = format!("{}\n\n{}", blocks.join("\n\n"), test_block);
        let request = ChatRequest::new(vec![ChatMessage::system(task), ChatMessage::user(user)], config.model.clone());
        self.gateway.check_budget(&request)?;
        Ok(request)
    }

    pub fn classify(
        &self,
        test: TestItem<'_>,
        pool: &ExamplePool,
        config: &PipelineConfig,
    ) -> Result<Classification, PipelineError> {
        let request = self.build_classification_prompt(test, pool, config)?;
        let response = self.gateway.complete(&request)?;
        let label = parse_label(&response.content, &self.labels_for(&config.language));
        match (label, response.finish_reason) {
            (Some(label), _) => Ok(Classification {
                label,
                justification: justification(&response.content),
                fingerprint: fingerprint(&request),
            }),
            (None, FinishReason::Length) => Err(PipelineError::Truncated { raw: response.content }),
            (None, _) => Err(PipelineError::Parse { raw: response.content }),
        }
    }

    pub fn reflection_request(
        &self,
        test: TestItem<'_>,
        prior: &Classification,
        config: &PipelineConfig,
    ) -> ChatRequest {
        let prompt = self.templates.reflection.render(&[
            ("title", test.title),
            ("summary", test.summary),
            ("label", prior.label.prompt_text()),
            ("justification", &prior.justification),
        ]);
        ChatRequest::new(vec![ChatMessage::user(prompt)], config.model.clone())
    }

    /// Returns whether the model stands by its positive assessment, with the
    /// stage fingerprint.
    pub fn reflect(
        &self,
        test: TestItem<'_>,
        prior: &Classification,
        config: &PipelineConfig,
    ) -> Result<(bool, String), PipelineError> {
        if !config.use_reflection {
            return Err(PipelineError::Precondition("reflection is disabled in this configuration".into()));
        }
        if prior.label != Label::Relevant {
            return Err(PipelineError::Precondition("reflection only runs on relevant classifications".into()));
        }
        let request = self.reflection_request(test, prior, config);
        let response = self.gateway.complete(&request)?;
        match (parse_reflection(&response.content, &self.reflection_tokens), response.finish_reason) {
            (Some(confirmed), _) => Ok((confirmed, fingerprint(&request))),
            (None, FinishReason::Length) => Err(PipelineError::Truncated { raw: response.content }),
            (None, _) => Err(PipelineError::Parse { raw: response.content }),
        }
    }

    pub fn run(&self, article: &Article, pool: &ExamplePool, config: &PipelineConfig) -> Result<Verdict, StageFailure> {
        let fail = |stage, error: PipelineError| StageFailure {
            article_ref: article.id.clone(),
            stage,
            message: error.to_string(),
            error: Some(error),
        };
        if config.use_zero_shot_summary {
            // The summary only adds tokens, so a prompt that overflows with an
            // empty one fails before the summarization call is spent.
            let bare = TestItem { title: &article.title, summary: "" };
            self.build_classification_prompt(bare, pool, config).map_err(|e| fail(Stage::Classify, e))?;
        }
        let (summary, summary_digest) = self.summarize(article, config).map_err(|e| fail(Stage::Summarize, e))?;
        let test = TestItem { title: &article.title, summary: &summary };
        let classification = self.classify(test, pool, config).map_err(|e| fail(Stage::Classify, e))?;

        let mut fingerprints = PromptFingerprints {
            summarize: Some(summary_digest),
            classify: Some(classification.fingerprint.clone()),
            reflect: None,
        };
        let mut reflection_confirmed = None;
        if config.use_reflection && classification.label.is_relevant() {
            let (confirmed, digest) =
                self.reflect(test, &classification, config).map_err(|e| fail(Stage::Reflect, e))?;
            reflection_confirmed = Some(confirmed);
            fingerprints.reflect = Some(digest);
        }
        let final_label = if classification.label.is_relevant() && reflection_confirmed != Some(false) {
            Label::Relevant
        } else {
            Label::NotRelevant
        };
        Ok(Verdict {
            article_ref: article.id.clone(),
            final_label,
            summary_used: summary,
            classification_label: classification.label,
            classification_justification: classification.justification,
            reflection_invoked: reflection_confirmed.is_some(),
            reflection_confirmed,
            prompt_fingerprints: fingerprints,
        })
    }

    /// Runs every article, at most `parallelism` at a time. Results keep the
    /// input order.
    pub fn run_batch(
        &self,
        articles: &[Article],
        pool: &ExamplePool,
        config: &PipelineConfig,
        parallelism: usize,
    ) -> Vec<Result<Verdict, StageFailure>> {
        if parallelism <= 1 {
            return articles.iter().map(|a| self.run(a, pool, config)).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
            Ok(threads) => threads.install(|| articles.par_iter().map(|a| self.run(a, pool, config)).collect()),
            Err(_) => articles.iter().map(|a| self.run(a, pool, config)).collect(),
        }
    }
}
