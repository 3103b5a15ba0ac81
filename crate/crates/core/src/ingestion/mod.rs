//! Article acquisition, relevance filtering and labeling samples.
//!
//! Sources either replay a recorded payload file or talk to a live adapter.
//! Everything after the fetch (normalization, id stamping, filtering,
//! sampling) is pure.

mod adapters;
mod config;

use std::collections::HashSet;
use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::text;

pub use adapters::{parse_newsapi_payload, parse_rss_feed, ArticleSource, HttpFetcher, UreqFetcher};
pub use config::{load_terms, IngestConfig, IngestSection};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("transport error from source `{source_name}` (retryable): {message}")]
    Transport { source_name: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Jsonl(#[from] crate::jsonl::JsonlError),
}

impl IngestError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, IngestError::Transport { .. })
    }
}

/// Stable article identifier, derived from the normalized url and title.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArticleId(pub String);

impl ArticleId {
    pub fn derive(url: &str, title: &str) -> Self {
        ArticleId(text::short_digest(&format!("{}\n{}", text::normalize(url), text::normalize(title))))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ArticleId {
    fn from(s: &str) -> Self {
        ArticleId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: ArticleId,
    pub url: String,
    pub source_domain: String,
    /// ISO-639-1 code.
    pub language: String,
    pub title: String,
    pub body: String,
    pub published_at: DateTime<Utc>,
    pub fetched_at: DateTime<Utc>,
}

/// An article as it arrives from a source: not yet normalized, possibly
/// without a domain or id. This is also the recorded-response line format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawArticle {
    pub url: String,
    #[serde(default)]
    pub source_domain: Option<String>,
    pub language: String,
    pub title: String,
    pub body: String,
    pub published_at: DateTime<Utc>,
    #[serde(default)]
    pub fetched_at: Option<DateTime<Utc>>,
}

impl Article {
    /// Normalizes a raw item and stamps its id. Fails when title or body is
    /// empty after normalization.
    pub fn from_raw(raw: RawArticle, fetched_at: DateTime<Utc>) -> Result<Self, String> {
        let url = text::normalize(&raw.url);
        let title = text::normalize(&raw.title);
        let body = text::normalize(&raw.body);
        if title.is_empty() {
            return Err(format!("empty title for {url}"));
        }
        if body.is_empty() {
            return Err(format!("empty body for {url}"));
        }
        let source_domain = match raw.source_domain {
            Some(d) if !d.trim().is_empty() => canonical_domain(&d),
            _ => domain_of(&url).ok_or_else(|| format!("cannot derive domain from `{url}`"))?,
        };
        Ok(Article {
            id: ArticleId::derive(&url, &title),
            url,
            source_domain,
            language: raw.language.trim().to_lowercase(),
            title,
            body,
            published_at: raw.published_at,
            fetched_at: raw.fetched_at.unwrap_or(fetched_at),
        })
    }
}

/// Lowercased host with any leading `www.` removed.
pub fn canonical_domain(domain: &str) -> String {
    let d = domain.trim().to_lowercase();
    d.strip_prefix("www.").map(str::to_owned).unwrap_or(d)
}

fn domain_of(url: &str) -> Option<String> {
    let parsed = url::Url::parse(url).ok()?;
    parsed.host_str().map(canonical_domain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    /// A search API queried in windows of at most `query_window_days`.
    ApiWindow {
        endpoint: String,
        query_window_days: u32,
        #[serde(default)]
        query: Option<String>,
    },
    /// A fixed list of news sites read through their feeds.
    SiteCrawl { sites: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub name: String,
    #[serde(flatten)]
    pub kind: SourceKind,
    pub country_tag: String,
    pub language: String,
    /// When non-empty, items from other domains are not accepted from this source.
    #[serde(default)]
    pub domain_allowlist: Vec<String>,
    /// Recorded-response file. When set the source runs in replay mode.
    #[serde(default)]
    pub replay: Option<std::path::PathBuf>,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        match &self.kind {
            SourceKind::ApiWindow { query_window_days: 0, .. } => Err(IngestError::Config(format!(
                "source `{}`: query_window_days must be positive",
                self.name
            ))),
            SourceKind::SiteCrawl { sites } if sites.is_empty() => Err(IngestError::Config(format!(
                "source `{}`: site_crawl needs at least one site",
                self.name
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Default)]
pub struct Fetched {
    pub articles: Vec<Article>,
    /// Per-item problems (malformed payload lines, empty text) that were skipped.
    pub diagnostics: Vec<String>,
}

/// Fetches every article `source` yields for the inclusive date window,
/// normalized, id-stamped, deduplicated by id and ordered by
/// `(published_at, id)`.
pub fn fetch_window(source: &SourceConfig, from: NaiveDate, to: NaiveDate) -> Result<Fetched, IngestError> {
    fetch_window_with(source, from, to, &UreqFetcher::default())
}

pub fn fetch_window_with(
    source: &SourceConfig,
    from: NaiveDate,
    to: NaiveDate,
    http: &dyn HttpFetcher,
) -> Result<Fetched, IngestError> {
    if to < from {
        return Err(IngestError::InvalidArgument(format!("window end {to} precedes start {from}")));
    }
    source.validate()?;
    let adapter = adapters::for_source(source, http);
    let (raw, mut diagnostics) = adapter.fetch(from, to)?;
    let fetched_at = Utc::now();
    let allow: HashSet<String> = source.domain_allowlist.iter().map(|d| canonical_domain(d)).collect();

    let mut seen = HashSet::new();
    let mut articles = Vec::new();
    for item in raw {
        let date = item.published_at.date_naive();
        if date < from || date > to {
            continue;
        }
        match Article::from_raw(item, fetched_at) {
            Ok(a) => {
                if !allow.is_empty() && !allow.contains(&a.source_domain) {
                    continue;
                }
                if seen.insert(a.id.clone()) {
                    articles.push(a);
                }
            }
            Err(e) => {
                log::warn!("source {}: skipping item: {e}", source.name);
                diagnostics.push(e);
            }
        }
    }
    articles.sort_by(|a, b| (a.published_at, &a.id).cmp(&(b.published_at, &b.id)));
    Ok(Fetched { articles, diagnostics })
}

/// Title/domain/protected-area relevance rule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterRule {
    #[serde(default)]
    pub title_must_contain: Option<String>,
    #[serde(default)]
    pub domain_allowlist: Vec<String>,
    pub protected_area_terms: Vec<String>,
}

impl FilterRule {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.protected_area_terms.iter().all(|t| t.trim().is_empty()) {
            return Err(IngestError::InvalidArgument("protected_area_terms must not be empty".into()));
        }
        Ok(())
    }

    /// `(title contains the country string OR domain is allowlisted) AND
    /// (title or body mentions a protected-area term)`.
    pub fn matches(&self, article: &Article) -> bool {
        let title_hit = self
            .title_must_contain
            .as_deref()
            .is_some_and(|needle| !needle.is_empty() && text::contains_folded(&article.title, needle));
        let domain_hit = || {
            self.domain_allowlist
                .iter()
                .any(|d| canonical_domain(d) == canonical_domain(&article.source_domain))
        };
        if !(title_hit || domain_hit()) {
            return false;
        }
        let title = text::fold(&article.title);
        let body = text::fold(&article.body);
        self.protected_area_terms
            .iter()
            .map(|t| text::fold(t.trim()))
            .filter(|t| !t.is_empty())
            .any(|t| title.contains(&t) || body.contains(&t))
    }
}

/// Subset of `articles` accepted by `rule`, in input order.
pub fn apply_filter(articles: &[Article], rule: &FilterRule) -> Vec<Article> {
    articles.iter().filter(|a| rule.matches(a)).cloned().collect()
}

/// Uniform sample of `n` articles without replacement, reproducible by seed.
pub fn sample_for_labeling(articles: &[Article], n: usize, seed: u64) -> Result<Vec<Article>, IngestError> {
    if n == 0 {
        return Err(IngestError::InvalidArgument("sample size must be positive".into()));
    }
    if n > articles.len() {
        return Err(IngestError::InvalidArgument(format!(
            "cannot sample {n} articles from a batch of {}",
            articles.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<Article> = articles.to_vec();
    let (picked, _) = pool.partial_shuffle(&mut rng, n);
    Ok(picked.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    pub(crate) fn article(title: &str, domain: &str, body: &str) -> Article {
        Article::from_raw(
            RawArticle {
                url: format!("https://{domain}/{}", text::short_digest(title)),
                source_domain: Some(domain.into()),
                language: "es".into(),
                title: title.into(),
                body: body.into(),
                published_at: Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap(),
                fetched_at: None,
            },
            Utc.with_ymd_and_hms(2023, 1, 2, 0, 0, 0).unwrap(),
        )
        .unwrap()
    }

    fn colombia_rule() -> FilterRule {
        FilterRule {
            title_must_contain: Some("Colombia".into()),
            domain_allowlist: vec!["eltiempo.com".into()],
            protected_area_terms: vec!["Chiribiquete".into(), "parque nacional".into()],
        }
    }

    #[test]
    fn id_is_deterministic_over_url_and_title() {
        assert_eq!(ArticleId::derive("https://a/x", "T"), ArticleId::derive(" https://a/x ", "T  "));
        assert_ne!(ArticleId::derive("https://a/x", "T"), ArticleId::derive("https://a/x", "U"));
    }

    #[test]
    fn from_raw_rejects_blank_text() {
        let raw = RawArticle {
            url: "https://x.org/a".into(),
            source_domain: None,
            language: "ne".into(),
            title: " \u{0001} ".into(),
            body: "b".into(),
            published_at: Utc::now(),
            fetched_at: None,
        };
        assert!(Article::from_raw(raw, Utc::now()).is_err());
    }

    #[test]
    fn domain_is_derived_from_url() {
        let raw = RawArticle {
            url: "https://www.EKantipur.com/news/1".into(),
            source_domain: None,
            language: "ne".into(),
            title: "t".into(),
            body: "b".into(),
            published_at: Utc::now(),
            fetched_at: None,
        };
        assert_eq!(Article::from_raw(raw, Utc::now()).unwrap().source_domain, "ekantipur.com");
    }

    #[test]
    fn colombia_title_with_park_is_kept() {
        let a = article("Colombia aprueba nuevo parque nacional", "otro.net", "El parque nacional crece.");
        assert_eq!(apply_filter(std::slice::from_ref(&a), &colombia_rule()), vec![a]);
    }

    #[test]
    fn no_country_and_unlisted_domain_is_dropped() {
        let a = article("Nuevo parque nacional", "otro.net", "Chiribiquete y parque nacional");
        assert!(apply_filter(&[a], &colombia_rule()).is_empty());
    }

    #[test]
    fn missing_title_requirement_never_matches_title() {
        let rule = FilterRule { title_must_contain: None, domain_allowlist: vec![], protected_area_terms: vec!["x".into()] };
        assert!(!rule.matches(&article("x", "a.com", "x")));
    }

    #[test]
    fn sampling_guards_and_is_seeded() {
        let batch: Vec<_> = (0..30).map(|i| article(&format!("t{i}"), "a.com", "b")).collect();
        assert!(matches!(sample_for_labeling(&batch, 31, 1), Err(IngestError::InvalidArgument(_))));
        let a = sample_for_labeling(&batch, 10, 7).unwrap();
        assert_eq!(a, sample_for_labeling(&batch, 10, 7).unwrap());
        let ids: HashSet<_> = a.iter().map(|x| &x.id).collect();
        assert_eq!(ids.len(), 10);
        let full = sample_for_labeling(&batch, 30, 3).unwrap();
        let mut got: Vec<_> = full.iter().map(|x| x.id.clone()).collect();
        let mut want: Vec<_> = batch.iter().map(|x| x.id.clone()).collect();
        assert_ne!(got, want);
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }
}
