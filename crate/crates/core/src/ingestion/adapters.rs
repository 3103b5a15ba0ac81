use std::path::PathBuf;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use quick_xml::events::Event;
use serde::Deserialize;

use super::{IngestError, RawArticle, SourceConfig, SourceKind};
use crate::jsonl;

/// Something that yields raw articles for an inclusive date window, plus
/// diagnostics for items it had to skip.
pub trait ArticleSource {
    fn fetch(&self, from: NaiveDate, to: NaiveDate) -> Result<(Vec<RawArticle>, Vec<String>), IngestError>;
}

/// Minimal GET transport, swappable in tests.
pub trait HttpFetcher: Send + Sync {
    fn get(&self, url: &str, headers: &[(&str, String)]) -> Result<String, String>;
}

#[derive(Debug, Clone)]
pub struct UreqFetcher {
    pub timeout: Duration,
}

impl Default for UreqFetcher {
    fn default() -> Self {
        UreqFetcher { timeout: Duration::from_secs(30) }
    }
}

impl HttpFetcher for UreqFetcher {
    fn get(&self, url: &str, headers: &[(&str, String)]) -> Result<String, String> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let mut req = agent.get(url);
        for (k, v) in headers {
            req = req.set(k, v);
        }
        req.call().map_err(|e| e.to_string())?.into_string().map_err(|e| e.to_string())
    }
}

pub(super) fn for_source<'a>(source: &'a SourceConfig, http: &'a dyn HttpFetcher) -> Box<dyn ArticleSource + 'a> {
    if let Some(path) = &source.replay {
        return Box::new(Replay { path: path.clone() });
    }
    match &source.kind {
        SourceKind::ApiWindow { endpoint, query_window_days, query } => Box::new(NewsApi {
            source,
            endpoint,
            window_days: *query_window_days,
            query: query.as_deref(),
            http,
        }),
        SourceKind::SiteCrawl { sites } => Box::new(FeedCrawl { source, sites, http, delay: Duration::from_millis(500) }),
    }
}

/// Replays a recorded-response file: one raw article object per line.
struct Replay {
    path: PathBuf,
}

impl ArticleSource for Replay {
    fn fetch(&self, _from: NaiveDate, _to: NaiveDate) -> Result<(Vec<RawArticle>, Vec<String>), IngestError> {
        Ok(jsonl::read_lenient(&self.path)?)
    }
}

struct NewsApi<'a> {
    source: &'a SourceConfig,
    endpoint: &'a str,
    window_days: u32,
    query: Option<&'a str>,
    http: &'a dyn HttpFetcher,
}

const NEWSAPI_PAGE_SIZE: usize = 100;
const NEWSAPI_MAX_PAGES: usize = 50;

impl ArticleSource for NewsApi<'_> {
    fn fetch(&self, from: NaiveDate, to: NaiveDate) -> Result<(Vec<RawArticle>, Vec<String>), IngestError> {
        let key = std::env::var("SEROW_NEWSAPI_KEY").unwrap_or_default();
        let mut out = Vec::new();
        let mut diagnostics = Vec::new();
        let mut chunk_start = from;
        while chunk_start <= to {
            let chunk_end = (chunk_start + chrono::Days::new(u64::from(self.window_days) - 1)).min(to);
            for page in 1..=NEWSAPI_MAX_PAGES {
                let mut url = url::Url::parse(self.endpoint)
                    .map_err(|e| IngestError::Config(format!("bad endpoint `{}`: {e}", self.endpoint)))?;
                {
                    let mut q = url.query_pairs_mut();
                    q.append_pair("language", &self.source.language)
                        .append_pair("from", &chunk_start.to_string())
                        .append_pair("to", &chunk_end.to_string())
                        .append_pair("pageSize", &NEWSAPI_PAGE_SIZE.to_string())
                        .append_pair("page", &page.to_string());
                    if let Some(query) = self.query {
                        q.append_pair("q", query);
                    }
                    if !self.source.domain_allowlist.is_empty() {
                        q.append_pair("domains", &self.source.domain_allowlist.join(","));
                    }
                }
                let body = self
                    .http
                    .get(url.as_str(), &[("X-Api-Key", key.clone())])
                    .map_err(|message| IngestError::Transport { source_name: self.source.name.clone(), message })?;
                let (items, total, mut diag) = parse_newsapi_payload(&body, &self.source.language)
                    .map_err(|message| IngestError::Transport { source_name: self.source.name.clone(), message })?;
                diagnostics.append(&mut diag);
                let got = items.len();
                out.extend(items);
                if got < NEWSAPI_PAGE_SIZE || page * NEWSAPI_PAGE_SIZE >= total {
                    break;
                }
            }
            chunk_start = chunk_end + chrono::Days::new(1);
        }
        Ok((out, diagnostics))
    }
}

#[derive(Deserialize)]
struct NewsApiPage {
    status: String,
    #[serde(default, rename = "totalResults")]
    total_results: usize,
    #[serde(default)]
    articles: Vec<serde_json::Value>,
    #[serde(default)]
    message: Option<String>,
}

#[derive(Deserialize)]
struct NewsApiItem {
    url: String,
    title: Option<String>,
    description: Option<String>,
    content: Option<String>,
    #[serde(rename = "publishedAt")]
    published_at: DateTime<Utc>,
}

/// Parses one NewsAPI `everything` page. Malformed items are skipped with a
/// diagnostic; a malformed envelope is an error.
pub fn parse_newsapi_payload(body: &str, language: &str) -> Result<(Vec<RawArticle>, usize, Vec<String>), String> {
    let page: NewsApiPage = serde_json::from_str(body).map_err(|e| format!("malformed NewsAPI envelope: {e}"))?;
    if page.status != "ok" {
        return Err(format!("NewsAPI status {}: {}", page.status, page.message.unwrap_or_default()));
    }
    let mut items = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, value) in page.articles.into_iter().enumerate() {
        match serde_json::from_value::<NewsApiItem>(value) {
            Ok(item) => {
                let body = item.content.or(item.description).unwrap_or_default();
                items.push(RawArticle {
                    url: item.url,
                    source_domain: None,
                    language: language.to_owned(),
                    title: item.title.unwrap_or_default(),
                    body,
                    published_at: item.published_at,
                    fetched_at: None,
                });
            }
            Err(e) => diagnostics.push(format!("NewsAPI item {idx}: {e}")),
        }
    }
    Ok((items, page.total_results, diagnostics))
}

/// Reads each configured site's RSS feed, with a fixed delay between sites.
struct FeedCrawl<'a> {
    source: &'a SourceConfig,
    sites: &'a [String],
    http: &'a dyn HttpFetcher,
    delay: Duration,
}

impl ArticleSource for FeedCrawl<'_> {
    fn fetch(&self, _from: NaiveDate, _to: NaiveDate) -> Result<(Vec<RawArticle>, Vec<String>), IngestError> {
        let mut out = Vec::new();
        let mut diagnostics = Vec::new();
        for (i, site) in self.sites.iter().enumerate() {
            if i > 0 {
                std::thread::sleep(self.delay);
            }
            let body = self
                .http
                .get(site, &[])
                .map_err(|message| IngestError::Transport { source_name: self.source.name.clone(), message })?;
            let (mut items, mut diag) = parse_rss_feed(&body, &self.source.language);
            out.append(&mut items);
            diagnostics.append(&mut diag);
        }
        Ok((out, diagnostics))
    }
}

#[derive(Default)]
struct PartialItem {
    title: String,
    link: String,
    description: String,
    pub_date: String,
}

/// Extracts `<item>` entries from an RSS 2.0 document.
pub fn parse_rss_feed(xml: &str, language: &str) -> (Vec<RawArticle>, Vec<String>) {
    let mut reader = quick_xml::Reader::from_str(xml);
    let mut items = Vec::new();
    let mut diagnostics = Vec::new();
    let mut current: Option<PartialItem> = None;
    let mut field: Option<String> = None;
    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if name == "item" {
                    current = Some(PartialItem::default());
                } else if current.is_some() {
                    field = Some(name);
                }
            }
            Ok(Event::Text(t)) => {
                if let (Some(item), Some(f)) = (current.as_mut(), field.as_deref()) {
                    let text = t.unescape().map(|c| c.into_owned()).unwrap_or_default();
                    push_field(item, f, &text);
                }
            }
            Ok(Event::CData(t)) => {
                if let (Some(item), Some(f)) = (current.as_mut(), field.as_deref()) {
                    push_field(item, f, &String::from_utf8_lossy(&t));
                }
            }
            Ok(Event::End(e)) => {
                if e.local_name().as_ref() == b"item" {
                    if let Some(item) = current.take() {
                        match DateTime::parse_from_rfc2822(item.pub_date.trim()) {
                            Ok(date) => items.push(RawArticle {
                                url: item.link.trim().to_owned(),
                                source_domain: None,
                                language: language.to_owned(),
                                title: item.title,
                                body: item.description,
                                published_at: date.with_timezone(&Utc),
                                fetched_at: None,
                            }),
                            Err(e) => diagnostics.push(format!("feed item `{}`: bad pubDate: {e}", item.title.trim())),
                        }
                    }
                }
                field = None;
            }
            Ok(Event::Eof) => break,
            Err(e) => {
                diagnostics.push(format!("feed parse error at byte {}: {e}", reader.buffer_position()));
                break;
            }
            _ => {}
        }
    }
    (items, diagnostics)
}

fn push_field(item: &mut PartialItem, field: &str, text: &str) {
    let slot = match field {
        "title" => &mut item.title,
        "link" => &mut item.link,
        "description" => &mut item.description,
        "pubDate" => &mut item.pub_date,
        _ => return,
    };
    slot.push_str(text);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Canned {
        pages: Mutex<Vec<String>>,
        urls: Mutex<Vec<String>>,
    }

    impl HttpFetcher for Canned {
        fn get(&self, url: &str, _headers: &[(&str, String)]) -> Result<String, String> {
            self.urls.lock().unwrap().push(url.to_owned());
            let mut pages = self.pages.lock().unwrap();
            if pages.is_empty() {
                Err("connection refused".into())
            } else {
                Ok(pages.remove(0))
            }
        }
    }

    fn api_source() -> SourceConfig {
        SourceConfig {
            name: "newsapi".into(),
            kind: SourceKind::ApiWindow {
                endpoint: "https://newsapi.example/v2/everything".into(),
                query_window_days: 30,
                query: Some("parque".into()),
            },
            country_tag: "CO".into(),
            language: "es".into(),
            domain_allowlist: vec![],
            replay: None,
        }
    }

    #[test]
    fn newsapi_payload_skips_bad_items() {
        let body = r#"{"status":"ok","totalResults":2,"articles":[
            {"url":"https://eltiempo.com/a","title":"Colombia","content":"Texto.","publishedAt":"2023-01-05T10:00:00Z"},
            {"url":"https://x.com/b","title":"sin fecha"}]}"#;
        let (items, total, diag) = parse_newsapi_payload(body, "es").unwrap();
        assert_eq!((items.len(), total, diag.len()), (1, 2, 1));
        assert!(parse_newsapi_payload(r#"{"status":"error","message":"rateLimited"}"#, "es").is_err());
    }

    #[test]
    fn newsapi_window_is_chunked() {
        let empty = r#"{"status":"ok","totalResults":0,"articles":[]}"#.to_string();
        let http = Canned { pages: Mutex::new(vec![empty; 3]), urls: Mutex::new(vec![]) };
        let from = NaiveDate::from_ymd_opt(2022, 12, 1).unwrap();
        let to = NaiveDate::from_ymd_opt(2023, 2, 28).unwrap();
        let got = super::super::fetch_window_with(&api_source(), from, to, &http).unwrap();
        assert!(got.articles.is_empty());
        let urls = http.urls.lock().unwrap();
        assert_eq!(urls.len(), 3);
        assert!(urls[0].contains("from=2022-12-01") && urls[0].contains("to=2022-12-30"));
        assert!(urls[2].contains("to=2023-02-28"));
    }

    #[test]
    fn unreachable_source_is_retryable() {
        let http = Canned { pages: Mutex::new(vec![]), urls: Mutex::new(vec![]) };
        let d = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap();
        let err = super::super::fetch_window_with(&api_source(), d, d, &http).unwrap_err();
        assert!(err.is_retryable());
    }

    #[test]
    fn rss_items_are_extracted() {
        let xml = r#"<?xml version="1.0"?><rss><channel><title>site</title>
            <item><title>चितवनमा गैंडा</title><link>https://ekantipur.com/n/1</link>
            <description><![CDATA[निकुञ्जमा गस्ती।]]></description><pubDate>Mon, 02 Jan 2023 08:00:00 +0545</pubDate></item>
            <item><title>bad</title><link>https://ekantipur.com/n/2</link><pubDate>yesterday</pubDate></item>
            </channel></rss>"#;
        let (items, diag) = parse_rss_feed(xml, "ne");
        assert_eq!(items.len(), 1);
        assert_eq!(diag.len(), 1);
        assert_eq!(items[0].title, "चितवनमा गैंडा");
        assert_eq!(items[0].body, "निकुञ्जमा गस्ती।");
    }
}
