use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{FilterRule, IngestError, SourceConfig};

/// Ingestion config file (TOML): sources plus one filter rule whose
/// protected-area terms live in a separate one-term-per-line file.
#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub sources: Vec<SourceConfig>,
    pub filter: FilterRule,
}

#[derive(Debug, Clone, Deserialize)]
struct FilterSection {
    #[serde(default)]
    title_must_contain: Option<String>,
    #[serde(default)]
    domain_allowlist: Vec<String>,
    #[serde(default)]
    protected_area_terms: Vec<String>,
    #[serde(default)]
    protected_area_terms_file: Option<PathBuf>,
}

#[derive(Deserialize)]
struct RawConfig {
    #[serde(default, rename = "source")]
    sources: Vec<SourceConfig>,
    filter: FilterSection,
}

impl IngestConfig {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IngestError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, IngestError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        Self::from_parts(raw.sources, raw.filter, base)
    }

    fn from_parts(mut sources: Vec<SourceConfig>, f: FilterSection, base: &Path) -> Result<Self, IngestError> {
        let mut terms = f.protected_area_terms;
        if let Some(file) = f.protected_area_terms_file {
            terms.extend(load_terms(&base.join(file))?);
        }
        for s in &mut sources {
            s.validate()?;
            if let Some(r) = s.replay.take() {
                s.replay = Some(base.join(r));
            }
        }
        let filter = FilterRule {
            title_must_contain: f.title_must_contain,
            domain_allowlist: f.domain_allowlist,
            protected_area_terms: terms,
        };
        filter.validate()?;
        Ok(IngestConfig { sources, filter })
    }
}

/// One term per line (UTF-8). Blank lines and `#` comments are ignored.
pub fn load_terms(path: &Path) -> Result<Vec<String>, IngestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| IngestError::Config(format!("cannot read terms file {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

/// Embedded-table form used by larger config files (e.g. the weekly run).
#[derive(Debug, Clone, Deserialize)]
pub struct IngestSection {
    #[serde(default, rename = "source")]
    sources: Vec<SourceConfig>,
    filter: FilterSection,
}

impl IngestSection {
    pub fn resolve(self, base: &Path) -> Result<IngestConfig, IngestError> {
        IngestConfig::from_parts(self.sources, self.filter, base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::SourceKind;

    #[test]
    fn parses_sources_and_terms_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("terms.txt"), "# Nepal\nचितवन\n\nबर्दिया\n").unwrap();
        let cfg = IngestConfig::parse(
            r#"
            [[source]]
            name = "kantipur"
            kind = "site_crawl"
            sites = ["https://ekantipur.com/rss"]
            country_tag = "NP"
            language = "ne"
            replay = "recorded.jsonl"

            [filter]
            domain_allowlist = ["ekantipur.com"]
            protected_area_terms_file = "terms.txt"
            "#,
            dir.path(),
        )
        .unwrap();
        assert_eq!(cfg.filter.protected_area_terms, vec!["चितवन", "बर्दिया"]);
        assert!(matches!(cfg.sources[0].kind, SourceKind::SiteCrawl { .. }));
        assert_eq!(cfg.sources[0].replay.as_deref(), Some(dir.path().join("recorded.jsonl").as_path()));
    }

    #[test]
    fn rejects_empty_terms_and_zero_window() {
        let base = Path::new(".");
        assert!(IngestConfig::parse("[filter]\nprotected_area_terms = []\n", base).is_err());
        let zero = r#"
            [[source]]
            name = "n"
            kind = "api_window"
            endpoint = "https://x"
            query_window_days = 0
            country_tag = "CO"
            language = "es"
            [filter]
            protected_area_terms = ["a"]
        "#;
        assert!(IngestConfig::parse(zero, base).is_err());
    }
}
