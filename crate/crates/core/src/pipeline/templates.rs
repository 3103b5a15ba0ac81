//! Prompt templates with `{slot}` placeholders.
//!
//! A template directory holds one file per stage (`task.txt`,
//! `demonstration.txt`, `demonstration_cot.txt`, `test.txt`,
//! `summarize.txt`, `reflection.txt`) and an optional `VERSION` file.
//! A `<language>/` subdirectory overrides individual files for that
//! language. Missing files fall back to the built-in set.

use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template `{template}` uses unknown slot `{slot}`")]
    UnknownSlot { template: String, slot: String },
    #[error("template `{template}` is missing required slot `{slot}`")]
    MissingSlot { template: String, slot: String },
    #[error("template `{template}` has an unterminated slot")]
    Unterminated { template: String },
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    pieces: Vec<Piece>,
}

impl Template {
    /// `{{` and `}}` produce literal braces.
    pub fn parse(name: &str, source: &str) -> Result<Self, TemplateError> {
        let mut pieces = Vec::new();
        let mut text = String::new();
        let mut chars = source.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    text.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    text.push('}');
                }
                '{' => {
                    let mut slot = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some(c) if c.is_ascii_alphanumeric() || c == '_' => slot.push(c),
                            _ => return Err(TemplateError::Unterminated { template: name.into() }),
                        }
                    }
                    if !text.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    pieces.push(Piece::Slot(slot));
                }
                c => text.push(c),
            }
        }
        if !text.is_empty() {
            pieces.push(Piece::Text(text));
        }
        Ok(Template { name: name.into(), pieces })
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(s.as_str()),
            Piece::Text(_) => None,
        })
    }

    fn require(self, required: &[&str], allowed: &[&str]) -> Result<Self, TemplateError> {
        for slot in self.slots() {
            if !allowed.contains(&slot) {
                return Err(TemplateError::UnknownSlot { template: self.name.clone(), slot: slot.into() });
            }
        }
        for r in required {
            if !self.slots().any(|s| s == *r) {
                return Err(TemplateError::MissingSlot { template: self.name.clone(), slot: (*r).into() });
            }
        }
        Ok(self)
    }

    /// Fills every slot from `values`. Slots were checked at load time, so a
    /// missing value renders empty.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(s) => {
                    if let Some((_, v)) = values.iter().find(|(k, _)| k == s) {
                        out.push_str(v);
                    }
                }
            }
        }
        out
    }
}

const BUILTIN: [(&str, &str); 6] = [
    ("task", include_str!("../../templates/default/task.txt")),
    ("demonstration", include_str!("../../templates/default/demonstration.txt")),
    ("demonstration_cot", include_str!("../../templates/default/demonstration_cot.txt")),
    ("test", include_str!("../../templates/default/test.txt")),
    ("summarize", include_str!("../../templates/default/summarize.txt")),
    ("reflection", include_str!("../../templates/default/reflection.txt")),
];
const BUILTIN_VERSION: &str = include_str!("../../templates/default/VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: String,
    pub task: Template,
    pub demonstration: Template,
    pub demonstration_cot: Template,
    pub test: Template,
    pub summarize: Template,
    pub reflection: Template,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::from_sources(format!("builtin-{}", BUILTIN_VERSION.trim()), |name| {
            Ok(BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, s)| s.to_string()).unwrap())
        })
        .expect("built-in templates are valid")
    }
}

impl TemplateSet {
    fn from_sources(
        version: String,
        mut source: impl FnMut(&str) -> Result<String, TemplateError>,
    ) -> Result<Self, TemplateError> {
        let mut load = |name: &str, required: &[&str], allowed: &[&str]| {
            Template::parse(name, source(name)?.trim_end_matches('\n')).and_then(|t| t.require(required, allowed))
        };
        let demo_slots = ["index", "title", "summary", "label", "explanation"];
        Ok(TemplateSet {
            version,
            task: load("task", &[], &["language_name"])?,
            demonstration: load("demonstration", &["title", "summary", "label"], &demo_slots)?,
            demonstration_cot: load("demonstration_cot", &["title", "summary", "label", "explanation"], &demo_slots)?,
            test: load("test", &["title", "summary"], &["title", "summary"])?,
            summarize: load("summarize", &["body"], &["title", "body", "language_name"])?,
            reflection: load(
                "reflection",
                &["title", "summary", "label"],
                &["title", "summary", "label", "justification"],
            )?,
        })
    }

    /// Loads `dir`, with `dir/<language>/` overrides and built-in fallbacks.
    pub fn load(dir: &Path, language: &str) -> Result<Self, TemplateError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map_err(|e| TemplateError::Io { path: p.display().to_string(), message: e.to_string() })
        };
        let version_file = dir.join("VERSION");
        let version = if version_file.exists() {
            format!("{}-{}", dir.display(), read(&version_file)?.trim())
        } else {
            dir.display().to_string()
        };
        Self::from_sources(version, |name| {
            let file = format!("{name}.txt");
            for candidate in [dir.join(language).join(&file), dir.join(&file)] {
                if candidate.exists() {
                    return read(&candidate);
                }
            }
            Ok(BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, s)| s.to_string()).unwrap())
        })
    }
}
