//! Prediction files: one `{"id", "label", "justification"?}` object per line.
//! Used both for our own runs and for baselines scored outside this system.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ingestion::ArticleId;
use crate::jsonl::{self, JsonlError};
use crate::pipeline::{Label, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub id: ArticleId,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
}

impl Prediction {
    pub fn pair(&self) -> (ArticleId, Label) {
        (self.id.clone(), self.label)
    }
}

impl From<&Verdict> for Prediction {
    fn from(v: &Verdict) -> Self {
        Prediction {
            id: v.article_ref.clone(),
            label: v.final_label,
            justification: Some(v.classification_justification.clone()).filter(|j| !j.is_empty()),
        }
    }
}

pub fn import_external_predictions(path: &Path) -> Result<Vec<Prediction>, EvalError> {
    jsonl::read(path).map_err(|e| match e {
        JsonlError::Parse { line, message, .. } => EvalError::Parse { line, message },
        other => EvalError::Io(other.to_string()),
    })
}

pub fn export_predictions(path: &Path, predictions: &[Prediction]) -> Result<(), EvalError> {
    jsonl::write(path, predictions).map_err(|e| EvalError::Io(e.to_string()))
}
