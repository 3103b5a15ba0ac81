//! Table rendering with two-decimal, half-up rounding.

use serde::{Deserialize, Serialize};

use super::{AblationGrid, MeanStd, SliceMetrics, SweepRow};

/// Rounds a non-negative metric to two decimals, half-up. The small epsilon
/// absorbs binary representation error (0.705 is stored as 0.70499...).
pub fn round2(x: f64) -> f64 {
    if x < 0.0 {
        return -round2(-x);
    }
    (x * 100.0 + 0.5 + 1e-9).floor() / 100.0
}

pub fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

/// `0.70 (0.01)`
pub fn mean_std_cell(m: MeanStd) -> String {
    format!("{} ({})", fmt2(m.mean), fmt2(m.std))
}

/// `0.88 / 0.58 / 0.70`
pub fn triple_cell(m: &SliceMetrics) -> String {
    format!("{} / {} / {}", fmt2(m.precision), fmt2(m.recall), fmt2(m.f1))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

impl AblationGrid {
    pub fn render_table(&self) -> String {
        let mut out = String::from("CoT. | Sum. | Ref. | Precision | Recall | F1 Score\n");
        for c in &self.cells {
            let s = c.switches;
            let cells = match &c.report {
                Some(r) => r.cells().map(|v| if r.partial { format!("{v}*") } else { v }),
                None => ["failed".into(), "failed".into(), "failed".into()],
            };
            out.push_str(&format!(
                "{} | {} | {} | {}\n",
                yes_no(s.cot),
                yes_no(s.summary),
                yes_no(s.reflection),
                cells.join(" | ")
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("cot,summary,reflection,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,partial,error\n");
        for c in &self.cells {
            let s = c.switches;
            let metrics = match &c.report {
                Some(r) => {
                    let m = &r.mean_std;
                    format!(
                        "{},{},{},{},{},{},{}",
                        m.precision.mean, m.precision.std, m.recall.mean, m.recall.std, m.f1.mean, m.f1.std, r.partial
                    )
                }
                None => ",,,,,,".into(),
            };
            let err = c.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
            out.push_str(&format!("{},{},{},{metrics},\"{err}\"\n", s.cot, s.summary, s.reflection));
        }
        out
    }
}

/// Plot data for the example-count sweep: one row per k.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std\n");
    for row in rows {
        let m = &row.report.mean_std;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.k, m.precision.mean, m.precision.std, m.recall.mean, m.recall.std, m.f1.mean, m.f1.std
        ));
    }
    out
}

/// Side-by-side P / R / F1 for several systems on one language.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<(String, SliceMetrics)>,
}

impl ComparisonTable {
    pub fn push(&mut self, name: impl Into<String>, metrics: SliceMetrics) {
        self.rows.push((name.into(), metrics));
    }

    pub fn render_table(&self) -> String {
        let mut out = String::from("Model | P / R / F1\n");
        for (name, m) in &self.rows {
            out.push_str(&format!("{name} | {}\n", triple_cell(m)));
        }
        out
    }
}
