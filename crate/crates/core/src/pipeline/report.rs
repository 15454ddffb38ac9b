//! Report rendering: JSON, CSV and a plain-text results table.

use serde::{Deserialize, Serialize};

use super::evaluate::{MetricsReport, RmseEntry};
use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "text" | "table" | "text-table" => Ok(Self::Text),
            _ => Err(PipelineError::Config(format!("unknown report format {s:?}"))),
        }
    }
}

pub const CSV_HEADER: &str = "method,accuracy,train_s,val_s,test_s";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn row_name(r: &MetricsReport) -> String {
    if r.method.is_empty() {
        r.group.clone()
    } else {
        format!("{} {}", r.group, r.method)
    }
}

/// Render reports. JSON is a single object for one report and an array
/// otherwise; CSV and text give one row per report.
pub fn emit_report(reports: &[MetricsReport], format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut s = if reports.len() == 1 {
                serde_json::to_string_pretty(&reports[0])
            } else {
                serde_json::to_string_pretty(reports)
            }
            .expect("reports serialize");
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::Csv => {
            let mut s = format!("{CSV_HEADER}\n");
            for r in reports {
                s.push_str(&format!(
                    "{},{:.4},{:.6},{:.6},{:.6}\n",
                    csv_field(&row_name(r)),
                    r.accuracy,
                    r.timing.train_s,
                    r.timing.val_s,
                    r.timing.test_s
                ));
            }
            s.into_bytes()
        }
        ReportFormat::Text => text_table(reports).into_bytes(),
    }
}

/// Parse JSON produced by [`emit_report`].
pub fn parse_json_reports(bytes: &[u8]) -> Result<Vec<MetricsReport>, PipelineError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| PipelineError::Config(e.to_string()))?;
    let parsed = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|r| vec![r])
    };
    parsed.map_err(|e| PipelineError::Config(e.to_string()))
}

/// Rows grouped under their scenario, with accuracy and the three
/// wall-time columns.
pub fn text_table(reports: &[MetricsReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.method.len() + 2)
        .chain(reports.iter().map(|r| r.group.len()))
        .max()
        .unwrap_or(0)
        .max(6);
    let mut s = format!(
        "{:<width$}  {:>12}  {:>10}  {:>14}  {:>10}\n",
        "Method", "Accuracy (%)", "Train (s)", "Validation (s)", "Test (s)"
    );
    s.push_str(&format!("{}\n", "-".repeat(width + 56)));
    let mut group: Option<&str> = None;
    for r in reports {
        if group != Some(r.group.as_str()) {
            s.push_str(&format!("{}\n", r.group));
            group = Some(&r.group);
        }
        s.push_str(&format!(
            "{:<width$}  {:>12.2}  {:>10.2}  {:>14.2}  {:>10.3}\n",
            format!("  {}", r.method),
            r.accuracy,
            r.timing.train_s,
            r.timing.val_s,
            r.timing.test_s
        ));
    }
    s
}

/// Per-band RMSE of the approximated sub-bands, one line each.
pub fn rmse_table(entries: &[RmseEntry]) -> String {
    let mut s = String::from("level  band  subband        rmse\n");
    for e in entries {
        s.push_str(&format!("{:>5} {:>5}  {:>7} {:>11.4}\n", e.level, e.band, e.subband, e.rmse));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Scenario};
    use crate::pipeline::evaluate::{method_label, ClassAccuracy, Timing};

    fn report(cfg: ModelConfig, accuracy: f64, test_s: f64) -> MetricsReport {
        let (group, method) = method_label(&cfg);
        MetricsReport {
            group,
            method,
            split: "test".into(),
            accuracy,
            correct: 3,
            total: 4,
            per_class: vec![ClassAccuracy {
                class: "a".into(),
                correct: 3,
                total: 4,
                accuracy: 75.0,
            }],
            rmse: vec![RmseEntry {
                level: 1,
                band: 0,
                subband: "LL".into(),
                rmse: 0.1 + 0.2,
            }],
            timing: Timing {
                train_s: 1.5,
                val_s: 0.25,
                test_s,
                decode_s: test_s / 2.0,
            },
            bytes_read: 10,
            bytes_expected: 10,
            bytes_total: 40,
            epochs: 3,
            batch_size: 8,
            seed: 1,
            model: cfg,
        }
    }

    fn rows() -> Vec<MetricsReport> {
        vec![
            report(ModelConfig::default(), 75.0, 0.1),
            report(
                ModelConfig {
                    scenario: Scenario::Partial,
                    approx_layers: 1,
                    ..ModelConfig::default()
                },
                80.0,
                0.2,
            ),
        ]
    }

    #[test]
    fn json_roundtrip() {
        let r = rows();
        assert_eq!(parse_json_reports(&emit_report(&r, ReportFormat::Json)).unwrap(), r);
        assert_eq!(parse_json_reports(&emit_report(&r[..1], ReportFormat::Json)).unwrap(), r[..1]);
    }

    #[test]
    fn csv_layout() {
        let text = String::from_utf8(emit_report(&rows(), ReportFormat::Csv)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,accuracy,train_s,val_s,test_s");
        assert_eq!(lines[1], "Scenario 1 (32x32) -> (64x64) -> (128x128),75.0000,1.500000,0.250000,0.100000");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn table_groups_rows() {
        let text = text_table(&rows());
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("Method"));
        assert!(lines[0].contains("Accuracy (%)") && lines[0].contains("Validation (s)"));
        assert_eq!(lines[2], "Scenario 1");
        assert!(lines[3].starts_with("  (32x32) -> (64x64) -> (128x128)"));
        assert_eq!(lines[4], "Scenario 2");
        assert!(lines[5].starts_with("  (64x64) -> (128x128)"));
    }
}
