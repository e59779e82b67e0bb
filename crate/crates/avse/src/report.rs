//! Evaluation table, emitted as CSV and Markdown from one structure.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Noisy,
    Baseline,
    RlScalar,
    RlInterpretable,
}

impl Method {
    /// Fixed row order.
    pub const ALL: [Method; 4] = [Method::Noisy, Method::Baseline, Method::RlScalar, Method::RlInterpretable];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Noisy => "noisy",
            Method::Baseline => "baseline",
            Method::RlScalar => "rl_scalar",
            Method::RlInterpretable => "rl_interpretable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowMetrics {
    pub scenes: usize,
    pub mean_si_snr_db: f64,
    pub mean_stoi: f64,
    pub mean_sentiment: f64,
    pub mean_seg_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RowStatus {
    Present(RowMetrics),
    Absent { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Method,
    #[serde(flatten)]
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
}

const HEADER: [&str; 7] = ["method", "status", "scenes", "mean_si_snr_db", "mean_stoi", "mean_sentiment", "mean_seg_snr_db"];

impl EvalTable {
    pub fn row(&self, m: Method) -> Option<&RowMetrics> {
        self.rows.iter().find(|r| r.method == m).and_then(|r| match &r.status {
            RowStatus::Present(x) => Some(x),
            RowStatus::Absent { .. } => None,
        })
    }

    fn cells(&self) -> Vec<[String; 7]> {
        self.rows
            .iter()
            .map(|r| match &r.status {
                RowStatus::Present(m) => [
                    r.method.as_str().into(),
                    "present".into(),
                    m.scenes.to_string(),
                    m.mean_si_snr_db.to_string(),
                    m.mean_stoi.to_string(),
                    m.mean_sentiment.to_string(),
                    m.mean_seg_snr_db.to_string(),
                ],
                RowStatus::Absent { .. } => {
                    let a = || "absent".to_string();
                    [r.method.as_str().into(), a(), a(), a(), a(), a(), a()]
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for row in self.cells() {
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| Method | Scenes | SI-SNR (dB) | STOI | Sentiment | Seg-SNR (dB) |");
        let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|");
        for r in &self.rows {
            match &r.status {
                RowStatus::Present(m) => {
                    let _ = writeln!(
                        s,
                        "| {} | {} | {:.2} | {:.3} | {:.3} | {:.2} |",
                        r.method.as_str(),
                        m.scenes,
                        m.mean_si_snr_db,
                        m.mean_stoi,
                        m.mean_sentiment,
                        m.mean_seg_snr_db
                    );
                }
                RowStatus::Absent { reason } => {
                    let _ = writeln!(s, "| {} | absent | absent | absent | absent | absent |", r.method.as_str());
                    let _ = writeln!(s, "|  | _{reason}_ | | | | |");
                }
            }
        }
        s
    }

    pub fn write(&self, csv_path: &Path, md_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()).map_err(|e| CliError::io(csv_path, e))?;
        std::fs::write(md_path, self.to_markdown()).map_err(|e| CliError::io(md_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EvalTable {
        let m = RowMetrics { scenes: 2, mean_si_snr_db: 1.5, mean_stoi: 0.5, mean_sentiment: 2.0, mean_seg_snr_db: 0.25 };
        EvalTable {
            rows: vec![
                EvalRow { method: Method::Noisy, status: RowStatus::Present(m) },
                EvalRow { method: Method::Baseline, status: RowStatus::Present(m) },
                EvalRow { method: Method::RlScalar, status: RowStatus::Absent { reason: "no checkpoint".into() } },
                EvalRow { method: Method::RlInterpretable, status: RowStatus::Present(m) },
            ],
        }
    }

    #[test]
    fn csv_marks_absent_rows() {
        let csv = table().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,status,scenes,mean_si_snr_db,mean_stoi,mean_sentiment,mean_seg_snr_db");
        assert_eq!(lines[1], "noisy,present,2,1.5,0.5,2,0.25");
        assert_eq!(lines[3], "rl_scalar,absent,absent,absent,absent,absent,absent");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn markdown_keeps_row_order() {
        let md = table().to_markdown();
        let order: Vec<usize> = Method::ALL.iter().map(|m| md.find(&format!("| {} |", m.as_str())).unwrap()).collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
        assert!(md.contains("no checkpoint"));
    }
}
