use super::{HarnessError, PuzzleRecord, SolveReport};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(HarnessError::BadArgument(format!("unknown report format {other:?}"))),
        }
    }
}

/// The summary row of a CSV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub dataset: String,
    pub total: usize,
    pub solved: usize,
    pub solve_rate: f64,
    pub samples_per_puzzle: usize,
    pub seed: u64,
}

impl From<&SolveReport> for Summary {
    fn from(r: &SolveReport) -> Self {
        Summary {
            method: r.method.clone(),
            dataset: r.dataset.clone(),
            total: r.total,
            solved: r.solved,
            solve_rate: r.solve_rate,
            samples_per_puzzle: r.samples_per_puzzle,
            seed: r.seed,
        }
    }
}

fn csv_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Report(e.to_string())
}

/// Summary header and row, then the per-puzzle header and one row per record.
pub fn report_to_csv(report: &SolveReport) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    w.serialize(Summary::from(report)).map_err(csv_err)?;
    w.write_record(["puzzle_hash", "solved", "violations", "wall_ms"]).map_err(csv_err)?;
    for r in &report.records {
        let wall = r.wall_ms.map(|ms| format!("{ms:.3}")).unwrap_or_default();
        w.write_record([r.puzzle_hash.as_str(), &r.solved.to_string(), &r.violations.to_string(), &wall])
            .map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

pub fn emit_report(report: &SolveReport, format: ReportFormat, path: &Path) -> Result<(), HarnessError> {
    let text = match format {
        ReportFormat::Csv => report_to_csv(report)?,
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(csv_err)?;
            s.push('\n');
            s
        }
    };
    std::fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Reads the summary row back from a CSV report.
pub fn read_csv_summary(text: &str) -> Result<Summary, HarnessError> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    r.deserialize::<Summary>()
        .next()
        .ok_or_else(|| HarnessError::Report("missing summary row".into()))?
        .map_err(csv_err)
}

/// Per-puzzle rows of a CSV report.
pub fn read_csv_records(text: &str) -> Result<Vec<PuzzleRecord>, HarnessError> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in r.records().skip(3) {
        let row = row.map_err(csv_err)?;
        let field = |i: usize| row.get(i).ok_or_else(|| csv_err(format!("short row {row:?}")));
        let wall = field(3)?;
        out.push(PuzzleRecord {
            puzzle_hash: field(0)?.to_string(),
            solved: field(1)?.parse().map_err(csv_err)?,
            violations: field(2)?.parse().map_err(csv_err)?,
            wall_ms: if wall.is_empty() { None } else { Some(wall.parse().map_err(csv_err)?) },
        });
    }
    Ok(out)
}

/// Two-column text table of solve rates in percent.
pub fn render_table(rows: &[(String, f64)]) -> String {
    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max("method".len());
    let mut out = format!("{:<width$}  solve rate\n", "method");
    for (method, rate) in rows {
        out.push_str(&format!("{method:<width$}  {:.1}%\n", rate * 100.0));
    }
    out
}
