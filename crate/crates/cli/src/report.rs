//! Result tables across runs.

use std::fmt::Write as _;
use std::path::Path;

use nssafe::trainer::Mode;
use serde::{Deserialize, Serialize};

use crate::commands::{Metrics, Summary};
use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    #[serde(rename = "Benchmark")]
    pub benchmark: String,
    #[serde(rename = "Data Size")]
    pub data_size: Option<usize>,
    #[serde(rename = "Approach")]
    pub approach: String,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "C#")]
    pub c_sharp: Option<f64>,
    #[serde(rename = "Test Data Loss")]
    pub test_data_loss: Option<f64>,
    #[serde(rename = "Provably Safe Portion")]
    pub portion: f64,
}

pub const COLUMNS: [&str; 7] = [
    "Benchmark",
    "Data Size",
    "Approach",
    "Q",
    "C#",
    "Test Data Loss",
    "Provably Safe Portion",
];

pub fn approach_name(m: Mode) -> &'static str {
    match m {
        Mode::Dse => "DSE",
        Mode::DiffaiPlus => "DiffAI+",
        Mode::Ablation => "Ablation",
    }
}

fn read<D: for<'de> Deserialize<'de>>(path: &Path) -> Option<D> {
    serde_json::from_str(&std::fs::read_to_string(path).ok()?).ok()
}

/// One row from a completed run directory, or `None` with a warning.
fn run_row(dir: &Path) -> Option<Row> {
    let (Some(run), Some(summary), Some(metrics)) = (
        read::<RunConfig>(&dir.join("run.json")),
        read::<Summary>(&dir.join("summary.json")),
        read::<Metrics>(&dir.join("metrics.json")),
    ) else {
        eprintln!("warning: skipping incomplete run {}", dir.display());
        return None;
    };
    let has_data = metrics.test_data_loss.is_some();
    Some(Row {
        benchmark: run.benchmark,
        data_size: has_data.then_some(run.data.size),
        approach: approach_name(run.mode).to_string(),
        q: summary.q_train,
        c_sharp: summary.c_sharp_train,
        test_data_loss: metrics.test_data_loss,
        portion: metrics.provably_safe_portion,
    })
}

/// Rows from run directories and previously written report CSVs.
pub fn collect(inputs: &[impl AsRef<Path>]) -> Result<Vec<Row>, CliError> {
    let mut rows = Vec::new();
    for input in inputs {
        let p = input.as_ref();
        if p.is_dir() {
            rows.extend(run_row(p));
        } else if p.extension().is_some_and(|e| e == "csv") {
            let mut r = csv::Reader::from_path(p).map_err(|e| CliError::io(format!("cannot read {}: {e}", p.display())))?;
            for row in r.deserialize() {
                rows.push(row.map_err(|e| CliError::io(format!("bad row in {}: {e}", p.display())))?);
            }
        } else {
            eprintln!("warning: skipping {}: not a run directory or report CSV", p.display());
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[Row]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(COLUMNS).map_err(|e| CliError::io(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::io(e.to_string()))
}

pub fn to_markdown(rows: &[Row]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let mut s = format!("| {} |\n", COLUMNS.join(" | "));
    s.push_str(&format!("|{}\n", "---|".repeat(COLUMNS.len())));
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.4} | {} | {} | {:.4} |",
            r.benchmark,
            r.data_size.map_or_else(|| "-".to_string(), |d| d.to_string()),
            r.approach,
            r.q,
            opt(r.c_sharp),
            opt(r.test_data_loss),
            r.portion
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(approach: &str) -> Row {
        Row {
            benchmark: "thermostat".into(),
            data_size: Some(200),
            approach: approach.into(),
            q: 0.123456789,
            c_sharp: None,
            test_data_loss: Some(0.25),
            portion: 0.99,
        }
    }

    #[test]
    fn column_order_and_round_trip() {
        let rows = vec![row("DSE"), row("Ablation")];
        let text = to_csv(&rows).unwrap();
        assert!(text.starts_with("Benchmark,Data Size,Approach,Q,C#,Test Data Loss,Provably Safe Portion\n"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        std::fs::write(&path, &text).unwrap();
        let back = collect(&[&path]).unwrap();
        assert_eq!(back, rows);
        assert_eq!(to_csv(&back).unwrap(), text);
        let md = to_markdown(&rows);
        assert_eq!(md.lines().count(), 4);
        assert!(md.starts_with("| Benchmark | Data Size | Approach | Q | C# | Test Data Loss | Provably Safe Portion |"));
    }
}
