//! Rendering of [`EvalReport`](crate::eval::EvalReport): a fixed-schema CSV
//! and an aligned text table. Rates stay in `[0, 1]` in the CSV; the text
//! table shows them as percentages (except ECE, reported raw).

use crate::eval::EvalReport;

/// Exact CSV header; tests and downstream tooling pin this schema.
pub const REPORT_CSV_HEADER: &str =
    "head,score,ood_set,auroc,aupr,tnr_at_tpr95,dtacc,accuracy,ece,temperature,status";

pub fn report_to_csv(report: &EvalReport) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for head in &report.heads {
        for row in &head.rows {
            let (auroc, aupr, tnr, dtacc, status) = match &row.metrics {
                Some(m) => (
                    format!("{:.6}", m.auroc),
                    format!("{:.6}", m.aupr),
                    format!("{:.6}", m.tnr_at_tpr95),
                    format!("{:.6}", m.dtacc),
                    "ok",
                ),
                None => (
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "unsupported",
                ),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{}\n",
                head.head,
                row.score,
                row.ood_set,
                auroc,
                aupr,
                tnr,
                dtacc,
                head.accuracy,
                head.ece,
                head.temperature,
                status
            ));
        }
    }
    out
}

pub fn report_to_text(report: &EvalReport) -> String {
    let mut out = String::new();
    for head in &report.heads {
        out.push_str(&format!(
            "head: {}   accuracy: {:.2}%   ece: {:.4}   temperature: {:.4}\n",
            head.head,
            head.accuracy * 100.0,
            head.ece,
            head.temperature
        ));
        let mut rows: Vec<[String; 6]> = vec![[
            "score".to_string(),
            "ood_set".to_string(),
            "AUROC%".to_string(),
            "AUPR%".to_string(),
            "TNR@TPR95%".to_string(),
            "DTACC%".to_string(),
        ]];
        for row in &head.rows {
            let cells = match &row.metrics {
                Some(m) => [
                    row.score.to_string(),
                    row.ood_set.clone(),
                    format!("{:.2}", m.auroc * 100.0),
                    format!("{:.2}", m.aupr * 100.0),
                    format!("{:.2}", m.tnr_at_tpr95 * 100.0),
                    format!("{:.2}", m.dtacc * 100.0),
                ],
                None => [
                    row.score.to_string(),
                    row.ood_set.clone(),
                    "-".to_string(),
                    "-".to_string(),
                    "-".to_string(),
                    "unsupported".to_string(),
                ],
            };
            rows.push(cells);
        }
        let mut widths = [0usize; 6];
        for row in &rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        for row in &rows {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, cell)| format!("{:width$}", cell, width = widths[i]))
                .collect();
            out.push_str("  ");
            out.push_str(&line.join("  "));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
