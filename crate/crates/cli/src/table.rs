//! Benchmark-table rendering with 0.1-nat quantization.

use std::fmt::Write as _;

use scoremi::tasks::TaskSpec;
use serde::Serialize;

use crate::records::ResultRecord;
use crate::CliError;

/// Rounds to 0.1 nats.
pub fn quantize(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// `"0.8 (−)"` when the quantized mean falls below the quantized GT,
/// `"(+)"` above, nothing when they agree.
pub fn render_cell(mean: f64, gt: f64) -> String {
    let (q, g) = (quantize(mean), quantize(gt));
    let marker = if q < g {
        " (−)"
    } else if q > g {
        " (+)"
    } else {
        ""
    };
    format!("{q:.1}{marker}")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableCell {
    pub task: String,
    pub method: String,
    pub sigma: Option<f64>,
    pub n_seeds: usize,
    pub mean: f64,
    /// Standard deviation across seeds.
    pub seed_std: f64,
    pub gt: f64,
    pub rendered: String,
}

pub struct Table {
    pub text: String,
    pub cells: Vec<TableCell>,
}

fn row_label(method: &str, sigma: Option<f64>) -> String {
    match sigma {
        Some(s) => format!("{method} σ={s}"),
        None => method.to_string(),
    }
}

/// Methods become rows (in record order), tasks columns in `tasks` order.
pub fn render_table(records: &[ResultRecord], tasks: &[TaskSpec]) -> Result<Table, CliError> {
    if records.is_empty() {
        return Err(CliError::NoRecords);
    }
    let columns: Vec<&TaskSpec> = tasks.iter().filter(|t| records.iter().any(|r| r.task == t.id)).collect();
    if let Some(r) = records.iter().find(|r| !tasks.iter().any(|t| t.id == r.task)) {
        return Err(CliError::Config(format!("record for unknown task {:?}", r.task)));
    }
    let mut rows: Vec<(String, Option<f64>)> = Vec::new();
    for r in records {
        let key = (r.method.clone(), r.sigma);
        if !rows.iter().any(|k| k.0 == key.0 && k.1.map(f64::to_bits) == key.1.map(f64::to_bits)) {
            rows.push(key);
        }
    }

    let mut cells = Vec::new();
    let mut grid: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Method".to_string()];
    header.extend(columns.iter().map(|t| t.name.clone()));
    let mut gt_row = vec!["GT".to_string()];
    for t in &columns {
        let gt = records.iter().find(|r| r.task == t.id).map(|r| r.gt).unwrap_or(f64::NAN);
        gt_row.push(format!("{:.1}", quantize(gt)));
    }
    grid.push(header);
    grid.push(gt_row);
    for (method, sigma) in &rows {
        let mut line = vec![row_label(method, *sigma)];
        for t in &columns {
            let sel: Vec<&ResultRecord> = records
                .iter()
                .filter(|r| {
                    r.task == t.id && &r.method == method && r.sigma.map(f64::to_bits) == sigma.map(f64::to_bits)
                })
                .collect();
            let vals: Vec<f64> = sel.iter().filter(|r| r.is_ok()).filter_map(|r| r.estimate).collect();
            if vals.is_empty() {
                line.push(if sel.is_empty() { "-".into() } else { "fail".into() });
                continue;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let seed_std = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let gt = sel[0].gt;
            let rendered = render_cell(mean, gt);
            line.push(rendered.clone());
            cells.push(TableCell {
                task: t.id.clone(),
                method: method.clone(),
                sigma: *sigma,
                n_seeds: vals.len(),
                mean,
                seed_std,
                gt,
                rendered,
            });
        }
        grid.push(line);
    }

    let ncol = grid[0].len();
    let widths: Vec<usize> = (0..ncol)
        .map(|j| grid.iter().map(|row| row[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for (i, row) in grid.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, w))| {
                let pad = w - c.chars().count();
                if j == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(text, "{}", line.join(" | ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(text, "{}", rule.join("-+-"));
        }
    }
    Ok(Table { text, cells })
}

pub fn write_table_csv(path: &std::path::Path, cells: &[TableCell]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush().map_err(|e| CliError::Io(path.display().to_string(), e))
}
