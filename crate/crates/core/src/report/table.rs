use std::fmt::Write as _;
use std::path::Path;

use super::GroupResult;
use crate::error::{Error, Result};
use crate::metrics::SummaryRow;

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "dice_init",
    "dice_final",
    "dice_nauc",
    "nsd_init",
    "nsd_final",
    "nsd_nauc",
    "nnoi",
    "nof_pct",
];

pub const CURVES_HEADER: [&str; 5] = ["task", "algorithm", "iteration", "median_dice", "median_nsd"];

/// Lower is better for the last two columns (nNoI, NoF).
const LOWER_IS_BETTER: [bool; 8] = [false, false, false, false, false, false, true, true];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub task: String,
    pub algorithm: String,
    /// Iteration count N shown as "Iter. N".
    pub budget: u32,
    pub row: SummaryRow,
}

impl SummaryLine {
    fn values(&self) -> [f64; 8] {
        let r = &self.row;
        [
            r.dice_init,
            r.dice_final,
            r.dice_nauc,
            r.nsd_init,
            r.nsd_final,
            r.nsd_nauc,
            r.nnoi,
            r.nof_pct,
        ]
    }
}

pub(super) fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// One line per group with at least one finished sample.
pub fn summary_lines(groups: &[GroupResult]) -> Result<Vec<SummaryLine>> {
    let mut out = Vec::new();
    for g in groups {
        if let Some(row) = g.summary()? {
            out.push(SummaryLine {
                task: g.task.clone(),
                algorithm: g.algorithm.clone(),
                budget: g.budget,
                row,
            });
        }
    }
    Ok(out)
}

/// Best-per-task flags for each line and column.
///
/// Every row attaining the best value is marked. A column where all rows of
/// a task share one value (with more than one row) marks nobody.
pub fn best_markers(lines: &[SummaryLine]) -> Vec<[bool; 8]> {
    let mut marks = vec![[false; 8]; lines.len()];
    let mut tasks: Vec<&str> = Vec::new();
    for l in lines {
        if !tasks.contains(&l.task.as_str()) {
            tasks.push(&l.task);
        }
    }
    for task in tasks {
        let rows: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].task == task).collect();
        for col in 0..8 {
            let vals: Vec<f64> = rows.iter().map(|&i| lines[i].values()[col]).collect();
            let best = if LOWER_IS_BETTER[col] {
                vals.iter().copied().fold(f64::INFINITY, f64::min)
            } else {
                vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            if rows.len() > 1 && vals.iter().all(|&v| v == best) {
                continue;
            }
            for (&i, &v) in rows.iter().zip(&vals) {
                marks[i][col] = v == best;
            }
        }
    }
    marks
}

/// Full-precision summary table with a `best` column listing the columns in
/// which the row is best for its task.
pub fn emit_summary(lines: &[SummaryLine], path: &Path) -> Result<()> {
    if lines.is_empty() {
        return Err(Error::EmptyInput("no summary rows"));
    }
    let marks = best_markers(lines);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["task", "algorithm"];
    header.extend(SUMMARY_COLUMNS);
    header.push("best");
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (l, m) in lines.iter().zip(&marks) {
        let mut rec = vec![l.task.clone(), l.algorithm.clone()];
        rec.extend(l.values().iter().map(|v| v.to_string()));
        let best: Vec<&str> = SUMMARY_COLUMNS.iter().zip(m).filter(|(_, &b)| b).map(|(c, _)| *c).collect();
        rec.push(best.join(";"));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Markdown summary table: task shown on its first row, three decimals for
/// metrics, one for NoF, best in bold.
pub fn render_summary_markdown(lines: &[SummaryLine]) -> String {
    let marks = best_markers(lines);
    let iter_label = match lines.first() {
        Some(first) if lines.iter().all(|l| l.budget == first.budget) => format!("Iter. {}", first.budget),
        _ => "Iter. N".to_string(),
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "| Task | Algorithm | Dice Init | Dice {it} | Dice nAUC | NSD Init | NSD {it} | NSD nAUC | nNoI | NoF |",
        it = iter_label
    );
    s.push_str("|---|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    let mut prev_task: Option<&str> = None;
    for (l, m) in lines.iter().zip(&marks) {
        let task = if prev_task == Some(l.task.as_str()) { "" } else { l.task.as_str() };
        prev_task = Some(&l.task);
        let _ = write!(s, "| {task} | {} |", l.algorithm);
        for (col, v) in l.values().iter().enumerate() {
            let text = if col == 7 { format!("{v:.1}") } else { format!("{v:.3}") };
            if m[col] {
                let _ = write!(s, " **{text}** |");
            } else {
                let _ = write!(s, " {text} |");
            }
        }
        s.push('\n');
    }
    s
}

/// Per-iteration median curves, `budget + 1` rows per group.
pub fn emit_curves(groups: &[GroupResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CURVES_HEADER).map_err(|e| csv_err(path, e))?;
    let mut rows = 0;
    for g in groups {
        let Some(curve) = g.median_curve()? else {
            continue;
        };
        for (it, (d, n)) in curve.dice.iter().zip(&curve.nsd).enumerate() {
            w.write_record([
                g.task.clone(),
                g.algorithm.clone(),
                it.to_string(),
                d.to_string(),
                n.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(Error::EmptyInput("no curves to emit"));
    }
    w.flush().map_err(|e| Error::io(path, e))
}
