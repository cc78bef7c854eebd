//! Plain-text result tables.
//!
//! Every experiment renders to the same pipe-delimited aligned format, and
//! every table parses back losslessly, so downstream tooling can diff and
//! recombine results without touching JSON. Timings never appear in
//! tables; identical inputs emit identical bytes.

use thiserror::Error;

use crate::metrics::{MetricSummary, ScoreMeans};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("table has no header line")]
    Empty,
    #[error("row {row} has {found} cells, header has {expected}")]
    Shape {
        row: usize,
        found: usize,
        expected: usize,
    },
}

/// Marker for a value that does not exist (empty group, inapplicable cell).
pub const ABSENT: &str = "-";

/// A score fraction as a percentage with two decimals.
pub fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

/// [`pct`] over an optional mean, [`ABSENT`] when the group was empty.
pub fn pct_opt(means: Option<&ScoreMeans>, pick: impl Fn(&ScoreMeans) -> f64) -> String {
    match means {
        Some(m) => pct(pick(m)),
        None => ABSENT.to_string(),
    }
}

/// A header line plus rows, all cells plain strings. Cells must not
/// contain `|` or newlines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Table {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width mismatch");
        self.rows.push(row);
    }

    /// Renders with columns padded to their widest cell, cells joined by
    /// ` | `, one trailing newline.
    pub fn emit(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|c| c.len()).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                debug_assert!(
                    !cell.contains('|') && !cell.contains('\n'),
                    "cell {cell:?} breaks the table format"
                );
                if i < widths.len() && cell.len() > widths[i] {
                    widths[i] = cell.len();
                }
            }
        }
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(self.rows.iter()) {
            let padded: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(i, cell)| format!("{:width$}", cell, width = widths[i]))
                .collect();
            out.push_str(padded.join(" | ").trim_end());
            out.push('\n');
        }
        out
    }

    /// Parses text produced by [`Table::emit`]. Blank lines are skipped;
    /// padding is discarded.
    pub fn parse(text: &str) -> Result<Table, ReportError> {
        let mut lines = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.trim().is_empty());
        let header: Vec<String> = match lines.next() {
            Some(line) => split_cells(line),
            None => return Err(ReportError::Empty),
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells = split_cells(line);
            if cells.len() != header.len() {
                return Err(ReportError::Shape {
                    row: i + 1,
                    found: cells.len(),
                    expected: header.len(),
                });
            }
            rows.push(cells);
        }
        Ok(Table { header, rows })
    }
}

fn split_cells(line: &str) -> Vec<String> {
    line.split('|').map(|c| c.trim().to_string()).collect()
}

/// The six standard metric rows (answer, supporting facts, joint; EM and
/// F1 each) extracted from one summary, as percent strings.
pub fn metric_rows(summary: &MetricSummary) -> [(&'static str, String); 6] {
    [
        ("Answer EM", pct_opt(summary.answer.as_ref(), |m| m.em)),
        ("Answer F1", pct_opt(summary.answer.as_ref(), |m| m.f1)),
        ("SF EM", pct_opt(summary.sp.as_ref(), |m| m.em)),
        ("SF F1", pct_opt(summary.sp.as_ref(), |m| m.f1)),
        ("Joint EM", pct_opt(summary.joint.as_ref(), |m| m.em)),
        ("Joint F1", pct_opt(summary.joint.as_ref(), |m| m.f1)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut table = Table::new(vec![
            "Scenario".to_string(),
            "Answer EM".to_string(),
            "Answer F1".to_string(),
        ]);
        table.push(vec!["S2".to_string(), "60.00".to_string(), "72.50".to_string()]);
        table.push(vec![
            "S3".to_string(),
            "100.00".to_string(),
            ABSENT.to_string(),
        ]);
        table
    }

    #[test]
    fn emit_is_aligned_and_stable() {
        let text = sample().emit();
        assert_eq!(
            text,
            "Scenario | Answer EM | Answer F1\n\
             S2       | 60.00     | 72.50\n\
             S3       | 100.00    | -\n"
        );
        assert_eq!(sample().emit(), text);
    }

    #[test]
    fn emit_parse_round_trips() {
        let table = sample();
        let parsed = Table::parse(&table.emit()).unwrap();
        assert_eq!(parsed, table);
        assert_eq!(parsed.emit(), table.emit());
    }

    #[test]
    fn parse_rejects_ragged_rows() {
        let err = Table::parse("A | B\n1 | 2 | 3\n").unwrap_err();
        assert_eq!(
            err,
            ReportError::Shape {
                row: 1,
                found: 3,
                expected: 2
            }
        );
        assert_eq!(Table::parse("\n\n"), Err(ReportError::Empty));
    }

    #[test]
    fn pct_formats_two_decimals() {
        assert_eq!(pct(0.5), "50.00");
        assert_eq!(pct(2.0 / 3.0), "66.67");
        assert_eq!(pct(1.0), "100.00");
        assert_eq!(pct_opt(None, |m| m.em), "-");
    }
}
