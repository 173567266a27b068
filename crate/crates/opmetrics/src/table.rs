//! Per-object complexity and error table with an averages row.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::patterns::PatternSet;
use crate::report::{analyze_session, ScriptReport};

pub const CSV_HEADER: [&str; 5] = ["name", "complex_with_rag", "complex_without_rag", "errors_with_rag", "errors_without_rag"];
const TEXT_HEADER: [&str; 5] = ["", "Complex w/ RAG", "Complex w/o RAG", "Errors w/ RAG", "Errors w/o RAG"];
pub const AVERAGE_ROW_NAME: &str = "Avg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RagLabel {
    WithRag,
    WithoutRag,
}

/// One CLI input: `[NAME[+rag|-rag]=]PATH`. Unlabelled inputs count as
/// generated with retrieval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSpec {
    pub name: Option<String>,
    pub label: RagLabel,
    pub path: PathBuf,
}

impl FromStr for InputSpec {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, path) = match s.split_once('=') {
            Some((h, p)) => (Some(h), p),
            None => (None, s),
        };
        if path.is_empty() {
            return Err(MetricsError::InputSpec(s.to_owned()));
        }
        let (name, label) = match head {
            None => (None, RagLabel::WithRag),
            Some(h) => {
                let (name, label) = if let Some(n) = h.strip_suffix("+rag") {
                    (n, RagLabel::WithRag)
                } else if let Some(n) = h.strip_suffix("-rag") {
                    (n, RagLabel::WithoutRag)
                } else {
                    (h, RagLabel::WithRag)
                };
                (Some(name.to_owned()).filter(|n| !n.is_empty()), label)
            }
        };
        Ok(InputSpec { name, label, path: PathBuf::from(path) })
    }
}

impl InputSpec {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.path.display().to_string())
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub name: String,
    pub complex_with_rag: Option<usize>,
    pub complex_without_rag: Option<usize>,
    pub errors_with_rag: Option<usize>,
    pub errors_without_rag: Option<usize>,
}

impl MetricsRow {
    fn cells(&self) -> [Option<usize>; 4] {
        [self.complex_with_rag, self.complex_without_rag, self.errors_with_rag, self.errors_without_rag]
    }
}

/// Column means over the rows that have a value in that column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub complex_with_rag: Option<f64>,
    pub complex_without_rag: Option<f64>,
    pub errors_with_rag: Option<f64>,
    pub errors_without_rag: Option<f64>,
}

impl Averages {
    fn cells(&self) -> [Option<f64>; 4] {
        [self.complex_with_rag, self.complex_without_rag, self.errors_with_rag, self.errors_without_rag]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
    /// Absent when there are no rows.
    pub averages: Option<Averages>,
    pub reports: Vec<ScriptReport>,
    pub warnings: Vec<String>,
}

fn load_report(spec: &InputSpec, patterns: &PatternSet) -> Result<ScriptReport, MetricsError> {
    let id = spec.path.display().to_string();
    if spec.path.is_dir() {
        analyze_session(&spec.path, &id, patterns)
    } else {
        let source = std::fs::read_to_string(&spec.path).map_err(|e| MetricsError::io(&spec.path, e))?;
        Ok(ScriptReport::from_source(id, &source, patterns))
    }
}

/// Builds the table from scripts (`.py` files) and session directories.
/// Inputs sharing a name fill the with/without-retrieval columns of one row.
pub fn aggregate(inputs: &[InputSpec], patterns: &PatternSet) -> MetricsTable {
    let mut table = MetricsTable::default();
    for spec in inputs {
        let name = spec.display_name();
        let idx = match table.rows.iter().position(|r| r.name == name) {
            Some(i) => i,
            None => {
                table.rows.push(MetricsRow { name: name.clone(), ..MetricsRow::default() });
                table.rows.len() - 1
            }
        };
        let report = match load_report(spec, patterns) {
            Ok(r) => r,
            Err(e) => {
                table.warnings.push(format!("{name}: skipped unreadable input: {e}"));
                continue;
            }
        };
        let row = &mut table.rows[idx];
        let (complex, errors) = match spec.label {
            RagLabel::WithRag => (&mut row.complex_with_rag, &mut row.errors_with_rag),
            RagLabel::WithoutRag => (&mut row.complex_without_rag, &mut row.errors_without_rag),
        };
        if complex.is_some() {
            table.warnings.push(format!("{name}: duplicate input {} ignored", spec.path.display()));
            continue;
        }
        *complex = Some(report.complex_ops.len());
        *errors = report.error_count;
        table.reports.push(report);
    }
    if !table.rows.is_empty() {
        let mean = |col: usize| {
            let vals: Vec<f64> = table.rows.iter().filter_map(|r| r.cells()[col]).map(|v| v as f64).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        table.averages = Some(Averages {
            complex_with_rag: mean(0),
            complex_without_rag: mean(1),
            errors_with_rag: mean(2),
            errors_without_rag: mean(3),
        });
    }
    table
}

/// At most two decimals, trailing zeros dropped: 1.5, 2, 5.44.
pub fn format_average(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_owned() } else { s.to_owned() }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl MetricsTable {
    fn body(&self) -> Vec<[String; 5]> {
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut lines: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                let c = r.cells();
                [r.name.clone(), opt(c[0]), opt(c[1]), opt(c[2]), opt(c[3])]
            })
            .collect();
        if let Some(avg) = &self.averages {
            let c = avg.cells().map(|v| v.map(format_average).unwrap_or_default());
            let [a, b, d, e] = c;
            lines.push([AVERAGE_ROW_NAME.to_owned(), a, b, d, e]);
        }
        lines
    }

    pub fn to_csv(&self) -> String {
        let mut out = CSV_HEADER.join(",");
        out.push('\n');
        for line in self.body() {
            let fields: Vec<String> = line.iter().map(|f| csv_field(f)).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Fixed-width rendering with the averages row under a rule.
    pub fn to_text(&self) -> String {
        let body = self.body();
        let mut widths: [usize; 5] = TEXT_HEADER.map(|h| h.chars().count());
        for line in &body {
            for (w, cell) in widths.iter_mut().zip(line) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let render = |cells: &[String; 5]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[0]) } else { format!("{c:>w$}", w = widths[i]) })
                .collect();
            parts.join("  ").trim_end().to_owned() + "\n"
        };
        let mut out = render(&TEXT_HEADER.map(str::to_owned));
        let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)) + "\n";
        out.push_str(&rule);
        let data_rows = self.rows.len();
        for (i, line) in body.iter().enumerate() {
            if i == data_rows {
                out.push_str(&rule);
            }
            out.push_str(&render(line));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        std::fs::write(path, self.to_csv()).map_err(|e| MetricsError::io(path, e))
    }
}
