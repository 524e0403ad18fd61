//! Markdown tables and plot-ready data series.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{GroupComparison, ModelComparison, RankedList};
use crate::lq::LqMatrix;
use crate::scores::{ScoreStore, Task};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{shape} tables cannot render {data} data")]
    ShapeMismatch { shape: TableShape, data: &'static str },
    #[error("precision must be at least 1")]
    InvalidPrecision,
    #[error("plot series is empty")]
    EmptySeries,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TableShape {
    /// One pair, one row per model.
    PairModelComparison,
    /// One source, one row per target.
    SourceToTargets,
    /// Few-shot scores, targets by models.
    FewShotAccuracy,
    /// Targets by sources.
    ZeroFewMatrix,
    GroupBars,
    SourceAverages,
}

impl fmt::Display for TableShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Scale {
    #[default]
    Fraction,
    Percent,
}

impl Scale {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Scale::Fraction => v,
            Scale::Percent => v * 100.0,
        }
    }

    pub fn default_precision(self) -> usize {
        match self {
            Scale::Fraction => 3,
            Scale::Percent => 1,
        }
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fraction" => Ok(Scale::Fraction),
            "percent" => Ok(Scale::Percent),
            other => Err(format!("unknown scale `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TableSpec {
    pub shape: TableShape,
    pub scale: Scale,
    pub precision: usize,
}

impl TableSpec {
    pub fn new(shape: TableShape, scale: Scale) -> Self {
        Self {
            shape,
            scale,
            precision: scale.default_precision(),
        }
    }

    pub fn with_precision(mut self, precision: usize) -> Self {
        self.precision = precision;
        self
    }
}

/// Labelled rows of optional numbers under labelled columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Grid {
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl Grid {
    /// LQ values with targets as rows and sources as columns.
    pub fn from_matrix(matrix: &LqMatrix) -> Self {
        Self {
            corner: "target \\ source".into(),
            columns: matrix.source_set.clone(),
            rows: matrix
                .target_set
                .iter()
                .map(|t| {
                    let cells = matrix
                        .source_set
                        .iter()
                        .map(|s| matrix.get(s, t).map(|r| r.lq))
                        .collect();
                    (t.clone(), cells)
                })
                .collect(),
        }
    }

    /// Raw scores at `steps` with targets as rows and sources as columns.
    pub fn scores<S: AsRef<str>, T: AsRef<str>>(
        store: &ScoreStore,
        model: &str,
        task: Task,
        sources: &[S],
        targets: &[T],
        steps: u32,
    ) -> Self {
        Self {
            corner: "target \\ source".into(),
            columns: sources.iter().map(|s| s.as_ref().to_owned()).collect(),
            rows: targets
                .iter()
                .map(|t| {
                    let cells = sources
                        .iter()
                        .map(|s| store.get_score(model, task, s.as_ref(), t.as_ref(), steps))
                        .collect();
                    (t.as_ref().to_owned(), cells)
                })
                .collect(),
        }
    }

    /// Scores at `steps` from one source, targets as rows and models as columns.
    pub fn by_model<M: AsRef<str>, T: AsRef<str>>(
        store: &ScoreStore,
        models: &[M],
        task: Task,
        source: &str,
        targets: &[T],
        steps: u32,
    ) -> Self {
        Self {
            corner: "target \\ model".into(),
            columns: models.iter().map(|m| m.as_ref().to_owned()).collect(),
            rows: targets
                .iter()
                .map(|t| {
                    let cells = models
                        .iter()
                        .map(|m| store.get_score(m.as_ref(), task, source, t.as_ref(), steps))
                        .collect();
                    (t.as_ref().to_owned(), cells)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TableData {
    Models(ModelComparison),
    Ranking(RankedList),
    Grid(Grid),
    Groups(GroupComparison),
    Series(Vec<(String, f64)>),
}

impl TableData {
    fn kind(&self) -> &'static str {
        match self {
            TableData::Models(_) => "model comparison",
            TableData::Ranking(_) => "ranking",
            TableData::Grid(_) => "grid",
            TableData::Groups(_) => "group",
            TableData::Series(_) => "series",
        }
    }
}

fn number(v: f64, spec: &TableSpec) -> String {
    let s = format!("{:.*}", spec.precision, spec.scale.apply(v));
    // "-0.0" and friends read as a sign error in a table
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_owned()
    } else {
        s
    }
}

fn cell(v: Option<f64>, spec: &TableSpec) -> String {
    v.map_or_else(|| "-".to_owned(), |v| number(v, spec))
}

fn markdown(header: &[String], rows: &[Vec<String>]) -> String {
    let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
    let mut out = line(header);
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

/// Renders `data` as a markdown table. Percent scale multiplies values by 100 before
/// formatting; row order never depends on the scale.
pub fn render_table(data: &TableData, spec: &TableSpec) -> Result<String, ReportError> {
    if spec.precision < 1 {
        return Err(ReportError::InvalidPrecision);
    }
    let mismatch = || ReportError::ShapeMismatch {
        shape: spec.shape,
        data: data.kind(),
    };
    let s = |x: &str| x.to_owned();
    match (spec.shape, data) {
        (TableShape::PairModelComparison, TableData::Models(c)) => {
            let rows: Vec<Vec<String>> = c.rows.iter().map(|(m, lq)| vec![m.clone(), number(*lq, spec)]).collect();
            Ok(markdown(&[s("Model"), format!("LQ {}→{}", c.source, c.target)], &rows))
        }
        (TableShape::SourceToTargets, TableData::Ranking(r)) => {
            let rows: Vec<Vec<String>> = r
                .entries
                .iter()
                .map(|e| vec![e.rank.to_string(), e.language.clone(), number(e.lq, spec)])
                .collect();
            Ok(markdown(&[s("Rank"), s("Language"), format!("LQ ({} {})", r.model_id, r.fixed_language)], &rows))
        }
        (TableShape::SourceToTargets | TableShape::FewShotAccuracy | TableShape::ZeroFewMatrix, TableData::Grid(g)) => {
            let mut header = vec![g.corner.clone()];
            header.extend(g.columns.iter().cloned());
            let rows: Vec<Vec<String>> = g
                .rows
                .iter()
                .map(|(label, cells)| {
                    let mut row = vec![label.clone()];
                    row.extend(cells.iter().map(|v| cell(*v, spec)));
                    row
                })
                .collect();
            Ok(markdown(&header, &rows))
        }
        (TableShape::GroupBars, TableData::Groups(g)) => {
            let rows: Vec<Vec<String>> = g
                .groups
                .iter()
                .map(|gs| {
                    vec![
                        gs.label.clone(),
                        gs.count.to_string(),
                        cell(gs.mean, spec),
                        cell(gs.median, spec),
                        gs.members.join(", "),
                    ]
                })
                .collect();
            Ok(markdown(&[s("Group"), s("n"), s("Mean LQ"), s("Median LQ"), s("Members")], &rows))
        }
        (TableShape::SourceAverages, TableData::Series(series)) => {
            let rows: Vec<Vec<String>> = series.iter().map(|(l, v)| vec![l.clone(), number(*v, spec)]).collect();
            Ok(markdown(&[s("Source"), s("Average LQ")], &rows))
        }
        _ => Err(mismatch()),
    }
}

/// Writes a `label<TAB>value` series sorted by label.
pub fn write_plot_data<W: Write>(mut out: W, series: &[(String, f64)]) -> Result<(), ReportError> {
    if series.is_empty() {
        return Err(ReportError::EmptySeries);
    }
    let mut sorted: Vec<&(String, f64)> = series.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let io = |source| ReportError::Io {
        path: PathBuf::new(),
        source,
    };
    writeln!(out, "label\tvalue").map_err(io)?;
    for (label, value) in sorted {
        writeln!(out, "{label}\t{value}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn emit_plot_data(series: &[(String, f64)], path: &Path) -> Result<(), ReportError> {
    if series.is_empty() {
        return Err(ReportError::EmptySeries);
    }
    let file = File::create(path).map_err(|source| ReportError::Io {
        path: path.to_owned(),
        source,
    })?;
    write_plot_data(BufWriter::new(file), series).map_err(|e| match e {
        ReportError::Io { source, .. } => ReportError::Io {
            path: path.to_owned(),
            source,
        },
        other => other,
    })
}
