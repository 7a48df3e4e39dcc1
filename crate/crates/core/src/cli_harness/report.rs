//! CSV tables with platform-independent number formatting.

use std::path::Path;

use crate::error::{Error, Result};

/// Rounds to 12 significant digits and prints the shortest decimal that
/// reads back as the rounded value. Fixed notation for magnitudes in
/// `[1e-5, 1e15)`, scientific otherwise.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if (1e-5..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => format_real(*v),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Real)
    }
}

/// Header plus rows, rendered as RFC-4180 CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::contract(format!(
                "row has {} cells for {} columns",
                row.len(),
                self.header.len()
            )));
        }
        if row.iter().any(|c| matches!(c, Cell::Real(v) if !v.is_finite())) {
            return Err(Error::Numeric("report rows must hold finite numbers".into()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// One metric row of a sweep, trace or timing run.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub method: String,
    pub m: usize,
    pub l: usize,
    pub seed: u64,
    pub iteration: usize,
    pub primal_residual: Option<f64>,
    pub objective: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub bytes: u64,
    pub wall_clock_ms: Option<f64>,
    /// `ok`, or `error: <message>` for a failed cell.
    pub status: String,
}

impl ReportRow {
    /// A row that records a failed cell; numeric fields stay empty.
    pub fn failed(experiment: &str, method: &str, m: usize, seed: u64, error: &Error) -> Self {
        Self {
            experiment: experiment.into(),
            method: method.into(),
            m,
            l: 0,
            seed,
            iteration: 0,
            primal_residual: None,
            objective: None,
            train_accuracy: None,
            test_accuracy: None,
            bytes: 0,
            wall_clock_ms: None,
            status: format!("error: {error}"),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 13] = [
    "experiment_id",
    "method",
    "M",
    "L",
    "seed",
    "iteration",
    "primal_residual",
    "objective",
    "train_accuracy",
    "test_accuracy",
    "bytes_communicated",
    "wall_clock_ms",
    "status",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
}

impl RunReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: ReportRow) -> Result<()> {
        let reals = [
            row.primal_residual,
            row.objective,
            row.train_accuracy,
            row.test_accuracy,
            row.wall_clock_ms,
        ];
        if reals.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite metric in {} / {} at iteration {}",
                row.experiment, row.method, row.iteration
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Stable sort by `(experiment id, iteration)`.
    pub fn sort(&mut self) {
        self.rows
            .sort_by(|a, b| a.experiment.cmp(&b.experiment).then(a.iteration.cmp(&b.iteration)));
    }

    /// The report as a table; `wall_clock` false drops the timing column.
    pub fn table(&self, wall_clock: bool) -> Table {
        let header: Vec<&str> = REPORT_COLUMNS
            .iter()
            .copied()
            .filter(|c| wall_clock || *c != "wall_clock_ms")
            .collect();
        let mut t = Table::new(&header);
        for r in &self.rows {
            let mut row = vec![
                Cell::Text(r.experiment.clone()),
                Cell::Text(r.method.clone()),
                Cell::Int(r.m as u64),
                Cell::Int(r.l as u64),
                Cell::Int(r.seed),
                Cell::Int(r.iteration as u64),
                r.primal_residual.into(),
                r.objective.into(),
                r.train_accuracy.into(),
                r.test_accuracy.into(),
                Cell::Int(r.bytes),
            ];
            if wall_clock {
                row.push(r.wall_clock_ms.into());
            }
            row.push(Cell::Text(r.status.clone()));
            t.rows.push(row);
        }
        t
    }

    pub fn to_csv(&self, wall_clock: bool) -> Result<String> {
        self.table(wall_clock).to_csv()
    }
}
