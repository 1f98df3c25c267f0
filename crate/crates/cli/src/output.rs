//! CSV tables and atomic file output.

use std::io::Write;
use std::path::Path;

use dycore_perf::{IoSummary, MeanSd};

use crate::error::CliError;

/// A named output file held in memory until every result is ready.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn into_file(self, name: &str) -> OutputFile {
        OutputFile { name: name.to_string(), bytes: self.to_csv() }
    }
}

/// Shortest round-tripping decimal form; locale independent.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Write every file into `dir`, each via a temporary file and a rename.
pub fn write_all(dir: &Path, files: &[OutputFile]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for f in files {
        let target = dir.join(&f.name);
        let mut tmp = tempfile::NamedTempFile::new_in(dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        tmp.write_all(&f.bytes)?;
        tmp.persist(&target).map_err(|e| CliError::Io(format!("{}: {e}", target.display())))?;
        log::info!("wrote {}", target.display());
    }
    Ok(())
}

/// Side-by-side mean ± sd table, one column per scenario.
pub fn summary_table(names: &[&str], summaries: &[Option<IoSummary>]) -> String {
    let cell = |s: &Option<IoSummary>, f: fn(&IoSummary) -> MeanSd, p: usize| match s {
        Some(s) => format!("{:.p$}", f(s)),
        None => "error".to_string(),
    };
    let mut rows: Vec<(String, Vec<String>)> = vec![
        (
            "Runs".into(),
            summaries.iter().map(|s| s.map_or("-".into(), |s| s.runs.to_string())).collect(),
        ),
        (
            "Wall clock (s)".into(),
            summaries.iter().map(|s| cell(s, |s| s.wall_clock_s, 1)).collect(),
        ),
        (
            "Client wait (%)".into(),
            summaries.iter().map(|s| cell(s, |s| s.client_wait_pct, 2)).collect(),
        ),
        (
            "Write rate (MiB/s)".into(),
            summaries.iter().map(|s| cell(s, |s| s.server_write_rate_mib_s, 2)).collect(),
        ),
    ];
    rows.insert(0, (String::new(), names.iter().map(|n| n.to_string()).collect()));
    render_columns(&rows)
}

/// Left-aligned label column followed by right-aligned value columns.
pub fn render_columns(rows: &[(String, Vec<String>)]) -> String {
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
    let ncols = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncols)
        .map(|c| {
            rows.iter().filter_map(|(_, v)| v.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (label, values) in rows {
        out.push_str(&format!("{label:<label_w$}"));
        for (v, w) in values.iter().zip(&widths) {
            out.push_str(&format!("  {v:>w$}"));
        }
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
        out.push('\n');
    }
    out
}
