//! Plot data: one CSV per panel, an x column plus series columns.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::table::ResultTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    /// Panel name, used in the file name.
    pub panel: String,
    /// Source table; the primary table when absent.
    pub table: Option<String>,
    pub x: String,
    pub series: Vec<String>,
}

impl PlotSpec {
    pub fn new(panel: &str, table: Option<&str>, x: &str, series: &[&str]) -> Self {
        Self {
            panel: panel.into(),
            table: table.map(str::to_string),
            x: x.into(),
            series: series.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Write `<prefix>.plot.<panel>.csv` into `dir`.
pub fn emit_plotdata(table: &ResultTable, spec: &PlotSpec, dir: &Path, prefix: &str) -> Result<PathBuf> {
    let mut cols = vec![spec.x.as_str()];
    cols.extend(spec.series.iter().map(String::as_str));
    let idx: Vec<usize> = cols.iter().map(|c| table.column_index(c)).collect::<Result<_>>()?;
    let mut panel = ResultTable::new(spec.panel.clone(), &cols);
    for row in &table.rows {
        panel.push(idx.iter().map(|&j| row[j].clone()).collect());
    }
    let path = dir.join(format!("{prefix}.plot.{}.csv", spec.panel));
    panel.write_csv(&path)?;
    Ok(path)
}
