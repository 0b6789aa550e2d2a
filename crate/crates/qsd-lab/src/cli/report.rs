//! CSV emission with reproducibility metadata.
//!
//! Reports open with `# key=value` comment lines (always including the
//! config hash when one is known), then a header row, then data rows with
//! floats printed as `{:.16e}` so identical runs produce byte-identical
//! files.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::Result;

#[derive(Clone, Debug, Default)]
pub struct CsvReport {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvReport {
    pub fn new(header: &[&str]) -> Self {
        CsvReport {
            meta: vec![],
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn row(&mut self, values: Vec<f64>) -> &mut Self {
        debug_assert_eq!(values.len(), self.header.len());
        self.rows.push(values);
        self
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (k, v) in &self.meta {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            // Normalize -0.0 so sign noise never reaches the file.
            let cols: Vec<String> = row.iter().map(|v| format!("{:.16e}", v + 0.0)).collect();
            writeln!(w, "{}", cols.join(","))?;
        }
        Ok(())
    }

    /// Write to `path`, or to stdout when `path` is `None`.
    pub fn emit(&self, path: Option<&Path>) -> Result<()> {
        match path {
            Some(p) => {
                if let Some(dir) = p.parent() {
                    if !dir.as_os_str().is_empty() {
                        std::fs::create_dir_all(dir)?;
                    }
                }
                let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
                self.write_to(&mut f)?;
            }
            None => {
                let stdout = std::io::stdout();
                self.write_to(&mut stdout.lock())?;
            }
        }
        Ok(())
    }
}

/// Output destination for a subcommand: an explicit `--out` wins, otherwise
/// the `QSD_LAB_OUT` directory (file named after the subcommand), otherwise
/// stdout.
pub fn resolve_out(explicit: Option<PathBuf>, subcommand: &str) -> Option<PathBuf> {
    explicit.or_else(|| {
        std::env::var_os("QSD_LAB_OUT").map(|dir| PathBuf::from(dir).join(format!("{subcommand}.csv")))
    })
}
