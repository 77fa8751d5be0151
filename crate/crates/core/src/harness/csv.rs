//! Rectangular numeric tables and their CSV form.
//!
//! Numbers are written with 17 significant digits so that parsing the file
//! back reproduces every `f64` bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::InvalidArgument(format!(
                "row has {} fields, table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_number(&mut out, *v);
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines.next().ok_or("missing header row")?;
        let mut table = Table::new(header.split(',').map(|s| s.trim().to_string()));
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| format!("data row {}: {e}", k + 1))?;
            table
                .push_row(row)
                .map_err(|e| format!("data row {}: {e}", k + 1))?;
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text).map_err(|reason| Error::Parse {
            path: path.to_path_buf(),
            reason,
        })
    }
}

pub(crate) fn write_number(out: &mut String, v: f64) {
    if v == 0.0 {
        // keeps -0.0 and 0.0 distinct on re-read
        let _ = write!(out, "{}", if v.is_sign_negative() { "-0" } else { "0" });
    } else if v.is_finite() {
        let _ = write!(out, "{v:.16e}");
    } else {
        let _ = write!(out, "{v}");
    }
}

/// Writes `table` to `path`: header row, then one line per row.
pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    write_text(path, &table.to_csv_string())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(["a", "b"]);
        assert_eq!(t.to_csv_string(), "a,b\n");
    }

    #[test]
    fn one_row_is_two_lines() {
        let mut t = Table::new(["a", "b"]);
        t.push_row(vec![1.0, -0.5]).unwrap();
        let s = t.to_csv_string();
        assert_eq!(s.lines().count(), 2);
        assert!(s.ends_with('\n'));
        assert_eq!(s, "a,b\n1.0000000000000000e0,-5.0000000000000000e-1\n");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let mut t = Table::new(["a", "b"]);
        assert!(t.push_row(vec![1.0]).is_err());
    }

    #[test]
    fn unwritable_path_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, "x").unwrap();
        // a regular file cannot be used as a directory
        let err = emit_csv(&Table::new(["a"]), &file.join("t.csv"));
        assert!(err.is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
            let mut t = Table::new(["v"]);
            for v in &vals {
                t.push_row(vec![*v]).unwrap();
            }
            let back = Table::parse_csv(&t.to_csv_string()).unwrap();
            for (a, b) in vals.iter().zip(back.column("v").unwrap()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
