//! Numeric CSV tables with a two-line comment header.
//!
//! ```text
//! # donor-spin-sim v1
//! # columns: tau_s,echo
//! 0.001,0.998
//! ```

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use crate::error::CliError;

pub const FORMAT_TAG: &str = "# donor-spin-sim v1";
const COLUMNS_PREFIX: &str = "# columns: ";

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Column names carrying their unit as a suffix, e.g. `b0_ut`.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Table {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Builds a table from equal-length columns.
    pub fn from_columns(names: &[&str], data: &[&[f64]]) -> Table {
        assert_eq!(names.len(), data.len());
        let n = data.first().map_or(0, |c| c.len());
        let mut t = Table::new(names.iter().copied());
        for i in 0..n {
            t.rows.push(data.iter().map(|c| c[i]).collect());
        }
        t
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.columns.iter().any(|c| c.contains(',') || c.is_empty()) {
            return Err(CliError::Validation(format!(
                "bad column names {:?}",
                self.columns
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(CliError::Validation(format!(
                    "row {i} has {} values for {} columns",
                    row.len(),
                    self.columns.len()
                )));
            }
            if let Some((k, v)) = row.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(CliError::Validation(format!(
                    "refusing to write non-finite value {v} in row {i}, column {}",
                    self.columns[k]
                )));
            }
        }
        Ok(())
    }

    /// Serializes with LF line endings and shortest round-trip float text.
    pub fn write_to<W: Write>(&self, out: W) -> Result<(), CliError> {
        self.validate()?;
        let mut out = out;
        let io = |e: io::Error| CliError::Runtime(format!("write failed: {e}"));
        writeln!(out, "{FORMAT_TAG}").map_err(io)?;
        writeln!(out, "{COLUMNS_PREFIX}{}", self.columns.join(",")).map_err(io)?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:?}")))
                .map_err(|e| CliError::Runtime(format!("write failed: {e}")))?;
        }
        w.flush().map_err(io)
    }

    pub fn to_csv_string(&self) -> Result<String, CliError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is ASCII"))
    }

    pub fn parse(text: &str) -> Result<Table, CliError> {
        let columns = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .find_map(|l| l.strip_prefix(COLUMNS_PREFIX))
            .ok_or_else(|| CliError::Validation("missing '# columns:' header line".into()))?;
        let mut table = Table::new(columns.split(',').map(str::trim));
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::Validation(format!("bad CSV: {e}")))?;
            let line = rec.position().map_or(0, |p| p.line());
            let row = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        CliError::Validation(format!("line {line}: '{f}' is not a number"))
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if row.len() != table.columns.len() {
                return Err(CliError::Validation(format!(
                    "line {line}: {} values for {} columns",
                    row.len(),
                    table.columns.len()
                )));
            }
            table.rows.push(row);
        }
        Ok(table)
    }
}

/// Writes `table` to `path`, or to standard output when no path is given.
pub fn emit_csv(table: &Table, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            table.validate()?;
            let f = File::create(p).map_err(|e| CliError::io(p, e))?;
            let mut w = io::BufWriter::new(f);
            table.write_to(&mut w)?;
            w.flush().map_err(|e| CliError::io(p, e))
        }
        None => table.write_to(io::stdout().lock()),
    }
}

pub fn read_csv(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Table::parse(&text).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_points_give_three_rows_and_two_header_lines() {
        let t = Table::from_columns(
            &["tau_s", "echo"],
            &[&[1e-3, 2e-3, 4e-3], &[1.0, 0.5, 0.25]],
        );
        let text = t.to_csv_string().unwrap();
        let lines: Vec<&str> = text.split_terminator('\n').collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], FORMAT_TAG);
        assert_eq!(lines[1], "# columns: tau_s,echo");
        assert_eq!(lines[2], "0.001,1.0");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let vals = [
            0.1 + 0.2,
            1.0 / 3.0,
            -2.5e-300,
            6.02214076e23,
            f64::MIN_POSITIVE,
            0.0,
        ];
        let t = Table::from_columns(&["x"], &[&vals]);
        let back = Table::parse(&t.to_csv_string().unwrap()).unwrap();
        let got = back.column("x").unwrap();
        for (a, b) in vals.iter().zip(&got) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn nan_is_refused() {
        let t = Table::from_columns(&["x"], &[&[1.0, f64::NAN]]);
        assert!(matches!(t.to_csv_string(), Err(CliError::Validation(_))));
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let t = Table::from_columns(&["x"], &[&[1.0]]);
        let p = Path::new("/nonexistent-dir/out.csv");
        let err = emit_csv(&t, Some(p)).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/out.csv"));
        assert_eq!(err.exit_code(), 2);
    }
}
