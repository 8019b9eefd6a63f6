use std::fs;
use std::path::Path;

use nightawb_core::metrics::ErrorSummary;

use crate::error::CliError;

/// CSV text starting with a `#` provenance line.
pub struct CsvOut {
    writer: csv::Writer<Vec<u8>>,
    header: String,
}

impl CsvOut {
    pub fn new(provenance: &str, columns: &[&str]) -> Result<Self, CliError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(columns)?;
        Ok(Self {
            writer,
            header: provenance.to_string(),
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn write(self, path: &Path) -> Result<(), CliError> {
        let body = self
            .writer
            .into_inner()
            .map_err(|e| CliError::data(format!("csv: {e}")))?;
        let mut text = self.header.into_bytes();
        text.push(b'\n');
        text.extend_from_slice(&body);
        fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
    }
}

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Two decimals, ties to even on the exact binary value.
pub fn deg2(v: f64) -> String {
    format!("{v:.2}")
}

pub const SUMMARY_COLUMNS: [&str; 7] = ["metric", "count", "mean", "median", "tri_mean", "best25", "worst25"];

pub fn summary_row(metric: &str, s: &ErrorSummary) -> Vec<String> {
    vec![
        metric.to_string(),
        s.count.to_string(),
        num(s.mean),
        num(s.median),
        num(s.tri_mean),
        num(s.best25),
        num(s.worst25),
    ]
}

/// Aligned plain-text table.
pub fn text_table(columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = columns.iter().map(|c| c.len()).collect();
    for r in rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = width[i])
                } else {
                    format!("{c:>w$}", w = width[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(columns.to_vec());
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_decimal_rounding() {
        assert_eq!(deg2(2.124999), "2.12");
        assert_eq!(deg2(2.125), "2.12");
        assert_eq!(deg2(2.126), "2.13");
        assert_eq!(deg2(0.375), "0.38");
        assert_eq!(deg2(0.0), "0.00");
    }

    #[test]
    fn table_is_aligned() {
        let t = text_table(&["method", "x"], &[vec!["a".into(), "10.00".into()], vec!["long".into(), "1.00".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines, ["method      x", "a       10.00", "long     1.00"]);
    }
}
