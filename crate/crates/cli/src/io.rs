//! CSV input and output. Numbers are written as `{:.8e}` with LF endings.

use std::io::Write;
use std::path::Path;

use crate::CliError;

/// A numeric table read from CSV, with its header.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn require(&self, name: &str) -> Result<Vec<f64>, CliError> {
        self.column(name).ok_or_else(|| {
            CliError::Usage(format!(
                "missing column {name:?}; found {}",
                self.header.join(",")
            ))
        })
    }
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    CliError::Usage(format!(
                        "{}: row {}: {f:?} is not a number",
                        path.display(),
                        i + 2
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn format_number(v: f64) -> String {
    format!("{v:.8e}")
}

/// Renders a header and numeric rows.
pub fn render(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|&v| format_number(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// `name,value,sigma` report rows; `None` sigma is written as `nan`.
pub fn render_report(rows: &[(String, f64, Option<f64>)]) -> String {
    let mut out = String::from("name,value,sigma\n");
    for (name, v, s) in rows {
        out.push_str(&format!(
            "{name},{},{}\n",
            format_number(*v),
            format_number(s.unwrap_or(f64::NAN))
        ));
    }
    out
}

/// Writes to `path`, or to stdout when absent.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())
                .and_then(|_| lock.flush())
                .map_err(|e| CliError::Usage(format!("cannot write to stdout: {e}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_is_fixed() {
        assert_eq!(format_number(1.0), "1.00000000e0");
        assert_eq!(format_number(-2.5e-7), "-2.50000000e-7");
    }

    #[test]
    fn render_uses_lf() {
        let s = render(&["a", "b"], &[vec![1.0, 2.0]]);
        assert_eq!(s, "a,b\n1.00000000e0,2.00000000e0\n");
    }
}
