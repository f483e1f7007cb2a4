//! Tables of numbers and their CSV / JSON renderings.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Format;
use crate::error::CliError;

pub static INTERRUPTED: AtomicBool = AtomicBool::new(false);

pub fn interrupted() -> bool {
    INTERRUPTED.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Free-form lines placed in the header after the config.
    pub notes: Vec<String>,
    /// Rows the command meant to produce; more than `rows.len()` after an interrupt.
    pub planned: usize,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn truncated(&self) -> bool {
        self.rows.len() < self.planned
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
        self.planned = self.planned.max(self.rows.len());
    }

    /// Appends rows computed in parallel; order follows the inputs.
    ///
    /// Every task checks the interrupt flag first. After an interrupt only the
    /// leading run of finished rows is kept. The first error in input order wins.
    pub fn extend_par<T, F>(&mut self, inputs: &[T], f: F) -> Result<(), CliError>
    where
        T: Sync,
        F: Fn(&T) -> Result<Vec<Vec<f64>>, CliError> + Sync + Send,
    {
        let results: Vec<Option<Result<Vec<Vec<f64>>, CliError>>> = inputs
            .par_iter()
            .map(|x| if interrupted() { None } else { Some(f(x)) })
            .collect();
        let mut planned = self.rows.len();
        let mut stopped = false;
        for r in results {
            match r {
                Some(Ok(rows)) if !stopped => {
                    planned += rows.len();
                    self.rows.extend(rows);
                }
                Some(Ok(rows)) => planned += rows.len(),
                Some(Err(e)) if !stopped => return Err(e),
                _ => {
                    stopped = true;
                    planned += 1;
                }
            }
        }
        self.planned = self.planned.max(planned);
        Ok(())
    }
}

/// Everything that goes into the header of an output file.
#[derive(Debug, Serialize)]
pub struct Header<'a, C: Serialize> {
    pub tool: String,
    pub command: &'a str,
    pub config: &'a C,
}

/// 12 significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.11e}")
    }
}

pub fn render<C: Serialize>(
    table: &Table,
    header: &Header<C>,
    format: Format,
) -> Result<String, CliError> {
    let config =
        serde_json::to_string(header.config).map_err(|e| CliError::Usage(e.to_string()))?;
    match format {
        Format::Csv => {
            let mut s = String::new();
            s.push_str(&format!(
                "# {}\n# command: {}\n# config: {config}\n",
                header.tool, header.command
            ));
            for n in &table.notes {
                s.push_str(&format!("# {n}\n"));
            }
            s.push_str(&table.columns.join(","));
            s.push('\n');
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|&x| fmt_num(x)).collect();
                s.push_str(&cells.join(","));
                s.push('\n');
            }
            if table.truncated() {
                s.push_str(&format!(
                    "# truncated: interrupted after {} of {} rows\n",
                    table.rows.len(),
                    table.planned
                ));
            }
            Ok(s)
        }
        Format::Json => {
            // values pass through the CSV formatting so both renderings agree
            let rows: Vec<Vec<Option<f64>>> = table
                .rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|&x| fmt_num(x).parse::<f64>().ok().filter(|v| v.is_finite()))
                        .collect()
                })
                .collect();
            let doc = serde_json::json!({
                "tool": header.tool,
                "command": header.command,
                "config": serde_json::from_str::<serde_json::Value>(&config).map_err(|e| CliError::Usage(e.to_string()))?,
                "notes": table.notes,
                "columns": table.columns,
                "rows": rows,
                "truncated": table.truncated(),
                "planned_rows": table.planned,
            });
            let mut s =
                serde_json::to_string_pretty(&doc).map_err(|e| CliError::Usage(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

pub fn write(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_twelve_digits() {
        assert_eq!(fmt_num(1.0), "1.00000000000e0");
        assert_eq!(fmt_num(-0.000123456789012345), "-1.23456789012e-4");
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn csv_layout_and_truncation() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.0, 2.0]);
        t.planned = 3;
        let h = Header {
            tool: "zeno 0.0.0".into(),
            command: "test",
            config: &serde_json::json!({"x": 1}),
        };
        let s = render(&t, &h, Format::Csv).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# zeno 0.0.0");
        assert_eq!(lines[2], "# config: {\"x\":1}");
        assert_eq!(lines[3], "a,b");
        assert_eq!(lines[4], "1.00000000000e0,2.00000000000e0");
        assert_eq!(lines[5], "# truncated: interrupted after 1 of 3 rows");
    }

    #[test]
    fn parallel_rows_keep_order() {
        let mut t = Table::new(&["x", "y"]);
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        t.extend_par(&xs, |&x| Ok(vec![vec![x, x * x]])).unwrap();
        assert_eq!(t.rows.len(), 50);
        assert!(t.rows.iter().enumerate().all(|(i, r)| r[0] == i as f64));
        assert!(!t.truncated());
    }
}
