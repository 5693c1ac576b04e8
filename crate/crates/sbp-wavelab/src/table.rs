//! Result tables printed to the terminal and optionally saved as CSV.

use std::path::Path;

use anyhow::{Context, Result};

/// A named table of text cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Column aligned text.
    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut width = vec![0usize; cols];
        for row in std::iter::once(&self.header).chain(&self.rows) {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |row: &[String]| {
            row.iter()
                .zip(&width)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = format!("{}\n{}\n", self.name, line(&self.header));
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    /// Writes `<dir>/<file>.csv`, creating the directory if needed.
    pub fn write_csv(&self, dir: &Path, file: &str) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("{file}.csv"));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("opening {}", path.display()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scientific notation with four decimals.
pub fn sci(x: f64) -> String {
    format!("{x:.4e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_csv_round_trip() {
        let mut t = Table::new("demo", &["n", "error"]);
        t.push(vec!["80".into(), sci(1.5e-3)]);
        assert!(t.render().contains("1.5000e-3"));
        let dir = std::env::temp_dir().join(format!("sbp-wavelab-table-{}", std::process::id()));
        t.write_csv(&dir, "demo").unwrap();
        let text = std::fs::read_to_string(dir.join("demo.csv")).unwrap();
        assert_eq!(text, "n,error\n80,1.5000e-3\n");
        std::fs::remove_dir_all(dir).unwrap();
    }
}
