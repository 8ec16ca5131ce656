use std::fmt::Write as _;

use serde_json::Value;

/// Everything a subcommand produces, rendered later according to `--format`.
pub struct Output {
    pub json: Value,
    pub text: String,
    /// Stdout body for `--format csv`; `None` when the command has no CSV form.
    pub csv: Option<String>,
    /// Extra files for `--out-dir`, as (file name, contents).
    pub files: Vec<(String, String)>,
}

impl Output {
    pub fn new(json: Value, text: String) -> Self {
        Output {
            json,
            text,
            csv: None,
            files: Vec::new(),
        }
    }

    pub fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }

    pub fn with_file(mut self, name: &str, contents: String) -> Self {
        self.files.push((name.to_string(), contents));
        self
    }
}

/// Three significant figures in scientific notation.
pub fn sci(v: f64) -> String {
    format!("{v:.2e}")
}

pub fn sci_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), sci)
}

pub fn fixed(v: f64, places: usize) -> String {
    format!("{v:.places$}")
}

/// Left-aligned plain-text table.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<const N: usize>(header: [&str; N]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |cells: &[String], out: &mut String| {
            let joined: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", joined.join("  ").trim_end());
        };
        line(&self.header, &mut out);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&rule, &mut out);
        for row in &self.rows {
            line(row, &mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_aligns_columns() {
        let mut t = Table::new(["D", "ratio"]);
        t.row(vec![sci(2e11), fixed(0.8731, 3)]);
        assert_eq!(t.render(), "D        ratio\n-------  -----\n2.00e11  0.873\n");
    }
}
