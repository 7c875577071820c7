//! Text tables, CSV and number formatting.

use std::fmt::Write;

/// Nine significant digits, trailing zeros dropped; scientific outside
/// `1e-4 ..= 1e9`.
pub fn sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..9).contains(&e) {
        let s = format!("{:.*}", (8 - e).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(sig).unwrap_or_else(|| "-".into())
}

pub fn flag(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

#[derive(Debug, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        self.rows.push(cells.into_iter().map(Into::into).collect());
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn text(&self) -> String {
        let cols = self.header.len().max(self.rows.iter().map(Vec::len).max().unwrap_or(0));
        let mut width = vec![0; cols];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (c, cell) in r.iter().enumerate() {
                width[c] = width[c].max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |r: &[String], out: &mut String| {
            let cells: Vec<String> = (0..cols)
                .map(|c| {
                    let cell = r.get(c).map(String::as_str).unwrap_or("");
                    if c == 0 {
                        format!("{cell:<w$}", w = width[c])
                    } else {
                        format!("{cell:>w$}", w = width[c])
                    }
                })
                .collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        };
        if !self.header.is_empty() {
            line(&self.header, &mut out);
            let total = width.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
            writeln!(out, "{}", "-".repeat(total)).unwrap();
        }
        for r in &self.rows {
            line(r, &mut out);
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::new();
        for r in std::iter::once(&self.header).chain(&self.rows).filter(|r| !r.is_empty()) {
            writeln!(out, "{}", r.join(",")).unwrap();
        }
        out
    }
}

/// Full-precision cell for CSV output.
pub fn exact(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(sig(0.7), "0.7");
        assert_eq!(sig(0.8531128874149275), "0.853112887");
        assert_eq!(sig(2.0), "2");
        assert_eq!(sig(0.99999999999), "1");
        assert_eq!(sig(0.00243), "0.00243");
        assert_eq!(sig(1.5e-7), "1.50000000e-7");
        assert_eq!(sig(-0.3), "-0.3");
    }

    #[test]
    fn table_aligns() {
        let mut t = Table::new(["k", "value"]);
        t.row(["0", "1"]);
        t.row(["10", "0.25"]);
        let s = t.text();
        assert!(s.lines().all(|l| l.len() <= 9));
        assert_eq!(t.csv(), "k,value\n0,1\n10,0.25\n");
    }
}
