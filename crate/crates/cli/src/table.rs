//! Minimal CSV writer. Floats carry 17 significant digits so that a value
//! read back is bit-identical.

use std::fmt::Write as _;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header");
        self.rows.push(row.into_iter().map(Cell::render).collect());
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column `name` of every row, parsed back; empty cells give `None`.
    pub fn column_f64(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j].parse().ok()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(usize),
    S(String),
    Empty,
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::F(v) => fmt_f64(v),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s
                }
            }
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::F)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn quoting_and_columns() {
        let mut t = Table::new(&["a", "b", "c"]);
        t.push(vec![1.5.into(), Cell::Empty, "x,y".into()]);
        assert_eq!(t.to_csv(), "a,b,c\n1.5000000000000000e0,,\"x,y\"\n");
        assert_eq!(t.column_f64("a").unwrap(), vec![Some(1.5)]);
        assert_eq!(t.column_f64("b").unwrap(), vec![None]);
    }
}
