//! Result tables and CSV output.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::CliError;

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Int(i64::from(b))
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as i64)
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(n) => Some(*n as f64),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    /// Numbers carry 9 significant digits in scientific notation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(x) if x.is_finite() => write!(f, "{x:.8e}"),
            Cell::Num(x) if x.is_nan() => f.write_str("nan"),
            Cell::Num(x) => f.write_str(if *x > 0.0 { "inf" } else { "-inf" }),
            Cell::Int(n) => write!(f, "{n}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Empty => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column, `None` for non-numeric cells.
    pub fn values(&self, name: &str) -> Vec<Option<f64>> {
        let Some(k) = self.column(name) else { return Vec::new() };
        self.rows.iter().map(|r| r[k].as_f64()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

/// Write `table` as CSV to `path`.
pub fn emit_csv(table: &Table, path: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io { path: path.to_path_buf(), source: e };
    let file = std::fs::File::create(path).map_err(io)?;
    table.write_csv(std::io::BufWriter::new(file)).map_err(|e| io(e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_row_table_is_two_lines() {
        let mut t = Table::new(&["km", "rate", "status"]);
        t.push(vec![Cell::Num(70.0), Cell::Num(6.959e-5), "positive".into()]);
        let s = t.to_csv_string();
        assert_eq!(s, "km,rate,status\n7.00000000e1,6.95900000e-5,positive\n");
    }

    #[test]
    fn round_trip_keeps_nine_digits() {
        let xs = [2.554583912345e-3, 1.0, 123456789.123, -4.2e-300, 0.0];
        let mut t = Table::new(&["x"]);
        for x in xs {
            t.push(vec![x.into()]);
        }
        let text = t.to_csv_string();
        let mut r = csv::Reader::from_reader(text.as_bytes());
        for (rec, x) in r.records().zip(xs) {
            let y: f64 = rec.unwrap()[0].parse().unwrap();
            let tol = if x == 0.0 { 0.0 } else { x.abs() * 5e-9 };
            assert!((y - x).abs() <= tol, "{x} -> {y}");
        }
    }

    #[test]
    fn special_cells() {
        assert_eq!(Cell::Empty.to_string(), "");
        assert_eq!(Cell::Num(f64::NAN).to_string(), "nan");
        assert_eq!(Cell::from(true).to_string(), "1");
        assert_eq!(Cell::from(None::<f64>), Cell::Empty);
    }
}
