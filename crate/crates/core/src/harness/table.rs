//! Tabular results with a metadata preamble, written as CSV.

use std::fmt;
use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("row has {got} cells, schema has {want} columns")]
    Arity { got: usize, want: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Column names carry their unit as a suffix, e.g. `capacity_bps_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            metadata: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<(), TableError> {
        if row.len() != self.columns.len() {
            return Err(TableError::Arity {
                got: row.len(),
                want: self.columns.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn add_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.push((key.into(), value.into()));
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn metadata(&self) -> &[(String, String)] {
        &self.metadata
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of one column; text cells become NaN.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[i] {
                    Cell::Num(v) => *v,
                    Cell::Int(v) => *v as f64,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }

    /// Header and rows only.
    pub fn write_body<W: Write>(&self, out: W) -> Result<(), TableError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Metadata as `# key: value` lines (multi-line values indented), then
    /// the CSV body.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), TableError> {
        for (k, v) in &self.metadata {
            let mut lines = v.lines();
            writeln!(out, "# {k}: {}", lines.next().unwrap_or(""))?;
            for line in lines {
                writeln!(out, "#   {line}")?;
            }
        }
        self.write_body(out)
    }

    pub fn body_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_body(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("cells are UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_is_enforced() {
        let mut t = ResultTable::new(["a", "b"]);
        assert!(t.push(vec![1.0.into()]).is_err());
        t.push(vec![1.0.into(), "x".into()]).unwrap();
        assert_eq!(t.rows().len(), 1);
    }

    #[test]
    fn csv_layout() {
        let mut t = ResultTable::new(["n", "label", "value_db"]);
        t.push(vec![3usize.into(), "a,b".into(), 0.5.into()])
            .unwrap();
        t.add_metadata("seed", "7");
        t.add_metadata("config", "x = 1\ny = 2");
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# seed: 7\n# config: x = 1\n#   y = 2\nn,label,value_db\n3,\"a,b\",0.5\n"
        );
        assert_eq!(t.numeric_column("value_db").unwrap(), vec![0.5]);
    }
}
