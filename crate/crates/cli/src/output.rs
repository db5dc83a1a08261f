//! Report files: JSON with every float at 17 significant digits, CSV tables
//! and plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Format a float with 17 significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => write!(out, "{u}").unwrap(),
            (None, Some(i), _) => write!(out, "{i}").unwrap(),
            (None, None, Some(f)) => out.push_str(&float(f)),
            _ => out.push_str(&n.to_string()),
        },
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            out.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Pretty JSON with sorted keys and 17-digit floats.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

/// A CSV table held as formatted cells.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// One CSV cell.
pub enum Cell {
    Int(i128),
    Float(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(
            row.into_iter()
                .map(|c| match c {
                    Cell::Int(i) => i.to_string(),
                    Cell::Float(x) => float(x),
                    Cell::Text(s) => s,
                    Cell::Empty => String::new(),
                })
                .collect(),
        );
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

/// Long-format plot data: one `(series, n, value)` row per point.
pub struct PlotData(Table);

impl PlotData {
    pub fn new() -> Self {
        PlotData(Table::new(&["series", "n", "value"]))
    }

    pub fn push(&mut self, series: &str, n: usize, value: f64) {
        if value.is_finite() {
            self.0.push(vec![Cell::Text(series.into()), n.into(), value.into()]);
        }
    }

    pub fn into_table(self) -> Table {
        self.0
    }
}

/// Writes files under one output directory and remembers their names.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        self.write(name, &t.to_csv()?)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_digits() {
        assert_eq!(float(std::f64::consts::LN_2), "6.9314718055994529e-1");
        let v: f64 = float(0.1).parse().unwrap();
        assert_eq!(v, 0.1);
    }

    #[test]
    fn json_layout() {
        let v = serde_json::json!({"b": [1, -2, 0.5], "a": {"x": null, "s": "q\""}, "e": []});
        let s = to_json(&v).unwrap();
        let expected = "{\n  \"a\": {\n    \"s\": \"q\\\"\",\n    \"x\": null\n  },\n  \"b\": [\n    1,\n    -2,\n    5.0000000000000000e-1\n  ],\n  \"e\": []\n}\n";
        assert_eq!(s, expected);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"][2], 0.5);
    }

    #[test]
    fn tables_format_cells() {
        let mut t = Table::new(&["n", "x", "flag"]);
        t.push(vec![3usize.into(), Cell::from(None::<f64>), true.into()]);
        t.push(vec![(-1i64).into(), 0.25.into(), Cell::Text("a,b".into())]);
        assert_eq!(t.to_csv().unwrap(), "n,x,flag\n3,,true\n-1,2.5000000000000000e-1,\"a,b\"\n");
    }
}
