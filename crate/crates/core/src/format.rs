//! Plain-text numeric tables shared by the sweep, track and study outputs.
//!
//! ```text
//! # bladetrap-table v1
//! meta <key> <value>
//! columns <name> <name> ...
//! <value> <value> ...
//! ```
//!
//! Values use the shortest decimal that reads back to the same `f64`, with
//! `nan`, `inf` and `-inf` for non-finite entries, so equal tables are equal
//! byte for byte.

use std::fmt::Write;

use crate::error::{Error, Result};

pub const TABLE_HEADER: &str = "# bladetrap-table v1";

/// Shortest round-trip decimal form of `v`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ if s.chars().all(|c| c.is_ascii_digit() || "+-.eE".contains(c)) => s.parse().ok(),
        _ => None,
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn is_word(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.push((key.into(), value.into()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from the column count");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write(&self) -> String {
        let mut s = String::new();
        s.push_str(TABLE_HEADER);
        s.push('\n');
        for (k, v) in &self.meta {
            debug_assert!(is_word(k) && !v.contains('\n'));
            let _ = writeln!(s, "meta {k} {v}");
        }
        let _ = writeln!(s, "columns {}", self.columns.join(" "));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|&v| fmt_f64(v)).collect();
            let _ = writeln!(s, "{}", cells.join(" "));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Table> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == TABLE_HEADER => {}
            _ => return Err(Error::syntax(1, 1, format!("expected `{TABLE_HEADER}`"))),
        }
        let mut t = Table::default();
        let mut have_columns = false;
        for (i, line) in lines {
            let ln = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if !have_columns {
                if let Some(rest) = line.strip_prefix("meta ") {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    if !is_word(k) {
                        return Err(Error::syntax(ln, 6, "meta key missing"));
                    }
                    t.meta.push((k.into(), v.into()));
                    continue;
                }
                if let Some(rest) = line.strip_prefix("columns ") {
                    t.columns = rest.split_whitespace().map(String::from).collect();
                    if t.columns.is_empty() {
                        return Err(Error::syntax(ln, 9, "no column names"));
                    }
                    have_columns = true;
                    continue;
                }
                return Err(Error::syntax(ln, 1, "expected `meta` or `columns`"));
            }
            let mut row = Vec::with_capacity(t.columns.len());
            let mut col = 1;
            for cell in line.split(' ') {
                let v = parse_f64(cell).ok_or_else(|| Error::syntax(ln, col, format!("bad number `{cell}`")))?;
                row.push(v);
                col += cell.len() + 1;
            }
            if row.len() != t.columns.len() {
                return Err(Error::syntax(
                    ln,
                    1,
                    format!("{} values for {} columns", row.len(), t.columns.len()),
                ));
            }
            t.rows.push(row);
        }
        if !have_columns {
            return Err(Error::syntax(text.lines().count().max(1), 1, "missing `columns` line"));
        }
        Ok(t)
    }
}
