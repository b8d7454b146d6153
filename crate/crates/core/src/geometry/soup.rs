//! Plain-text triangle soup.
//!
//! ```text
//! # bladetrap-mesh v1
//! electrodes RF_BLADE_1 RF_BLADE_2 DC_1A ...
//! x1 y1 z1 x2 y2 z2 x3 y3 z3 RF_BLADE_1
//! ```
//!
//! The first line is the version header. Later lines starting with `#` and
//! blank lines are ignored. The optional `electrodes` line fixes the
//! electrode order; without it electrodes are numbered by first appearance.
//! Each panel line holds nine coordinates in meters (counter-clockwise seen
//! from outside) and an electrode name. Coordinates are written in shortest
//! round-trip form, so write followed by read reproduces the panels bit for bit.

use std::fmt::Write as _;

use nalgebra::Vector3;

use super::{ElectrodeId, ElectrodeMesh, Panel};
use crate::error::{Error, Result};

pub const SOUP_HEADER: &str = "# bladetrap-mesh v1";

pub fn write_soup(mesh: &ElectrodeMesh) -> String {
    let mut out = String::with_capacity(mesh.len() * 200 + 256);
    out.push_str(SOUP_HEADER);
    out.push('\n');
    out.push_str("electrodes");
    for e in mesh.electrodes() {
        let _ = write!(out, " {e}");
    }
    out.push('\n');
    for p in mesh.panels() {
        for v in &p.vertices {
            for c in v.iter() {
                let _ = write!(out, "{c:e} ");
            }
        }
        let _ = writeln!(out, "{}", mesh.electrodes()[p.electrode]);
    }
    out
}

/// Parses a soup. The result carries no solid conductors, so inside tests
/// are unavailable on it.
pub fn read_soup(text: &str) -> Result<ElectrodeMesh> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == SOUP_HEADER => {}
        _ => return Err(Error::syntax(1, 1, format!("expected header `{SOUP_HEADER}`"))),
    }
    let mut electrodes: Vec<ElectrodeId> = Vec::new();
    let mut fixed = false;
    let mut panels = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = tokens(line);
        if let Some(&(_, "electrodes")) = fields.first() {
            if fixed || !panels.is_empty() {
                return Err(Error::syntax(lineno, 1, "`electrodes` must precede all panels and appear once"));
            }
            for &(col, name) in &fields[1..] {
                let id: ElectrodeId = name
                    .parse()
                    .map_err(|_| Error::syntax(lineno, col, format!("unknown electrode `{name}`")))?;
                if electrodes.contains(&id) {
                    return Err(Error::syntax(lineno, col, format!("electrode `{name}` listed twice")));
                }
                electrodes.push(id);
            }
            fixed = true;
            continue;
        }
        if fields.len() != 10 {
            let col = fields.get(10).map_or(line.len() + 1, |f| f.0);
            return Err(Error::syntax(
                lineno,
                col,
                format!("expected 9 coordinates and an electrode name, found {} fields", fields.len()),
            ));
        }
        let (ecol, ename) = fields.pop().unwrap();
        let id: ElectrodeId = ename
            .parse()
            .map_err(|_| Error::syntax(lineno, ecol, format!("unknown electrode `{ename}`")))?;
        let index = match electrodes.iter().position(|&e| e == id) {
            Some(k) => k,
            None if !fixed => {
                electrodes.push(id);
                electrodes.len() - 1
            }
            None => {
                return Err(Error::syntax(lineno, ecol, format!("electrode `{ename}` not declared")));
            }
        };
        let mut c = [0.0; 9];
        for (k, &(col, tok)) in fields.iter().enumerate() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::syntax(lineno, col, format!("invalid number `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::syntax(lineno, col, "coordinate must be finite"));
            }
            c[k] = v;
        }
        let vertices = [
            Vector3::new(c[0], c[1], c[2]),
            Vector3::new(c[3], c[4], c[5]),
            Vector3::new(c[6], c[7], c[8]),
        ];
        let panel = Panel::new(vertices, index);
        if !(panel.area() > 0.0) {
            return Err(Error::syntax(lineno, 1, "degenerate panel (zero area)"));
        }
        panels.push(panel);
    }
    ElectrodeMesh::new(electrodes, panels, Vec::new()).map_err(|e| Error::Format(e.to_string()))
}

/// Whitespace-separated tokens with their 1-based character columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut col = 0;
    let mut start_col = 0;
    for (byte, ch) in line.char_indices() {
        col += 1;
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((start_col, &line[s..byte]));
            }
        } else if start.is_none() {
            start = Some(byte);
            start_col = col;
        }
    }
    if let Some(s) = start {
        out.push((start_col, &line[s..]));
    }
    out
}
