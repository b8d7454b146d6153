//! Regular 3-D samples of an energy or potential, and their text dump.
//!
//! Dump layout:
//!
//! ```text
//! # bladetrap-grid v1
//! kind PSEUDO
//! unit eV
//! origin <x> <y> <z>
//! spacing <dx> <dy> <dz>
//! counts <nx> <ny> <nz>
//! meta <key> <value>        (any number)
//! data
//! <x> <y> <z> <value>       (nx·ny·nz lines, x fastest, then y, then z)
//! ```
//!
//! Floats use the shortest round-trip form, so a dump parses back bit for
//! bit. Points inside a conductor hold `nan`.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::TrapModel;
use crate::error::{Error, Result};

const HEADER: &str = "# bladetrap-grid v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    /// Pseudopotential energy, eV.
    Pseudo,
    /// dc plus rod potential, V.
    DcStatic,
    /// Pseudopotential plus static energy, eV.
    Total,
}

impl GridKind {
    pub fn name(self) -> &'static str {
        match self {
            GridKind::Pseudo => "PSEUDO",
            GridKind::DcStatic => "DC_STATIC",
            GridKind::Total => "TOTAL",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            GridKind::DcStatic => "V",
            _ => "eV",
        }
    }
}

impl FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PSEUDO" => Ok(GridKind::Pseudo),
            "DC_STATIC" => Ok(GridKind::DcStatic),
            "TOTAL" => Ok(GridKind::Total),
            _ => Err(Error::InvalidArgument(format!("unknown grid kind `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialGrid {
    pub kind: GridKind,
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub counts: [usize; 3],
    pub meta: Vec<(String, String)>,
    /// x fastest, then y, then z. NaN marks points inside conductors.
    pub values: Vec<f64>,
}

impl PotentialGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.counts[0] * (j + self.counts[1] * k)
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let idx = [i, j, k];
        std::array::from_fn(|a| self.origin[a] + idx[a] as f64 * self.spacing[a])
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    /// Valid sample with the lowest value and its point.
    pub fn minimum(&self) -> Option<([f64; 3], f64)> {
        let (n, v) = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let (nx, ny) = (self.counts[0], self.counts[1]);
        Some((self.point(n % nx, (n / nx) % ny, n / (nx * ny)), *v))
    }

    /// Plane k as an ny × nx row-major slice (rows along y).
    pub fn slice_z(&self, k: usize) -> Vec<f64> {
        let n = self.counts[0] * self.counts[1];
        self.values[k * n..(k + 1) * n].to_vec()
    }
}

fn axis_count(lo: f64, hi: f64, h: f64) -> Result<usize> {
    if !(lo.is_finite() && hi.is_finite() && h > 0.0 && h.is_finite()) || hi < lo {
        return Err(Error::InvalidArgument(
            "grid box must be finite with max >= min and positive spacing".into(),
        ));
    }
    let n = ((hi - lo) / h + 1e-9).floor();
    if n > 1e9 {
        return Err(Error::Budget(format!("{n} samples along one axis; use a coarser spacing")));
    }
    Ok(n as usize + 1)
}

/// Samples `kind` at every lattice point of the box `[min, max]` with the
/// given spacing. Fails with `Budget` above `max_samples` points.
pub fn sample_grid(
    model: &TrapModel,
    min: [f64; 3],
    max: [f64; 3],
    spacing: [f64; 3],
    kind: GridKind,
    max_samples: usize,
) -> Result<PotentialGrid> {
    let mut counts = [0; 3];
    for a in 0..3 {
        counts[a] = axis_count(min[a], max[a], spacing[a])?;
    }
    let total = counts.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
    match total {
        Some(t) if t <= max_samples => {}
        _ => {
            return Err(Error::Budget(format!(
                "grid of {}×{}×{} samples exceeds the limit of {max_samples}; use a coarser spacing",
                counts[0], counts[1], counts[2]
            )))
        }
    }
    let mut grid = PotentialGrid {
        kind,
        origin: min,
        spacing,
        counts,
        meta: model.voltages().describe(),
        values: Vec::new(),
    };
    let f = model.energy_fn(kind);
    let (nx, ny) = (counts[0], counts[1]);
    grid.values = (0..counts.iter().product::<usize>())
        .into_par_iter()
        .map(|n| {
            let p = grid.point(n % nx, (n / nx) % ny, n / (nx * ny));
            let r = Vector3::from(p);
            if model.inside_conductor(&r).is_some() {
                f64::NAN
            } else {
                f(&r)
            }
        })
        .collect();
    Ok(grid)
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn write_grid(grid: &PotentialGrid) -> String {
    let mut s = String::with_capacity(64 * grid.values.len() + 256);
    let [o, h] = [grid.origin, grid.spacing];
    let c = grid.counts;
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "kind {}", grid.kind.name());
    let _ = writeln!(s, "unit {}", grid.kind.unit());
    let _ = writeln!(s, "origin {:e} {:e} {:e}", o[0], o[1], o[2]);
    let _ = writeln!(s, "spacing {:e} {:e} {:e}", h[0], h[1], h[2]);
    let _ = writeln!(s, "counts {} {} {}", c[0], c[1], c[2]);
    for (k, v) in &grid.meta {
        let _ = writeln!(s, "meta {k} {v}");
    }
    s.push_str("data\n");
    for (n, v) in grid.values.iter().enumerate() {
        let p = grid.point(n % c[0], (n / c[0]) % c[1], n / (c[0] * c[1]));
        let _ = writeln!(s, "{:e} {:e} {:e} {}", p[0], p[1], p[2], fmt_value(*v));
    }
    s
}

fn parse_f64(tok: &str, line: usize, col: usize) -> Result<f64> {
    if tok == "nan" {
        return Ok(f64::NAN);
    }
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::syntax(line, col, format!("expected a number, found `{tok}`")))
}

/// Splits a line into tokens with 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

fn triple<T>(toks: &[(usize, &str)], line: usize, parse: impl Fn(&str, usize) -> Result<T>) -> Result<[T; 3]> {
    if toks.len() != 4 {
        return Err(Error::syntax(line, 1, format!("`{}` takes three values", toks[0].1)));
    }
    Ok([parse(toks[1].1, toks[1].0)?, parse(toks[2].1, toks[2].0)?, parse(toks[3].1, toks[3].0)?])
}

pub fn parse_grid(text: &str) -> Result<PotentialGrid> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim_end() == HEADER => {}
        _ => return Err(Error::syntax(1, 1, format!("expected `{HEADER}`"))),
    }
    let (mut kind, mut unit, mut origin, mut spacing, mut counts) = (None, None, None, None, None);
    let mut meta = Vec::new();
    let mut last = 1;
    loop {
        let Some((ln, line)) = lines.next() else {
            return Err(Error::syntax(last + 1, 1, "missing `data` section"));
        };
        last = ln;
        let toks = tokens(line);
        let Some(&(col, key)) = toks.first() else {
            continue;
        };
        match key {
            "data" => break,
            "kind" | "unit" if toks.len() == 2 => {
                if key == "kind" {
                    kind = Some(toks[1].1.parse::<GridKind>().map_err(|e| Error::syntax(ln, toks[1].0, e.to_string()))?);
                } else {
                    unit = Some((toks[1].1.to_string(), ln, toks[1].0));
                }
            }
            "origin" | "spacing" => {
                let t = triple(&toks, ln, |s, c| parse_f64(s, ln, c))?;
                if t.iter().any(|v| v.is_nan()) || (key == "spacing" && t.iter().any(|&v| v <= 0.0)) {
                    return Err(Error::syntax(ln, col, format!("invalid `{key}`")));
                }
                if key == "origin" {
                    origin = Some(t);
                } else {
                    spacing = Some(t);
                }
            }
            "counts" => {
                counts = Some(triple(&toks, ln, |s, c| {
                    s.parse::<usize>()
                        .ok()
                        .filter(|&n| n > 0)
                        .ok_or_else(|| Error::syntax(ln, c, format!("expected a positive count, found `{s}`")))
                })?);
            }
            "meta" if toks.len() >= 2 => {
                let value = toks.get(2).map(|&(c, _)| line[c - 1..].trim_end()).unwrap_or("");
                meta.push((toks[1].1.to_string(), value.to_string()));
            }
            _ => return Err(Error::syntax(ln, col, format!("unexpected `{key}`"))),
        }
    }
    let missing = |what: &str| Error::syntax(last, 1, format!("missing `{what}` before data"));
    let kind = kind.ok_or_else(|| missing("kind"))?;
    let origin = origin.ok_or_else(|| missing("origin"))?;
    let spacing = spacing.ok_or_else(|| missing("spacing"))?;
    let counts = counts.ok_or_else(|| missing("counts"))?;
    if let Some((u, ln, c)) = unit {
        if u != kind.unit() {
            return Err(Error::syntax(ln, c, format!("unit `{u}` does not match kind {}", kind.name())));
        }
    }
    let total = counts
        .iter()
        .try_fold(1usize, |a, &n| a.checked_mul(n))
        .filter(|&t| t <= text.len())
        .ok_or_else(|| Error::syntax(last, 1, "counts exceed the data present"))?;
    let mut grid = PotentialGrid {
        kind,
        origin,
        spacing,
        counts,
        meta,
        values: Vec::with_capacity(total),
    };
    for (ln, line) in lines {
        let toks = tokens(line);
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 4 {
            return Err(Error::syntax(ln, 1, "expected `x y z value`"));
        }
        let n = grid.values.len();
        if n == total {
            return Err(Error::syntax(ln, 1, "more samples than counts"));
        }
        let expect = grid.point(n % counts[0], (n / counts[0]) % counts[1], n / (counts[0] * counts[1]));
        for a in 0..3 {
            let (c, t) = toks[a];
            let v = parse_f64(t, ln, c)?;
            if v.to_bits() != expect[a].to_bits() {
                return Err(Error::syntax(ln, c, "coordinate does not match the lattice"));
            }
        }
        grid.values.push(parse_f64(toks[3].1, ln, toks[3].0)?);
    }
    if grid.values.len() != total {
        return Err(Error::Format(format!("expected {total} samples, found {}", grid.values.len())));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PotentialGrid {
        PotentialGrid {
            kind: GridKind::Total,
            origin: [-1e-5, 0.1e-6, 3.0],
            spacing: [1e-7, 3.3e-7, 1.0],
            counts: [3, 2, 2],
            meta: vec![("V_rf".into(), "6e2".into()), ("note".into(), "two words".into())],
            values: vec![0.1, -2.5e-300, f64::NAN, 1.0 / 3.0, 7.0, 0.0, -0.0, 1e300, 2.0, 3.0, 4.0, 5.0],
        }
    }

    #[test]
    fn dump_round_trips_bit_exact() {
        let g = sample();
        let text = write_grid(&g);
        let back = parse_grid(&text).unwrap();
        assert_eq!(back.counts, g.counts);
        assert_eq!(back.meta, g.meta);
        for (a, b) in g.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(write_grid(&back), text);
    }

    #[test]
    fn minimum_skips_invalid() {
        let g = sample();
        let (p, v) = g.minimum().unwrap();
        assert_eq!(v, -2.5e-300);
        assert_eq!(p, g.point(1, 0, 0));
    }

    #[test]
    fn malformed_dumps_are_rejected_with_positions() {
        let text = write_grid(&sample());
        let e = parse_grid(&text.replacen("counts 3 2 2", "counts 3 2", 1)).unwrap_err();
        assert!(matches!(e, Error::Syntax { position, .. } if position.line == 6), "{e}");
        let e = parse_grid(&text.replacen("unit eV", "unit V", 1)).unwrap_err();
        assert!(matches!(e, Error::Syntax { position, .. } if position.line == 3));
        let short: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_grid(&short), Err(Error::Format(_))));
        assert!(parse_grid("").is_err());
        assert!(parse_grid(&text.replacen("data", "dat", 1)).is_err());
    }
}
