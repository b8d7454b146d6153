//! Scenario files: a versioned key-value grammar describing one trap, its
//! drive, and the analyses to run on it.
//!
//! ```text
//! # bladetrap-scenario v1
//! analysis = TOTAL_REPORT, D_SWEEP
//!
//! [trap]
//! d = 500 um
//!
//! [voltages]
//! rf_amplitude = 600 V
//! C = -10 V
//!
//! [d_sweep]
//! values = 400 um, 600 um, 1 mm
//! ```
//!
//! Every dimensional value carries a unit suffix; bare numbers are only
//! accepted for counts and ratios. Keys before the first section are global.
//! `#` starts a comment. Lists are comma separated.

mod run;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Position, Result};
use crate::geometry::{symmetric_segments, Blade, ElectrodeId, MeshDensity, Segment, TrapSpec};
use crate::potential::{GridKind, IonSpecies, VoltageSet};
use crate::units::{ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE};

pub use run::{run, AnalysisOutcome, BasisCache, RunOptions, RunSummary};

pub const SCENARIO_HEADER: &str = "# bladetrap-scenario v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Analysis {
    NaCurves,
    PseudoGrid,
    TotalReport,
    DSweep,
    Compensation,
    TiltStudy,
    TranslationStudy,
    NullTrack,
    SolverXcheck,
}

impl Analysis {
    pub const ALL: [Analysis; 9] = [
        Analysis::NaCurves,
        Analysis::PseudoGrid,
        Analysis::TotalReport,
        Analysis::DSweep,
        Analysis::Compensation,
        Analysis::TiltStudy,
        Analysis::TranslationStudy,
        Analysis::NullTrack,
        Analysis::SolverXcheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::NaCurves => "NA_CURVES",
            Analysis::PseudoGrid => "PSEUDO_GRID",
            Analysis::TotalReport => "TOTAL_REPORT",
            Analysis::DSweep => "D_SWEEP",
            Analysis::Compensation => "COMPENSATION",
            Analysis::TiltStudy => "TILT_STUDY",
            Analysis::TranslationStudy => "TRANSLATION_STUDY",
            Analysis::NullTrack => "NULL_TRACK",
            Analysis::SolverXcheck => "SOLVER_XCHECK",
        }
    }

    /// Output subdirectory.
    pub fn dir(self) -> String {
        self.name().to_ascii_lowercase()
    }

    /// Whether the analysis needs no boundary-element solve.
    pub fn is_analytic(self) -> bool {
        self == Analysis::NaCurves
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Analysis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown analysis `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NaSettings {
    pub d_min: f64,
    pub d_max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSettings {
    pub kind: GridKind,
    pub half_width: f64,
    pub step: f64,
    pub z: f64,
    /// Contour levels above the grid minimum (eV, or V for the dc kind).
    pub levels: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompensationSettings {
    pub rod: Vec<f64>,
    pub dc_offset: Vec<f64>,
    /// Locus x-tolerance of the ratio refinement (m).
    pub tolerance: f64,
    /// Linearize around the full voltage set. Otherwise the base is the rf
    /// drive alone with every dc segment and rod grounded.
    pub with_dc: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackSettings {
    pub z_min: f64,
    pub z_max: f64,
    pub step: f64,
    pub max_jump: f64,
}

impl TrackSettings {
    pub fn zs(&self) -> Vec<f64> {
        let n = ((self.z_max - self.z_min) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.z_min + k as f64 * self.step).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TiltSettings {
    pub blade: Blade,
    pub angle: f64,
    /// Slices for contour grids.
    pub z: Vec<f64>,
    pub half_width: f64,
    pub step: f64,
    pub levels: Vec<f64>,
    pub track: TrackSettings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranslationSettings {
    pub blade: Blade,
    /// Radial shifts r − d/2 (m).
    pub shifts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct XcheckSettings {
    pub fdm_step: f64,
    pub bar_mesh: f64,
    pub box_mesh: f64,
}

/// Fully resolved scenario with defaults applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub trap: TrapSpec,
    pub mesh: MeshDensity,
    pub voltages: VoltageSet,
    pub ion: IonSpecies,
    pub analyses: Vec<Analysis>,
    pub output: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub na: NaSettings,
    pub grid: GridSettings,
    pub d_sweep: Vec<f64>,
    pub compensation: CompensationSettings,
    pub tilt: TiltSettings,
    pub translation: TranslationSettings,
    pub track: TrackSettings,
    pub xcheck: XcheckSettings,
}

impl Default for Scenario {
    fn default() -> Self {
        let track = TrackSettings {
            z_min: -10e-3,
            z_max: 10e-3,
            step: 1e-3,
            max_jump: 100e-6,
        };
        Scenario {
            trap: TrapSpec::default(),
            mesh: MeshDensity::default(),
            voltages: VoltageSet::operating_point(),
            ion: IonSpecies::yb171(),
            analyses: Vec::new(),
            output: None,
            cache: None,
            na: NaSettings {
                d_min: 200e-6,
                d_max: 1e-3,
                points: 81,
            },
            grid: GridSettings {
                kind: GridKind::Total,
                half_width: 20e-6,
                step: 0.5e-6,
                z: 0.0,
                levels: vec![0.01, 0.1, 1.0],
            },
            d_sweep: vec![400e-6, 500e-6, 600e-6, 800e-6, 1e-3],
            compensation: CompensationSettings {
                rod: vec![-100.0, -50.0, 0.0, 50.0, 100.0],
                dc_offset: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
                tolerance: 10e-9,
                with_dc: false,
            },
            tilt: TiltSettings {
                blade: Blade::Rf1,
                angle: 1.5f64.to_radians(),
                z: vec![-10e-3, -5e-3, 0.0, 5e-3, 10e-3],
                half_width: 150e-6,
                step: 3e-6,
                levels: vec![0.1, 1.0],
                track: track.clone(),
            },
            translation: TranslationSettings {
                blade: Blade::Rf1,
                shifts: vec![-200e-6, -100e-6, 0.0, 100e-6, 200e-6],
            },
            track,
            xcheck: XcheckSettings {
                fdm_step: 25e-6,
                bar_mesh: 100e-6,
                box_mesh: 200e-6,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dim {
    Length,
    Voltage,
    Frequency,
    Angle,
    Mass,
    Charge,
    /// Energy in eV or a dc potential in V, depending on the grid kind.
    Level,
    Ratio,
    Count,
}

impl Dim {
    fn describe(self) -> &'static str {
        match self {
            Dim::Length => "a length (nm, um, mm, m)",
            Dim::Voltage => "a voltage (mV, V, kV)",
            Dim::Frequency => "a frequency (Hz, kHz, MHz)",
            Dim::Angle => "an angle (deg, rad)",
            Dim::Mass => "a mass (u, kg)",
            Dim::Charge => "a charge (e)",
            Dim::Level => "an energy (neV, meV, eV) or potential (V)",
            Dim::Ratio => "a bare number",
            Dim::Count => "a bare integer",
        }
    }

    /// SI conversion of `unit` as (numerator, denominator), so that
    /// sub-units divide exactly (400 um is 400 / 1e6 m).
    fn factor(self, unit: &str) -> Option<(f64, f64)> {
        let f = match (self, unit) {
            (Dim::Length, "m") => (1.0, 1.0),
            (Dim::Length, "mm") => (1.0, 1e3),
            (Dim::Length, "um" | "µm") => (1.0, 1e6),
            (Dim::Length, "nm") => (1.0, 1e9),
            (Dim::Voltage, "V") => (1.0, 1.0),
            (Dim::Voltage, "mV") => (1.0, 1e3),
            (Dim::Voltage, "kV") => (1e3, 1.0),
            (Dim::Frequency, "Hz") => (1.0, 1.0),
            (Dim::Frequency, "kHz") => (1e3, 1.0),
            (Dim::Frequency, "MHz") => (1e6, 1.0),
            (Dim::Angle, "deg") => (std::f64::consts::PI, 180.0),
            (Dim::Angle, "rad") => (1.0, 1.0),
            (Dim::Mass, "u") => (ATOMIC_MASS_UNIT, 1.0),
            (Dim::Mass, "kg") => (1.0, 1.0),
            (Dim::Charge, "e") => (ELEMENTARY_CHARGE, 1.0),
            (Dim::Level, "eV" | "V") => (1.0, 1.0),
            (Dim::Level, "meV") => (1.0, 1e3),
            (Dim::Level, "neV") => (1.0, 1e9),
            (Dim::Ratio | Dim::Count, "") => (1.0, 1.0),
            _ => return None,
        };
        Some(f)
    }
}

/// One comma-separated item of a value, with its column.
struct Item<'a> {
    text: &'a str,
    col: usize,
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    key_col: usize,
    items: Vec<Item<'a>>,
}

impl Entry<'_> {
    fn pos(&self, col: usize) -> Position {
        Position { line: self.line, column: col }
    }

    fn numbers(&self, dim: Dim) -> Result<Vec<f64>> {
        self.items
            .iter()
            .map(|it| {
                let (num, unit) = match it.text.find(char::is_whitespace) {
                    Some(k) => (&it.text[..k], it.text[k..].trim()),
                    None => (it.text, ""),
                };
                let v: f64 = num
                    .parse()
                    .map_err(|_| Error::syntax(self.line, it.col, format!("expected a number, found `{num}`")))?;
                if !v.is_finite() {
                    return Err(Error::syntax(self.line, it.col, "value must be finite"));
                }
                let (num, den) = dim.factor(unit).ok_or_else(|| Error::UnitMismatch {
                    position: self.pos(it.col),
                    key: self.key.to_string(),
                    expected: dim.describe(),
                    found: if unit.is_empty() { "no unit".into() } else { unit.to_string() },
                })?;
                if dim == Dim::Count && (v.fract() != 0.0 || v < 0.0) {
                    return Err(Error::syntax(self.line, it.col, "expected a non-negative integer"));
                }
                Ok(v * num / den)
            })
            .collect()
    }

    fn number(&self, dim: Dim) -> Result<f64> {
        let v = self.numbers(dim)?;
        if v.len() != 1 {
            return Err(Error::syntax(self.line, self.key_col, format!("`{}` takes a single value", self.key)));
        }
        Ok(v[0])
    }

    /// A list whose entries are distinct.
    fn distinct(&self, dim: Dim) -> Result<Vec<f64>> {
        let v = self.numbers(dim)?;
        for (i, a) in v.iter().enumerate() {
            if v[..i].contains(a) {
                return Err(Error::syntax(self.line, self.items[i].col, "sweep values must be distinct"));
            }
        }
        Ok(v)
    }

    fn word(&self) -> Result<&str> {
        match self.items.as_slice() {
            [it] if !it.text.is_empty() => Ok(it.text),
            _ => Err(Error::syntax(self.line, self.key_col, format!("`{}` takes a single name", self.key))),
        }
    }

    fn parse_word<T: FromStr>(&self) -> Result<T> {
        let w = self.word()?;
        w.parse()
            .map_err(|_| Error::syntax(self.line, self.items[0].col, format!("invalid value `{w}` for `{}`", self.key)))
    }
}

fn split_items(value: &str, col0: usize) -> Vec<Item<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    for part in value.split(',') {
        let lead = part.len() - part.trim_start().len();
        out.push(Item {
            text: part.trim(),
            col: col0 + start + lead,
        });
        start += part.len() + 1;
    }
    out
}

const SECTIONS: [&str; 13] = [
    "", "trap", "mesh", "voltages", "ion", "na_curves", "pseudo_grid", "d_sweep", "compensation", "tilt_study",
    "translation_study", "null_track", "solver_xcheck",
];

fn segment_key(key: &str) -> Option<Segment> {
    let mut c = key.chars();
    match (c.next(), c.next()) {
        (Some(l), None) => Segment::from_letter(l),
        _ => None,
    }
}

fn track_key(t: &mut TrackSettings, e: &Entry, prefix: &str) -> Result<bool> {
    let Some(key) = e.key.strip_prefix(prefix) else {
        return Ok(false);
    };
    match key {
        "z_min" => t.z_min = e.number(Dim::Length)?,
        "z_max" => t.z_max = e.number(Dim::Length)?,
        "step" => t.step = e.number(Dim::Length)?,
        "max_jump" => t.max_jump = e.number(Dim::Length)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn apply(s: &mut Scenario, section: &str, e: &Entry, segments: &mut (f64, f64)) -> Result<()> {
    let t = &mut s.trap;
    let v = &mut s.voltages;
    match (section, e.key) {
        ("", "analysis") => {
            for it in &e.items {
                let a: Analysis = it.text.parse().map_err(|_| {
                    Error::syntax(e.line, it.col, format!("unknown analysis `{}`", it.text))
                })?;
                if !s.analyses.contains(&a) {
                    s.analyses.push(a);
                }
            }
        }
        ("", "output") => s.output = Some(PathBuf::from(e.word()?)),
        ("", "cache") => s.cache = Some(PathBuf::from(e.word()?)),
        ("trap", "d") => t.blade_distance = e.number(Dim::Length)?,
        ("trap", "blade_angle") => t.blade_angle = e.number(Dim::Angle)?,
        ("trap", "tip_width") => t.tip_width = e.number(Dim::Length)?,
        ("trap", "blade_thickness") => t.blade_thickness = e.number(Dim::Length)?,
        ("trap", "taper_length") => t.taper_length = e.number(Dim::Length)?,
        ("trap", "blade_length") => t.blade_length = e.number(Dim::Length)?,
        ("trap", "blade_height") => t.blade_height = e.number(Dim::Length)?,
        ("trap", "center_segment") => segments.0 = e.number(Dim::Length)?,
        ("trap", "inner_segment") => segments.1 = e.number(Dim::Length)?,
        ("trap", "rod_diameter") => t.rod_diameter = e.number(Dim::Length)?,
        ("trap", "rod_length") => t.rod_length = e.number(Dim::Length)?,
        ("trap", "rod_x") => {
            let x = e.number(Dim::Length)?;
            t.rod_centers[0][0] = x;
            t.rod_centers[1][0] = x;
        }
        ("trap", "rod_y") => {
            let y = e.number(Dim::Length)?;
            t.rod_centers[0][1] = y;
            t.rod_centers[1][1] = -y;
        }
        ("mesh", "min_edge") => s.mesh.min_edge = e.number(Dim::Length)?,
        ("mesh", "max_edge") => s.mesh.max_edge = e.number(Dim::Length)?,
        ("mesh", "growth") => s.mesh.growth = e.number(Dim::Ratio)?,
        ("mesh", "refine") => s.mesh.refine = e.number(Dim::Ratio)?,
        ("mesh", "rod_sides") => s.mesh.rod_sides = e.number(Dim::Count)? as usize,
        ("voltages", "rf_amplitude") => v.rf_amplitude = e.number(Dim::Voltage)?,
        ("voltages", "rf_frequency") => v.rf_omega = 2.0 * std::f64::consts::PI * e.number(Dim::Frequency)?,
        ("voltages", "rod") => v.rods = [e.number(Dim::Voltage)?; 2],
        ("voltages", "rod_1") => v.rods[0] = e.number(Dim::Voltage)?,
        ("voltages", "rod_2") => v.rods[1] = e.number(Dim::Voltage)?,
        ("voltages", key) if segment_key(key).is_some() => {
            let seg = segment_key(key).unwrap();
            let x = e.number(Dim::Voltage)?;
            for blade in [1, 2] {
                v.dc.insert(ElectrodeId::Dc(blade, seg), x);
            }
        }
        ("voltages", key) if key.parse::<ElectrodeId>().is_ok_and(|id| id.is_dc()) => {
            v.dc.insert(key.parse().unwrap(), e.number(Dim::Voltage)?);
        }
        ("ion", "mass") => s.ion.mass = e.number(Dim::Mass)?,
        ("ion", "charge") => s.ion.charge = e.number(Dim::Charge)?,
        ("na_curves", "d_min") => s.na.d_min = e.number(Dim::Length)?,
        ("na_curves", "d_max") => s.na.d_max = e.number(Dim::Length)?,
        ("na_curves", "points") => s.na.points = e.number(Dim::Count)? as usize,
        ("pseudo_grid", "kind") => s.grid.kind = e.parse_word()?,
        ("pseudo_grid", "half_width") => s.grid.half_width = e.number(Dim::Length)?,
        ("pseudo_grid", "step") => s.grid.step = e.number(Dim::Length)?,
        ("pseudo_grid", "z") => s.grid.z = e.number(Dim::Length)?,
        ("pseudo_grid", "levels") => s.grid.levels = e.distinct(Dim::Level)?,
        ("d_sweep", "values") => s.d_sweep = e.distinct(Dim::Length)?,
        ("compensation", "rod") => s.compensation.rod = e.distinct(Dim::Voltage)?,
        ("compensation", "dc_offset") => s.compensation.dc_offset = e.distinct(Dim::Voltage)?,
        ("compensation", "tolerance") => s.compensation.tolerance = e.number(Dim::Length)?,
        ("compensation", "with_dc") => s.compensation.with_dc = e.parse_word()?,
        ("tilt_study", "blade") => s.tilt.blade = e.parse_word()?,
        ("tilt_study", "angle") => s.tilt.angle = e.number(Dim::Angle)?,
        ("tilt_study", "z") => s.tilt.z = e.distinct(Dim::Length)?,
        ("tilt_study", "half_width") => s.tilt.half_width = e.number(Dim::Length)?,
        ("tilt_study", "step") => s.tilt.step = e.number(Dim::Length)?,
        ("tilt_study", "levels") => s.tilt.levels = e.distinct(Dim::Level)?,
        ("tilt_study", _) if track_key(&mut s.tilt.track, e, "track_")? => {}
        ("translation_study", "blade") => s.translation.blade = e.parse_word()?,
        ("translation_study", "shift") => s.translation.shifts = e.distinct(Dim::Length)?,
        ("null_track", _) if track_key(&mut s.track, e, "")? => {}
        ("solver_xcheck", "fdm_step") => s.xcheck.fdm_step = e.number(Dim::Length)?,
        ("solver_xcheck", "bar_mesh") => s.xcheck.bar_mesh = e.number(Dim::Length)?,
        ("solver_xcheck", "box_mesh") => s.xcheck.box_mesh = e.number(Dim::Length)?,
        _ => {
            let place = if section.is_empty() { "at top level".to_string() } else { format!("in [{section}]") };
            return Err(Error::syntax(e.line, e.key_col, format!("unknown key `{}` {place}", e.key)));
        }
    }
    Ok(())
}

/// Parses a scenario and applies defaults for everything not given.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == SCENARIO_HEADER => {}
        Some((_, l)) if l.starts_with("# bladetrap-scenario") => {
            return Err(Error::syntax(1, 1, format!("unsupported scenario version `{}`", l.trim())))
        }
        _ => return Err(Error::syntax(1, 1, format!("first line must be `{SCENARIO_HEADER}`"))),
    }
    let mut s = Scenario::default();
    let mut section = "";
    let mut seen: Vec<(String, String)> = Vec::new();
    let mut segments = (crate::geometry::DEFAULT_CENTER_SEGMENT, crate::geometry::DEFAULT_INNER_SEGMENT);
    let mut last_line = 1;
    for (i, raw) in lines {
        let line = i + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len() + 1;
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::syntax(line, indent + trimmed.len(), "expected `]`"))?
                .trim();
            section = SECTIONS[1..]
                .iter()
                .find(|&&s| s == name)
                .ok_or_else(|| Error::syntax(line, indent + 1, format!("unknown section [{name}]")))?;
            continue;
        }
        let eq = content
            .find('=')
            .ok_or_else(|| Error::syntax(line, indent, "expected `key = value`"))?;
        let key = content[..eq].trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::syntax(line, indent, format!("invalid key `{key}`")));
        }
        let value = &content[eq + 1..];
        if value.trim().is_empty() {
            return Err(Error::syntax(line, eq + 2, format!("`{key}` has no value")));
        }
        if seen.iter().any(|(a, b)| a == section && b == key) {
            return Err(Error::syntax(line, indent, format!("`{key}` given twice")));
        }
        seen.push((section.to_string(), key.to_string()));
        let entry = Entry {
            line,
            key,
            key_col: indent,
            items: split_items(value, eq + 2),
        };
        apply(&mut s, section, &entry, &mut segments)?;
    }
    s.trap.segment_bounds = symmetric_segments(s.trap.blade_length, segments.0, segments.1, s.trap.tip_width);
    s.trap.rod_length = s.trap.rod_length.max(0.0);
    if s.analyses.is_empty() {
        return Err(Error::syntax(last_line, 1, "no `analysis` requested"));
    }
    s.validate()?;
    Ok(s)
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.trap.validate()?;
        self.voltages.validate()?;
        IonSpecies::new(self.ion.mass, self.ion.charge)?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.mesh.min_edge > 0.0 && self.mesh.max_edge >= self.mesh.min_edge && self.mesh.refine > 0.0) {
            return bad("mesh edges must satisfy 0 < min_edge <= max_edge and refine > 0");
        }
        if self.mesh.rod_sides < 3 {
            return bad("rods need at least 3 sides");
        }
        if self.grid.step <= 0.0 || self.tilt.step <= 0.0 || self.grid.half_width <= 0.0 || self.tilt.half_width <= 0.0 {
            return bad("grid widths and steps must be positive");
        }
        for t in [&self.track, &self.tilt.track] {
            if !(t.step > 0.0 && t.z_max >= t.z_min && t.max_jump > 0.0) {
                return bad("null track needs z_min <= z_max, step > 0 and max_jump > 0");
            }
        }
        if self.d_sweep.iter().any(|&d| d <= 0.0) {
            return bad("swept blade distances must be positive");
        }
        if !(self.xcheck.fdm_step > 0.0 && self.xcheck.bar_mesh > 0.0 && self.xcheck.box_mesh > 0.0) {
            return bad("cross-check spacings must be positive");
        }
        Ok(())
    }

    /// Normalized `key value` listing of every resolved setting.
    pub fn describe(&self) -> String {
        use crate::format::fmt_f64 as f;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push(' ');
            out.push_str(&v);
            out.push('\n');
        };
        let list = |v: &[f64]| v.iter().map(|&x| f(x)).collect::<Vec<_>>().join(",");
        kv("analyses", self.analyses.iter().map(|a| a.name()).collect::<Vec<_>>().join(","));
        let t = &self.trap;
        for (k, v) in [
            ("d", t.blade_distance),
            ("blade_angle", t.blade_angle),
            ("tip_width", t.tip_width),
            ("blade_thickness", t.blade_thickness),
            ("taper_length", t.taper_length),
            ("blade_length", t.blade_length),
            ("blade_height", t.blade_height),
            ("rod_diameter", t.rod_diameter),
            ("rod_length", t.rod_length),
        ] {
            kv(k, f(v));
        }
        kv("segments", t.segment_bounds.iter().map(|s| format!("{}:{}", f(s.0), f(s.1))).collect::<Vec<_>>().join(","));
        kv("rods", t.rod_centers.iter().map(|c| format!("{}:{}", f(c[0]), f(c[1]))).collect::<Vec<_>>().join(","));
        let m = &self.mesh;
        kv("mesh", format!("{} {} {} {} {}", f(m.min_edge), f(m.growth), f(m.max_edge), f(m.refine), m.rod_sides));
        for (k, v) in self.voltages.describe() {
            kv(&k, v);
        }
        kv("ion", format!("{} {}", f(self.ion.mass), f(self.ion.charge)));
        kv("d_sweep", list(&self.d_sweep));
        let c = &self.compensation;
        kv("compensation", format!("{} | {} | {} | with_dc={}", list(&c.rod), list(&c.dc_offset), f(c.tolerance), c.with_dc));
        out
    }
}
