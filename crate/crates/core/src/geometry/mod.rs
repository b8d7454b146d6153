//! Parametric description of the four-blade trap with biasing rods.
//!
//! Coordinates: z is the trap axis, the origin is the nominal trap center.
//! The x axis bisects the wide gap between the dc blade at x>0, y>0 and the
//! rf blade at x>0, y<0, so with the default 120 degree blade angle the
//! blades point along 60, 120, 240 and 300 degrees.

mod mesh;
pub mod primitives;
mod soup;
mod transform;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use mesh::{
    apply_misalignment, build_trap, graded_nodes, Conductor, ElectrodeMesh, MeshDensity, Panel,
    Prism,
};
pub use soup::{read_soup, write_soup};
pub use transform::RigidTransform;

/// One of the five axial segments of a dc blade, ordered from -z to +z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Segment {
    A,
    B,
    C,
    D,
    E,
}

impl Segment {
    pub const ALL: [Segment; 5] = [Segment::A, Segment::B, Segment::C, Segment::D, Segment::E];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }

    pub fn from_letter(c: char) -> Option<Segment> {
        match c.to_ascii_uppercase() {
            'A' => Some(Segment::A),
            'B' => Some(Segment::B),
            'C' => Some(Segment::C),
            'D' => Some(Segment::D),
            'E' => Some(Segment::E),
            _ => None,
        }
    }
}

/// Electrode identity. `Aux` labels conductors outside the standard trap
/// (validation plates, enclosures) so the solver can be exercised on them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElectrodeId {
    RfBlade(u8),
    Dc(u8, Segment),
    Rod(u8),
    Aux(u16),
}

impl ElectrodeId {
    /// The fourteen electrodes of the standard trap, in canonical order.
    pub fn standard() -> Vec<ElectrodeId> {
        let mut ids = vec![ElectrodeId::RfBlade(1), ElectrodeId::RfBlade(2)];
        for blade in [1, 2] {
            ids.extend(Segment::ALL.iter().map(|&s| ElectrodeId::Dc(blade, s)));
        }
        ids.push(ElectrodeId::Rod(1));
        ids.push(ElectrodeId::Rod(2));
        ids
    }

    pub fn is_rf(self) -> bool {
        matches!(self, ElectrodeId::RfBlade(_))
    }

    pub fn is_dc(self) -> bool {
        matches!(self, ElectrodeId::Dc(..))
    }

    pub fn is_rod(self) -> bool {
        matches!(self, ElectrodeId::Rod(_))
    }

    /// Blade carrying this electrode, if any.
    pub fn blade(self) -> Option<Blade> {
        match self {
            ElectrodeId::RfBlade(1) => Some(Blade::Rf1),
            ElectrodeId::RfBlade(2) => Some(Blade::Rf2),
            ElectrodeId::Dc(1, _) => Some(Blade::Dc1),
            ElectrodeId::Dc(2, _) => Some(Blade::Dc2),
            _ => None,
        }
    }
}

impl fmt::Display for ElectrodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElectrodeId::RfBlade(n) => write!(f, "RF_BLADE_{n}"),
            ElectrodeId::Dc(n, s) => write!(f, "DC_{n}{}", s.letter()),
            ElectrodeId::Rod(n) => write!(f, "ROD_{n}"),
            ElectrodeId::Aux(n) => write!(f, "AUX_{n}"),
        }
    }
}

impl FromStr for ElectrodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownElectrode(s.to_string());
        let index = |digits: &str, max: u8| -> Result<u8> {
            match digits.parse::<u8>() {
                Ok(n) if (1..=max).contains(&n) => Ok(n),
                _ => Err(bad()),
            }
        };
        if let Some(rest) = s.strip_prefix("RF_BLADE_") {
            return Ok(ElectrodeId::RfBlade(index(rest, 2)?));
        }
        if let Some(rest) = s.strip_prefix("ROD_") {
            return Ok(ElectrodeId::Rod(index(rest, 2)?));
        }
        if let Some(rest) = s.strip_prefix("AUX_") {
            return rest.parse::<u16>().map(ElectrodeId::Aux).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("DC_") {
            let mut chars = rest.chars();
            let (Some(n), Some(seg), None) = (chars.next(), chars.next(), chars.next()) else {
                return Err(bad());
            };
            let blade = index(&n.to_string(), 2)?;
            let seg = Segment::from_letter(seg).filter(|_| seg.is_ascii_uppercase()).ok_or_else(bad)?;
            return Ok(ElectrodeId::Dc(blade, seg));
        }
        Err(bad())
    }
}

/// The four blades. `Rf1` sits at x<0, y>0 and `Dc1` at x>0, y>0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Blade {
    Rf1,
    Rf2,
    Dc1,
    Dc2,
}

impl Blade {
    pub const ALL: [Blade; 4] = [Blade::Rf1, Blade::Rf2, Blade::Dc1, Blade::Dc2];

    /// Direction of the blade midplane in the xy plane, measured from +x.
    pub fn direction(self, blade_angle: f64) -> f64 {
        let half = 0.5 * blade_angle;
        match self {
            Blade::Dc1 => half,
            Blade::Rf1 => PI - half,
            Blade::Dc2 => PI + half,
            Blade::Rf2 => 2.0 * PI - half,
        }
    }

    pub fn electrodes(self) -> Vec<ElectrodeId> {
        match self {
            Blade::Rf1 => vec![ElectrodeId::RfBlade(1)],
            Blade::Rf2 => vec![ElectrodeId::RfBlade(2)],
            Blade::Dc1 => Segment::ALL.iter().map(|&s| ElectrodeId::Dc(1, s)).collect(),
            Blade::Dc2 => Segment::ALL.iter().map(|&s| ElectrodeId::Dc(2, s)).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Blade::Rf1 => "RF_BLADE_1",
            Blade::Rf2 => "RF_BLADE_2",
            Blade::Dc1 => "DC_1",
            Blade::Dc2 => "DC_2",
        }
    }
}

impl FromStr for Blade {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RF_BLADE_1" | "RF_1" => Ok(Blade::Rf1),
            "RF_BLADE_2" | "RF_2" => Ok(Blade::Rf2),
            "DC_1" | "DC_BLADE_1" => Ok(Blade::Dc1),
            "DC_2" | "DC_BLADE_2" => Ok(Blade::Dc2),
            _ => Err(Error::UnknownElectrode(s.to_string())),
        }
    }
}

/// Where a misalignment rotation is anchored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pivot {
    /// Volume centroid of the nominal blade.
    Centroid,
    Point(Vector3<f64>),
}

/// Rigid-body error of one blade: rotation about `axis` through `pivot`,
/// followed by `translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Misalignment {
    pub axis: Vector3<f64>,
    pub angle: f64,
    pub pivot: Pivot,
    pub translation: Vector3<f64>,
}

impl Default for Misalignment {
    fn default() -> Self {
        Misalignment {
            axis: Vector3::x(),
            angle: 0.0,
            pivot: Pivot::Centroid,
            translation: Vector3::zeros(),
        }
    }
}

impl Misalignment {
    /// Rotation about an axis parallel to x through the blade centroid.
    pub fn tilt(angle: f64) -> Self {
        Misalignment {
            angle,
            ..Default::default()
        }
    }

    /// Pure translation of the blade along its own outward direction.
    pub fn radial_shift(blade: Blade, blade_angle: f64, distance: f64) -> Self {
        let a = blade.direction(blade_angle);
        Misalignment {
            translation: Vector3::new(a.cos(), a.sin(), 0.0) * distance,
            ..Default::default()
        }
    }

    pub fn is_identity(&self) -> bool {
        self.angle == 0.0 && self.translation == Vector3::zeros()
    }

    pub fn resolve(&self, centroid: Vector3<f64>) -> Result<RigidTransform> {
        let pivot = match self.pivot {
            Pivot::Centroid => centroid,
            Pivot::Point(p) => p,
        };
        RigidTransform::about_pivot(self.axis, self.angle, pivot, self.translation)
    }
}

/// Full parametric description of the trap. Lengths in m, angles in rad.
#[derive(Clone, Debug, PartialEq)]
pub struct TrapSpec {
    /// L
    pub blade_length: f64,
    /// T
    pub blade_thickness: f64,
    /// t; width of the flat tip face.
    pub tip_width: f64,
    /// l
    pub taper_length: f64,
    /// Angle between adjacent rf and dc blades across the x axis.
    pub blade_angle: f64,
    /// Diagonal tip-to-tip distance d.
    pub blade_distance: f64,
    /// Extent of a blade from its tip to its back face.
    pub blade_height: f64,
    /// z-intervals of dc segments A..E.
    pub segment_bounds: [(f64, f64); 5],
    pub rod_diameter: f64,
    pub rod_centers: [[f64; 2]; 2],
    pub rod_length: f64,
    pub misalignments: BTreeMap<Blade, Misalignment>,
}

/// Default dc segment widths: center segment C and the inner pair B/D.
/// Grooves between segments have width `tip_width`.
pub const DEFAULT_CENTER_SEGMENT: f64 = 0.3e-3;
pub const DEFAULT_INNER_SEGMENT: f64 = 0.3e-3;

impl Default for TrapSpec {
    fn default() -> Self {
        let blade_length = 25.2e-3;
        let tip_width = 50e-6;
        TrapSpec {
            blade_length,
            blade_thickness: 300e-6,
            tip_width,
            taper_length: 1e-3,
            blade_angle: 120f64.to_radians(),
            blade_distance: 500e-6,
            blade_height: 8e-3,
            segment_bounds: symmetric_segments(
                blade_length,
                DEFAULT_CENTER_SEGMENT,
                DEFAULT_INNER_SEGMENT,
                tip_width,
            ),
            rod_diameter: 1e-3,
            rod_centers: [[-2.37e-3, 1.81e-3], [-2.37e-3, -1.81e-3]],
            rod_length: blade_length,
            misalignments: BTreeMap::new(),
        }
    }
}

/// Segment bounds for a z-symmetric layout: C of width `center`, B and D of
/// width `inner`, grooves of width `groove`, and A/E running to the blade ends.
pub fn symmetric_segments(length: f64, center: f64, inner: f64, groove: f64) -> [(f64, f64); 5] {
    let c = 0.5 * center;
    let b0 = c + groove;
    let b1 = b0 + inner;
    let a0 = b1 + groove;
    let end = 0.5 * length;
    [(-end, -a0), (-b1, -b0), (-c, c), (b0, b1), (a0, end)]
}

/// Segment layout with equal widths `(L - 4 g) / 5`.
pub fn equal_segments(length: f64, groove: f64) -> [(f64, f64); 5] {
    let w = (length - 4.0 * groove) / 5.0;
    symmetric_segments(length, w, w, groove)
}

impl TrapSpec {
    pub fn with_blade_distance(mut self, d: f64) -> Self {
        self.blade_distance = d;
        self
    }

    pub fn with_misalignment(mut self, blade: Blade, m: Misalignment) -> Self {
        self.misalignments.insert(blade, m);
        self
    }

    /// Cross-section of a blade in its local frame (u along the blade
    /// direction, w across it), counter-clockwise.
    pub fn blade_profile(&self) -> Vec<[f64; 2]> {
        let tip = 0.5 * self.blade_distance;
        let body = tip + self.taper_length;
        let back = tip + self.blade_height;
        let (ht, hb) = (0.5 * self.tip_width, 0.5 * self.blade_thickness);
        vec![
            [tip, -ht],
            [body, -hb],
            [back, -hb],
            [back, hb],
            [body, hb],
            [tip, ht],
        ]
    }

    /// z-extent of a blade (the rf blades run the full blade length).
    pub fn blade_z_extent(&self) -> (f64, f64) {
        (-0.5 * self.blade_length, 0.5 * self.blade_length)
    }

    /// Nominal volume centroid of a blade.
    pub fn blade_centroid(&self, blade: Blade) -> Vector3<f64> {
        let (uc, _) = polygon_centroid(&self.blade_profile());
        let a = blade.direction(self.blade_angle);
        let z = match blade {
            Blade::Rf1 | Blade::Rf2 => {
                let (z0, z1) = self.blade_z_extent();
                0.5 * (z0 + z1)
            }
            Blade::Dc1 | Blade::Dc2 => {
                let (mut num, mut den) = (0.0, 0.0);
                for (z0, z1) in self.segment_bounds {
                    num += 0.5 * (z0 + z1) * (z1 - z0);
                    den += z1 - z0;
                }
                num / den
            }
        };
        Vector3::new(uc * a.cos(), uc * a.sin(), z)
    }

    pub fn misalignment(&self, blade: Blade) -> Misalignment {
        self.misalignments.get(&blade).copied().unwrap_or_default()
    }

    /// Checks every structural invariant, naming the first one violated.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        let all_finite = [
            self.blade_length,
            self.blade_thickness,
            self.tip_width,
            self.taper_length,
            self.blade_angle,
            self.blade_distance,
            self.blade_height,
            self.rod_diameter,
            self.rod_length,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("all dimensions must be finite".into());
        }
        if !(self.tip_width > 0.0) {
            return bad(format!("tip width t = {:e} m must be positive", self.tip_width));
        }
        if !(self.blade_thickness > self.tip_width) {
            return bad(format!(
                "blade thickness T = {:e} m must exceed tip width t = {:e} m",
                self.blade_thickness, self.tip_width
            ));
        }
        if !(self.taper_length > 0.0) {
            return bad("taper length l must be positive".into());
        }
        if !(self.blade_distance > 0.0) {
            return bad("blade distance d must be positive".into());
        }
        if !(self.blade_angle > 0.0 && self.blade_angle < PI) {
            return bad(format!(
                "blade angle {:.3} deg must lie strictly between 0 and 180",
                self.blade_angle.to_degrees()
            ));
        }
        if !(self.blade_height > self.taper_length) {
            return bad("blade height must exceed the taper length".into());
        }
        if !(self.blade_length > 0.0) {
            return bad("blade length L must be positive".into());
        }
        self.validate_segments()?;
        self.validate_rods()?;
        for (blade, m) in &self.misalignments {
            let finite = m.angle.is_finite()
                && m.translation.iter().all(|v| v.is_finite())
                && m.axis.iter().all(|v| v.is_finite());
            if !finite {
                return bad(format!("misalignment of {} is not finite", blade.name()));
            }
            if m.angle != 0.0 && m.axis.norm() == 0.0 {
                return bad(format!("misalignment of {} has a zero rotation axis", blade.name()));
            }
        }
        Ok(())
    }

    fn validate_segments(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        let half = 0.5 * self.blade_length;
        let eps = 1e-9 * self.blade_length;
        for (i, &(z0, z1)) in self.segment_bounds.iter().enumerate() {
            let seg = Segment::ALL[i].letter();
            if !(z0.is_finite() && z1.is_finite() && z1 > z0) {
                return bad(format!("segment {seg} has an empty or invalid z-interval"));
            }
            if z0 < -half - eps || z1 > half + eps {
                return bad(format!("segment {seg} extends beyond the blade length"));
            }
        }
        for i in 0..4 {
            if self.segment_bounds[i].1 > self.segment_bounds[i + 1].0 {
                return bad(format!(
                    "segments {} and {} overlap or are out of order",
                    Segment::ALL[i].letter(),
                    Segment::ALL[i + 1].letter()
                ));
            }
        }
        for i in 0..5 {
            let (z0, z1) = self.segment_bounds[i];
            let (m0, m1) = self.segment_bounds[4 - i];
            if (z0 + m1).abs() > eps || (z1 + m0).abs() > eps {
                return bad(format!(
                    "segment layout is not symmetric about z = 0 (segment {})",
                    Segment::ALL[i].letter()
                ));
            }
        }
        Ok(())
    }

    fn validate_rods(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if !(self.rod_diameter > 0.0) {
            return bad("rod diameter must be positive".into());
        }
        if !(self.rod_length > 0.0) {
            return bad("rod length must be positive".into());
        }
        let r = 0.5 * self.rod_diameter;
        let profile = self.blade_profile();
        for (k, c) in self.rod_centers.iter().enumerate() {
            if !(c[0].is_finite() && c[1].is_finite()) {
                return bad(format!("rod {} center is not finite", k + 1));
            }
            for blade in Blade::ALL {
                let a = blade.direction(self.blade_angle);
                // rod center in the blade frame
                let u = c[0] * a.cos() + c[1] * a.sin();
                let w = -c[0] * a.sin() + c[1] * a.cos();
                let dist = polygon_distance(&profile, [u, w]);
                if dist <= r {
                    return bad(format!(
                        "rod {} intersects the blade envelope of {}",
                        k + 1,
                        blade.name()
                    ));
                }
            }
        }
        let [p, q] = self.rod_centers;
        if ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() <= 2.0 * r {
            return bad("the two rods overlap".into());
        }
        Ok(())
    }
}

/// Area centroid of a simple polygon.
pub(crate) fn polygon_centroid(poly: &[[f64; 2]]) -> (f64, f64) {
    let n = poly.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        let cross = x0 * y1 - x1 * y0;
        a += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    (cx / (3.0 * a), cy / (3.0 * a))
}

pub(crate) fn point_in_polygon(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let [xi, yi] = poly[i];
        let [xj, yj] = poly[j];
        if (yi > p[1]) != (yj > p[1]) && p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Signed-free distance from a point to a polygon region (0 inside).
pub(crate) fn polygon_distance(poly: &[[f64; 2]], p: [f64; 2]) -> f64 {
    if point_in_polygon(poly, p) {
        return 0.0;
    }
    let n = poly.len();
    (0..n)
        .map(|i| segment_distance(poly[i], poly[(i + 1) % n], p))
        .fold(f64::INFINITY, f64::min)
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (ex, ey) = (a[0] + s * dx - p[0], a[1] + s * dy - p[1]);
    (ex * ex + ey * ey).sqrt()
}
