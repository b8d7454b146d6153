//! Closed-form numerical apertures through the blade gaps and past the
//! biasing rods.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::TrapSpec;

/// Aperture of the vacuum-chamber viewport, reported alongside.
pub const CHAMBER_NA: f64 = 0.40;

/// Feature that limits the light cone along an axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Limit {
    /// Edge of the flat tip face.
    Point1,
    /// Shoulder where the taper meets the full blade thickness.
    Point2,
    Rod,
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Limit::Point1 => "POINT_1",
            Limit::Point2 => "POINT_2",
            Limit::Rod => "ROD",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NaResult {
    pub na_x_1: f64,
    pub na_y_1: f64,
    pub na_x_2: f64,
    pub na_y_2: f64,
    pub na_rod: f64,
    pub effective_na_x_pos: f64,
    pub effective_na_x_neg: f64,
    pub effective_na_y: f64,
    pub limit_x_pos: Limit,
    pub limit_x_neg: Limit,
    pub limit_y: Limit,
}

/// Blade distance at which the tip edge and the taper shoulder subtend the
/// same angle, 2 l t / (T − t).
pub fn critical_distance(spec: &TrapSpec) -> Result<f64> {
    let (t, big_t) = (spec.tip_width, spec.blade_thickness);
    if !(big_t > t) {
        return Err(Error::DegenerateTaper { thickness: big_t, tip: t });
    }
    Ok(2.0 * spec.taper_length * t / (big_t - t))
}

fn cone(half_gap: f64, occluder: f64, axis: &'static str) -> Result<f64> {
    let a = half_gap - occluder;
    if a <= 0.0 {
        return Err(Error::Occluded(axis));
    }
    Ok(a.sin())
}

/// Half-angle NA of the widest cone along −x that misses both rod
/// circles (tangent construction in the xy plane).
pub fn rod_na(spec: &TrapSpec) -> Result<f64> {
    let r = 0.5 * spec.rod_diameter;
    let mut limit = FRAC_PI_2;
    for [x, y] in spec.rod_centers {
        let dist = x.hypot(y);
        if dist <= r {
            return Err(Error::Occluded("-x (rod around the origin)"));
        }
        // angle between the rod centre and the −x direction
        let off = y.abs().atan2(-x);
        limit = limit.min(off - (r / dist).asin());
    }
    cone(limit, 0.0, "-x (rods)")
}

/// NA candidates for the blade gaps around ±x and +y. The gap around x
/// spans the blade angle θ, the one around y spans π − θ.
pub fn numerical_apertures(spec: &TrapSpec) -> Result<NaResult> {
    spec.validate()?;
    let d = spec.blade_distance;
    let half_x = 0.5 * spec.blade_angle;
    let half_y = FRAC_PI_2 - half_x;
    let p1 = (spec.tip_width / d).atan();
    let p2 = (spec.blade_thickness / (2.0 * spec.taper_length + d)).atan();
    let na_x_1 = cone(half_x, p1, "x")?;
    let na_x_2 = cone(half_x, p2, "x")?;
    let na_y_1 = cone(half_y, p1, "y")?;
    let na_y_2 = cone(half_y, p2, "y")?;
    let na_rod = rod_na(spec)?;
    let pick = |a: f64, b: f64| if a <= b { (a, Limit::Point1) } else { (b, Limit::Point2) };
    let (effective_na_x_pos, limit_x_pos) = pick(na_x_1, na_x_2);
    let (effective_na_y, limit_y) = pick(na_y_1, na_y_2);
    let (effective_na_x_neg, limit_x_neg) = if na_rod < effective_na_x_pos {
        (na_rod, Limit::Rod)
    } else {
        (effective_na_x_pos, limit_x_pos)
    };
    Ok(NaResult {
        na_x_1,
        na_y_1,
        na_x_2,
        na_y_2,
        na_rod,
        effective_na_x_pos,
        effective_na_x_neg,
        effective_na_y,
        limit_x_pos,
        limit_x_neg,
        limit_y,
    })
}

/// NA candidates at `n` evenly spaced blade distances in [d_min, d_max].
pub fn na_curves(spec: &TrapSpec, d_min: f64, d_max: f64, n: usize) -> Result<Vec<(f64, NaResult)>> {
    if n < 2 || !(d_max > d_min && d_min > 0.0) {
        return Err(Error::InvalidArgument("NA curve needs 0 < d_min < d_max and n >= 2".into()));
    }
    (0..n)
        .map(|i| {
            let d = d_min + (d_max - d_min) * i as f64 / (n - 1) as f64;
            numerical_apertures(&spec.clone().with_blade_distance(d)).map(|r| (d, r))
        })
        .collect()
}
