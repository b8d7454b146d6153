//! Linear response of the trap minimum to rod and dc-offset voltages, and
//! voltage sets that move the minimum to a chosen transverse point.

use std::fmt;

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;

use crate::analysis::{find_minimum, MinimumOptions};
use crate::error::{Error, Result};
use crate::geometry::{ElectrodeId, Segment};
use crate::potential::{GridKind, IonSpecies, TrapModel, VoltageSet};

type V3 = Vector3<f64>;

/// Spatial resolution floor used for uncertainties and convergence (m).
pub const POSITION_RESOLUTION: f64 = 100e-9;

/// Base voltages with both rods shifted by `rod` and an antisymmetric dc
/// offset: +ΔV on every segment of the dc blade at x>0, y>0 and −ΔV on the
/// opposite one.
pub fn offset_voltages(base: &VoltageSet, rod: f64, dv: f64) -> VoltageSet {
    let mut v = base.clone();
    v.rods = [base.rods[0] + rod, base.rods[1] + rod];
    for s in Segment::ALL {
        for (blade, sign) in [(1u8, 1.0), (2u8, -1.0)] {
            let id = ElectrodeId::Dc(blade, s);
            let old = base.dc.get(&id).copied().unwrap_or(0.0);
            v.dc.insert(id, old + sign * dv);
        }
    }
    v
}

/// Straight-line fit of the minimum position against one control voltage.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepFit {
    /// (voltage, minimum) pairs.
    pub points: Vec<(f64, V3)>,
    /// d(x, y)/dV (m/V).
    pub slope: [f64; 2],
    pub intercept: [f64; 2],
    /// max(standard error, resolution / span) per coordinate (m/V).
    pub uncertainty: [f64; 2],
    /// RMS deviation from the line per coordinate (m).
    pub residual: [f64; 2],
}

impl SweepFit {
    /// Residual larger than three times the position resolution.
    pub fn nonlinear(&self) -> bool {
        self.residual.iter().any(|&r| r > 3.0 * POSITION_RESOLUTION)
    }

    fn from_points(points: Vec<(f64, V3)>) -> Result<Self> {
        let n = points.len() as f64;
        let (lo, hi) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
        let span = hi - lo;
        if !(span > 0.0) || points.len() < 2 {
            return Err(Error::InvalidArgument("sweep has insufficient span".into()));
        }
        let mv = points.iter().map(|p| p.0).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mv).powi(2)).sum();
        let mut fit = SweepFit {
            slope: [0.0; 2],
            intercept: [0.0; 2],
            uncertainty: [0.0; 2],
            residual: [0.0; 2],
            points,
        };
        for a in 0..2 {
            let my = fit.points.iter().map(|p| p.1[a]).sum::<f64>() / n;
            let sxy: f64 = fit.points.iter().map(|p| (p.0 - mv) * (p.1[a] - my)).sum();
            let slope = sxy / sxx;
            let intercept = my - slope * mv;
            let ss: f64 = fit
                .points
                .iter()
                .map(|p| (p.1[a] - intercept - slope * p.0).powi(2))
                .sum();
            let se = if fit.points.len() > 2 {
                (ss / (n - 2.0) / sxx).sqrt()
            } else {
                0.0
            };
            fit.slope[a] = slope;
            fit.intercept[a] = intercept;
            fit.residual[a] = (ss / n).sqrt();
            fit.uncertainty[a] = se.max(POSITION_RESOLUTION / span);
        }
        Ok(fit)
    }
}

/// Minima are searched in the transverse plane through the seed. Rod and
/// dc offsets keep the z-mirror symmetry, so the minimum stays in that
/// plane, and a base without axial confinement (rf alone) is well posed.
fn minimum_options() -> MinimumOptions {
    MinimumOptions {
        tolerance: 1e-9,
        ..MinimumOptions::transverse()
    }
}

fn minimum_at(model: &TrapModel, v: VoltageSet, seed: V3) -> Result<V3> {
    let m = model.with_voltages(v)?;
    let f = m.energy_fn(GridKind::Total);
    let found = find_minimum(&f, seed, &minimum_options())?;
    Ok(found.point)
}

fn sweep(model: &TrapModel, seed: V3, values: &[f64], min_points: usize, min_span: f64, apply: impl Fn(f64) -> VoltageSet + Sync) -> Result<SweepFit> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.iter().any(|v| !v.is_finite()) || values.len() < min_points || !(hi - lo >= min_span) {
        return Err(Error::InvalidArgument(format!(
            "sweep needs at least {min_points} finite points spanning {min_span} V (insufficient span)"
        )));
    }
    let points = values
        .par_iter()
        .map(|&v| Ok((v, minimum_at(model, apply(v), seed)?)))
        .collect::<Result<Vec<_>>>()?;
    SweepFit::from_points(points)
}

/// Minimum position against the common-mode rod voltage added to the
/// model's voltages. Needs ≥ 5 points spanning ≥ 100 V.
pub fn rod_response(model: &TrapModel, seed: V3, values: &[f64]) -> Result<SweepFit> {
    let base = model.voltages().clone();
    sweep(model, seed, values, 5, 100.0, |v| offset_voltages(&base, v, 0.0))
}

/// Minimum position against the antisymmetric dc offset ΔV. Needs ≥ 5
/// points spanning ≥ 4 V.
pub fn dc_offset_response(model: &TrapModel, seed: V3, values: &[f64]) -> Result<SweepFit> {
    let base = model.voltages().clone();
    sweep(model, seed, values, 5, 4.0, |v| offset_voltages(&base, 0.0, v))
}

/// Slopes of (x, y) against (V_rod, ΔV_dc), linearized at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMatrix {
    /// Rows x, y; columns V_rod, ΔV_dc (m/V).
    pub matrix: Matrix2<f64>,
    pub uncertainty: Matrix2<f64>,
    /// Minimum at the base voltages.
    pub base: V3,
    pub voltages: VoltageSet,
    pub rod: SweepFit,
    pub dc: SweepFit,
}

impl ResponseMatrix {
    pub fn from_fits(base: V3, voltages: VoltageSet, rod: SweepFit, dc: SweepFit) -> Self {
        ResponseMatrix {
            matrix: Matrix2::new(rod.slope[0], dc.slope[0], rod.slope[1], dc.slope[1]),
            uncertainty: Matrix2::new(rod.uncertainty[0], dc.uncertainty[0], rod.uncertainty[1], dc.uncertainty[1]),
            base,
            voltages,
            rod,
            dc,
        }
    }

    /// 2-norm condition number with entries in nm/V.
    pub fn condition(&self) -> f64 {
        let s = (self.matrix * 1e9).singular_values();
        s.max() / s.min()
    }

    /// V_rod / ΔV_dc that moves the minimum purely along y in the linear
    /// model.
    pub fn y_only_ratio(&self) -> f64 {
        -self.matrix[(0, 1)] / self.matrix[(0, 0)]
    }
}

/// Measures both response columns around the minimum nearest `seed`.
pub fn response_matrix(model: &TrapModel, seed: V3, rod_values: &[f64], dc_values: &[f64]) -> Result<ResponseMatrix> {
    let base = find_minimum(&model.energy_fn(GridKind::Total), seed, &minimum_options())?.point;
    let rod = rod_response(model, base, rod_values)?;
    let dc = dc_offset_response(model, base, dc_values)?;
    Ok(ResponseMatrix::from_fits(base, model.voltages().clone(), rod, dc))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Compensation {
    pub v_rod: f64,
    pub dv_dc: f64,
    pub condition: f64,
    /// Target minus the linear-model displacement (m).
    pub residual: [f64; 2],
    /// |V_rod| or |ΔV_dc| beyond the configured limits.
    pub exceeds_limits: bool,
}

/// Voltages whose linear response equals `target` (m, relative to the base
/// minimum). `limits` are the allowed |V_rod| and |ΔV_dc|.
pub fn solve_compensation(resp: &ResponseMatrix, target: [f64; 2], limits: [f64; 2]) -> Result<Compensation> {
    let condition = resp.condition();
    if !condition.is_finite() || condition > 1e12 {
        return Err(Error::Singular {
            condition,
            duplicates: Vec::new(),
        });
    }
    let t = Vector2::from(target);
    let v = resp
        .matrix
        .lu()
        .solve(&t)
        .ok_or(Error::Singular {
            condition,
            duplicates: Vec::new(),
        })?;
    let r = t - resp.matrix * v;
    Ok(Compensation {
        v_rod: v[0],
        dv_dc: v[1],
        condition,
        residual: [r[0], r[1]],
        exceeds_limits: v[0].abs() > limits[0] || v[1].abs() > limits[1],
    })
}

/// Transverse displacement qE/(mω²) produced by a uniform stray field
/// (V/m) in a trap with angular frequencies `omega` along x and y.
pub fn stray_field_displacement(field: [f64; 2], omega: [f64; 2], ion: &IonSpecies) -> [f64; 2] {
    std::array::from_fn(|a| ion.charge * field[a] / (ion.mass * omega[a] * omega[a]))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocusPoint {
    pub dv_dc: f64,
    pub v_rod: f64,
    pub minimum: V3,
    /// x-displacement from the base minimum (m).
    pub residual_x: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    /// Least-squares V_rod / ΔV_dc over the locus.
    pub ratio: f64,
    pub locus: Vec<LocusPoint>,
    /// dy/dΔV_dc along the locus (m/V).
    pub y_slope: f64,
}

impl Refinement {
    pub fn max_residual_x(&self) -> f64 {
        self.locus.iter().map(|p| p.residual_x.abs()).fold(0.0, f64::max)
    }
}

/// For each ΔV_dc, finds the V_rod that cancels the x-displacement of the
/// minimum (secant iteration to within `tolerance`, at most 20 steps)
/// starting from `initial_ratio`.
pub fn refine_y_only_ratio(model: &TrapModel, base: V3, dvs: &[f64], initial_ratio: f64, tolerance: f64) -> Result<Refinement> {
    let v0 = model.voltages().clone();
    let locus = dvs
        .par_iter()
        .map(|&dv| -> Result<LocusPoint> {
            let x_of = |rod: f64| -> Result<V3> { minimum_at(model, offset_voltages(&v0, rod, dv), base) };
            let mut a = initial_ratio * dv;
            let mut pa = x_of(a)?;
            let mut iterations = 1;
            if (pa.x - base.x).abs() > tolerance {
                let mut b = a + 1.0;
                let mut pb = x_of(b)?;
                loop {
                    iterations += 1;
                    if (pb.x - base.x).abs() <= tolerance {
                        a = b;
                        pa = pb;
                        break;
                    }
                    if iterations > 20 || pb.x == pa.x {
                        return Err(Error::NoConvergence(format!(
                            "rod secant for ΔV_dc = {dv} V did not reach {tolerance:e} m"
                        )));
                    }
                    let next = b - (pb.x - base.x) * (b - a) / (pb.x - pa.x);
                    (a, pa) = (b, pb);
                    b = next;
                    pb = x_of(b)?;
                }
            }
            Ok(LocusPoint {
                dv_dc: dv,
                v_rod: a,
                minimum: pa,
                residual_x: pa.x - base.x,
                iterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sdd: f64 = locus.iter().map(|p| p.dv_dc * p.dv_dc).sum();
    let ratio = if sdd > 0.0 {
        locus.iter().map(|p| p.v_rod * p.dv_dc).sum::<f64>() / sdd
    } else {
        initial_ratio
    };
    let y_slope = if locus.len() >= 2 && sdd > 0.0 {
        SweepFit::from_points(locus.iter().map(|p| (p.dv_dc, p.minimum)).collect())
            .map(|f| f.slope[1])
            .unwrap_or(0.0)
    } else {
        0.0
    };
    Ok(Refinement { ratio, locus, y_slope })
}

impl fmt::Display for ResponseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.base * 1e6;
        writeln!(f, "base_minimum_um {:.4} {:.4} {:.4}", b.x, b.y, b.z)?;
        for (name, fit) in [("rod", &self.rod), ("dc", &self.dc)] {
            writeln!(
                f,
                "{name}_slope_nm_per_V x {:.4} ± {:.4} y {:.4} ± {:.4} residual_nm {:.3} {:.3}{}",
                fit.slope[0] * 1e9,
                fit.uncertainty[0] * 1e9,
                fit.slope[1] * 1e9,
                fit.uncertainty[1] * 1e9,
                fit.residual[0] * 1e9,
                fit.residual[1] * 1e9,
                if fit.nonlinear() { " nonlinear" } else { "" }
            )?;
        }
        writeln!(f, "condition {:.4}", self.condition())?;
        writeln!(f, "y_only_ratio {:.4}", self.y_only_ratio())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(slope: [f64; 2], noise: f64) -> Vec<(f64, V3)> {
        (-2..=2)
            .map(|k| {
                let v = k as f64;
                let wiggle = if k % 2 == 0 { noise } else { -noise };
                (v, V3::new(slope[0] * v + wiggle, 1e-6 + slope[1] * v, 0.0))
            })
            .collect()
    }

    #[test]
    fn line_fit_and_uncertainty_floor() {
        let f = SweepFit::from_points(line([2.64e-6, 2.66e-6], 0.0)).unwrap();
        assert!((f.slope[0] - 2.64e-6).abs() < 1e-18);
        assert!((f.intercept[1] - 1e-6).abs() < 1e-18);
        assert_eq!(f.uncertainty[0], POSITION_RESOLUTION / 4.0);
        assert!(!f.nonlinear());
        let noisy = SweepFit::from_points(line([0.0, 0.0], 1e-6)).unwrap();
        assert!(noisy.nonlinear());
        assert!(SweepFit::from_points(vec![(0.0, V3::zeros()), (0.0, V3::zeros())]).is_err());
    }

    #[test]
    fn compensation_solves_the_linear_model() {
        let rod = SweepFit::from_points(line([45.3e-9, 0.0], 0.0)).unwrap();
        let dc = SweepFit::from_points(line([2.64e-6, 2.66e-6], 0.0)).unwrap();
        let r = ResponseMatrix::from_fits(V3::zeros(), VoltageSet::default(), rod, dc);
        let c = solve_compensation(&r, [0.0, 0.0], [200.0, 10.0]).unwrap();
        assert_eq!((c.v_rod, c.dv_dc), (0.0, 0.0));
        let c = solve_compensation(&r, [45.3e-9, 0.0], [200.0, 10.0]).unwrap();
        assert!((c.v_rod - 1.0).abs() < 1e-9 && c.dv_dc.abs() < 1e-9);
        let c = solve_compensation(&r, [0.0, 2.66e-6], [200.0, 10.0]).unwrap();
        assert!((c.dv_dc - 1.0).abs() < 1e-9);
        assert!((c.v_rod / c.dv_dc - r.y_only_ratio()).abs() < 1e-9);
        assert!((r.y_only_ratio() + 2.64e-6 / 45.3e-9).abs() < 1e-9);
        let far = solve_compensation(&r, [0.0, 1e-3], [200.0, 10.0]).unwrap();
        assert!(far.exceeds_limits);
        let flat = ResponseMatrix::from_fits(
            V3::zeros(),
            VoltageSet::default(),
            SweepFit::from_points(line([1e-9, 1e-9], 0.0)).unwrap(),
            SweepFit::from_points(line([1e-9, 1e-9], 0.0)).unwrap(),
        );
        assert!(matches!(solve_compensation(&flat, [1e-6, 0.0], [1.0, 1.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn offsets_are_antisymmetric() {
        let v = offset_voltages(&VoltageSet::operating_point(), 10.0, 1.5);
        assert_eq!(v.rods, [10.0, 10.0]);
        assert_eq!(v.dc[&ElectrodeId::Dc(1, Segment::C)], -8.5);
        assert_eq!(v.dc[&ElectrodeId::Dc(2, Segment::C)], -11.5);
        assert_eq!(v.dc[&ElectrodeId::Dc(2, Segment::A)], 13.5);
    }

    #[test]
    fn stray_field_maps_through_frequency() {
        let ion = IonSpecies::yb171();
        let w = 2.0 * std::f64::consts::PI * 3.2e6;
        let d = stray_field_displacement([1.0, -2.0], [w, w], &ion);
        assert!((d[0] - ion.charge / (ion.mass * w * w)).abs() < 1e-20);
        assert!((d[1] + 2.0 * d[0]).abs() < 1e-20);
    }
}
