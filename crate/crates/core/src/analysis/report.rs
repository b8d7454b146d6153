use std::fmt;

use nalgebra::Vector3;

use super::{find_minimum, harmonic_fit, principal_axes, trap_depth, DepthReport, HarmonicFit, MinimumOptions, PrincipalAxes};
use crate::error::{Error, Result};
use crate::potential::{pseudopotential_energy, GridKind, TrapModel};
use crate::units::{BOLTZMANN, ELEMENTARY_CHARGE};

type V3 = Vector3<f64>;

/// Residual rf field along z at a point and its energy equivalents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxialMicromotion {
    /// |E_rf,z| amplitude (V/m).
    pub field: f64,
    /// Pseudopotential of the z component alone (eV).
    pub energy: f64,
    /// 2φ/k_B (K).
    pub temperature: f64,
}

impl AxialMicromotion {
    pub fn from_field(e_z: f64, model: &TrapModel) -> Self {
        let phi = pseudopotential_energy(e_z, model.ion(), model.voltages().rf_omega);
        AxialMicromotion {
            field: e_z.abs(),
            energy: phi / ELEMENTARY_CHARGE,
            temperature: 2.0 * phi / BOLTZMANN,
        }
    }
}

pub fn axial_micromotion(model: &TrapModel, r: &V3) -> Result<AxialMicromotion> {
    let s = model.sample(r)?;
    Ok(AxialMicromotion::from_field(s.rf_field.z, model))
}

/// rf-null positions along z.
#[derive(Clone, Debug, PartialEq)]
pub struct NullTrack {
    /// (z, x, y) for every z reached, in the order requested.
    pub points: Vec<[f64; 3]>,
    /// Where and why the track stopped early.
    pub stopped: Option<(f64, String)>,
}

/// Minimizes `f` in the transverse plane at each z, continuing from the
/// z closest to the seed outward in both directions. Adjacent nulls more
/// than `max_jump` apart end the track.
pub fn rf_null_track(
    f: &dyn Fn(&V3) -> f64,
    seed: V3,
    zs: &[f64],
    max_jump: f64,
    opts: &MinimumOptions,
) -> NullTrack {
    let opts = MinimumOptions {
        axes: [true, true, false],
        ..*opts
    };
    if zs.is_empty() {
        return NullTrack {
            points: Vec::new(),
            stopped: None,
        };
    }
    let start = (0..zs.len())
        .min_by(|&a, &b| (zs[a] - seed.z).abs().total_cmp(&(zs[b] - seed.z).abs()))
        .unwrap_or(0);
    let mut found: Vec<Option<[f64; 3]>> = vec![None; zs.len()];
    let mut stopped: Option<(f64, String)> = None;
    let mut walk = |order: Vec<usize>, found: &mut Vec<Option<[f64; 3]>>| {
        let mut prev: Option<V3> = None;
        for i in order {
            let z = zs[i];
            let s = match (prev, found[i]) {
                (_, Some(p)) => {
                    prev = Some(V3::new(p[1], p[2], z));
                    continue;
                }
                (Some(p), None) => V3::new(p.x, p.y, z),
                (None, None) => V3::new(seed.x, seed.y, z),
            };
            match find_minimum(f, s, &opts) {
                Ok(m) if prev.is_none_or(|p| (m.point.xy() - p.xy()).norm() <= max_jump) => {
                    found[i] = Some([z, m.point.x, m.point.y]);
                    prev = Some(m.point);
                }
                Ok(m) => {
                    let jump = (m.point.xy() - prev.unwrap().xy()).norm();
                    stopped.get_or_insert((z, format!("null jumped {jump:.3e} m (> {max_jump:.3e} m)")));
                    return;
                }
                Err(e) => {
                    stopped.get_or_insert((z, format!("no confining minimum: {e}")));
                    return;
                }
            }
        }
    };
    walk((start..zs.len()).collect(), &mut found);
    walk((0..=start).rev().collect(), &mut found);
    NullTrack {
        points: found.into_iter().flatten().collect(),
        stopped,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportOptions {
    pub minimum: MinimumOptions,
    /// Harmonic-fit half window (m) and sample count.
    pub fit_half_width: f64,
    pub fit_points: usize,
    pub depth_step: f64,
    pub depth_range: f64,
    /// Finite-difference step for the principal-axis Hessian (m).
    pub hessian_step: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            minimum: MinimumOptions {
                tolerance: 1e-9,
                ..Default::default()
            },
            fit_half_width: 20e-6,
            fit_points: 41,
            depth_step: 1e-6,
            depth_range: 5e-3,
            hessian_step: 1e-6,
        }
    }
}

/// Everything measured at one trap minimum.
#[derive(Clone, Debug, PartialEq)]
pub struct TrapReport {
    pub minimum: V3,
    pub energy: f64,
    /// Fits along x, y, z.
    pub fits: [HarmonicFit; 3],
    /// Depth along x, y, z.
    pub depths: [DepthReport; 3],
    pub axes: PrincipalAxes,
    pub micromotion: AxialMicromotion,
}

/// Minimizes the total energy from `seed` and characterizes the result.
pub fn trap_report(model: &TrapModel, seed: V3, opts: &ReportOptions) -> Result<TrapReport> {
    let f = model.energy_fn(GridKind::Total);
    let min = find_minimum(&f, seed, &opts.minimum)?;
    let r = min.point;
    model.check_point(&r)?;
    let mass = model.ion().mass;
    let dirs = [V3::x(), V3::y(), V3::z()];
    let fit = |a: usize| harmonic_fit(&f, r, dirs[a], opts.fit_half_width, opts.fit_points, mass);
    let fits = [fit(0)?, fit(1)?, fit(2)?];
    let blocked = |p: &V3| model.inside_conductor(p).is_some();
    let depth = |a: usize| trap_depth(&f, &blocked, r, dirs[a], opts.depth_step, opts.depth_range);
    let depths = [depth(0)?, depth(1)?, depth(2)?];
    let axes = principal_axes(&f, r, opts.hessian_step)?;
    let micromotion = axial_micromotion(model, &r)?;
    Ok(TrapReport {
        minimum: r,
        energy: min.value,
        fits,
        depths,
        axes,
        micromotion,
    })
}

fn fmt_depth(v: f64) -> String {
    if v.is_infinite() {
        "unbounded".to_string()
    } else {
        format!("{v:.4}")
    }
}

impl fmt::Display for TrapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.minimum * 1e6;
        writeln!(f, "minimum_um {:.4} {:.4} {:.4}", m.x, m.y, m.z)?;
        writeln!(f, "minimum_energy_eV {:.6e}", self.energy)?;
        for (name, fit) in ["x", "y", "z"].iter().zip(&self.fits) {
            writeln!(
                f,
                "freq_{name}_MHz {:.4} residual {:.2e}{}",
                fit.frequency() * 1e-6,
                fit.residual,
                if fit.confining() { "" } else { " deconfining" }
            )?;
        }
        for (name, d) in ["x", "y", "z"].iter().zip(&self.depths) {
            writeln!(
                f,
                "depth_{name}_eV {} global {}{}",
                fmt_depth(d.depth()),
                fmt_depth(d.global_depth()),
                if d.truncated() { " truncated" } else { "" }
            )?;
        }
        match self.axes.zeta {
            Some(z) => write!(f, "zeta_deg {z:.2}")?,
            None => write!(f, "zeta_deg degenerate")?,
        }
        match self.axes.ellipse {
            Some(e) => writeln!(f, " ellipse {:.2}", e.zeta)?,
            None => writeln!(f)?,
        }
        writeln!(f, "rf_field_z_V_per_m {:.4}", self.micromotion.field)?;
        writeln!(f, "axial_micromotion_neV {:.4}", self.micromotion.energy * 1e9)?;
        writeln!(f, "T_axial_uK {:.4}", self.micromotion.temperature * 1e6)
    }
}

impl TrapReport {
    /// Errors unless every axis is confining.
    pub fn require_confinement(&self) -> Result<()> {
        match self.fits.iter().position(|f| !f.confining()) {
            None => Ok(()),
            Some(a) => Err(Error::NoConvergence(format!("axis {} is not confining", ["x", "y", "z"][a]))),
        }
    }
}
