//! Physics extracted from an energy function: minima, harmonic frequencies,
//! depths, principal axes, rf-null tracks and axial micromotion.
//!
//! Energy functions map a point (m) to an energy in eV.

mod axes;
mod depth;
mod report;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::units::ELEMENTARY_CHARGE;

pub use axes::{principal_axes, EllipseFit, PrincipalAxes};
pub use depth::{trap_depth, Barrier, DepthReport, Ray};
pub use report::{axial_micromotion, rf_null_track, trap_report, AxialMicromotion, NullTrack, ReportOptions, TrapReport};

type V3 = Vector3<f64>;

/// Gradient by central differences with one Richardson step (h, h/2).
pub fn gradient(f: &dyn Fn(&V3) -> f64, x: &V3, h: f64, axes: [bool; 3]) -> V3 {
    let central = |h: f64| {
        let mut g = V3::zeros();
        for a in (0..3).filter(|&a| axes[a]) {
            let mut e = V3::zeros();
            e[a] = h;
            g[a] = (f(&(x + e)) - f(&(x - e))) / (2.0 * h);
        }
        g
    };
    (4.0 * central(0.5 * h) - central(h)) / 3.0
}

/// Hessian by central differences with one Richardson step (h, h/2).
/// Inactive axes get zero rows and columns.
pub fn hessian(f: &dyn Fn(&V3) -> f64, x: &V3, h: f64, axes: [bool; 3]) -> Matrix3<f64> {
    let f0 = f(x);
    let central = |h: f64| {
        let mut m = Matrix3::zeros();
        let unit = |a: usize| {
            let mut e = V3::zeros();
            e[a] = h;
            e
        };
        for a in (0..3).filter(|&a| axes[a]) {
            let ea = unit(a);
            m[(a, a)] = (f(&(x + ea)) - 2.0 * f0 + f(&(x - ea))) / (h * h);
            for b in (a + 1..3).filter(|&b| axes[b]) {
                let eb = unit(b);
                let v = (f(&(x + ea + eb)) - f(&(x + ea - eb)) - f(&(x - ea + eb)) + f(&(x - ea - eb))) / (4.0 * h * h);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        m
    };
    (4.0 * central(0.5 * h) - central(h)) / 3.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimumOptions {
    /// Converged once the Newton step is shorter than this (m).
    pub tolerance: f64,
    /// Finite-difference step (m).
    pub step: f64,
    pub max_iterations: usize,
    /// Largest allowed distance from the seed (m).
    pub bound: f64,
    /// Longest single step (m).
    pub max_step: f64,
    /// Axes that are optimized; the others stay at the seed value.
    pub axes: [bool; 3],
}

impl Default for MinimumOptions {
    fn default() -> Self {
        MinimumOptions {
            tolerance: 50e-9,
            step: 1e-6,
            max_iterations: 100,
            bound: 1e-3,
            max_step: 100e-6,
            axes: [true; 3],
        }
    }
}

impl MinimumOptions {
    /// Minimization in the xy plane only.
    pub fn transverse() -> Self {
        MinimumOptions {
            axes: [true, true, false],
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minimum {
    pub point: V3,
    pub value: f64,
    pub iterations: usize,
    /// Hessian at the point (eV/m²), zero on inactive axes.
    pub hessian: Matrix3<f64>,
}

fn restrict(m: &Matrix3<f64>, axes: [bool; 3]) -> Matrix3<f64> {
    let mut r = *m;
    for a in 0..3 {
        if !axes[a] {
            for b in 0..3 {
                r[(a, b)] = 0.0;
                r[(b, a)] = 0.0;
            }
            r[(a, a)] = 1.0;
        }
    }
    r
}

/// Damped Newton descent with finite-difference derivatives and
/// backtracking. Converges when a full step with a positive-definite
/// Hessian is shorter than `tolerance`.
pub fn find_minimum(f: &dyn Fn(&V3) -> f64, seed: V3, opts: &MinimumOptions) -> Result<Minimum> {
    let mut x = seed;
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::InvalidArgument("energy is not finite at the seed".into()));
    }
    for iter in 1..=opts.max_iterations {
        let g = gradient(f, &x, opts.step, opts.axes);
        let h = hessian(f, &x, opts.step, opts.axes);
        let hr = restrict(&h, opts.axes);
        let scale = (0..3).map(|a| hr[(a, a)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut lambda = 0.0;
        let positive = hr.cholesky().is_some();
        loop {
            let damped = hr + Matrix3::identity() * (lambda * scale);
            let Some(ch) = damped.cholesky() else {
                lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
                if lambda > 1e8 {
                    return Err(Error::NoConvergence("Hessian could not be regularized".into()));
                }
                continue;
            };
            let mut d = -ch.solve(&g);
            for a in 0..3 {
                if !opts.axes[a] {
                    d[a] = 0.0;
                }
            }
            if positive && lambda == 0.0 && d.norm() < opts.tolerance {
                x += d;
                let fx = f(&x);
                return Ok(Minimum {
                    point: x,
                    value: fx,
                    iterations: iter,
                    hessian: h,
                });
            }
            if d.norm() > opts.max_step {
                d *= opts.max_step / d.norm();
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let trial = x + d * alpha;
                let ft = f(&trial);
                if ft < fx {
                    accepted = Some((trial, ft));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((trial, ft)) => {
                    x = trial;
                    fx = ft;
                    break;
                }
                None if positive && d.norm() < 10.0 * opts.tolerance => {
                    // at the evaluation noise floor
                    return Ok(Minimum {
                        point: x,
                        value: fx,
                        iterations: iter,
                        hessian: h,
                    });
                }
                None => {
                    lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
                    if lambda > 1e8 {
                        return Err(Error::NoConvergence("no descent direction found".into()));
                    }
                }
            }
        }
        if (x - seed).norm() > opts.bound {
            return Err(Error::Diverged(format!(
                "moved {:.3e} m from the seed, beyond the {:.3e} m bound",
                (x - seed).norm(),
                opts.bound
            )));
        }
    }
    Err(Error::NoConvergence(format!("no minimum within {} iterations", opts.max_iterations)))
}

/// Quadratic least-squares fit along one axis through a minimum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicFit {
    pub center: V3,
    pub axis: V3,
    pub half_width: f64,
    pub points: usize,
    /// Second-order coefficient c of φ ≈ a + b s + c s², eV/m².
    pub curvature: f64,
    /// Angular frequency, negative for a deconfining axis (rad/s).
    pub omega: f64,
    /// Vertex offset from `center` along `axis` (m).
    pub offset: f64,
    /// RMS fit residual over the window divided by the sampled energy span.
    pub residual: f64,
}

impl HarmonicFit {
    pub fn confining(&self) -> bool {
        self.curvature > 0.0
    }

    /// ω/2π in Hz, negative for a deconfining axis.
    pub fn frequency(&self) -> f64 {
        self.omega / (2.0 * std::f64::consts::PI)
    }
}

/// Fits φ(center + s·axis), s ∈ [−w, w] on `points` uniform samples, with
/// φ = ½mω²s² for a particle of mass `mass` (kg).
pub fn harmonic_fit(
    f: &dyn Fn(&V3) -> f64,
    center: V3,
    axis: V3,
    half_width: f64,
    points: usize,
    mass: f64,
) -> Result<HarmonicFit> {
    if points < 3 || !(half_width > 0.0) || axis.norm() == 0.0 {
        return Err(Error::InvalidArgument("fit needs >= 3 points, a positive window and an axis".into()));
    }
    let axis = axis.normalize();
    let mut ata = Matrix3::zeros();
    let mut atb = V3::zeros();
    let mut samples = Vec::with_capacity(points);
    for k in 0..points {
        let t = -1.0 + 2.0 * k as f64 / (points - 1) as f64;
        let v = f(&(center + axis * (t * half_width)));
        if !v.is_finite() {
            return Err(Error::InvalidArgument("energy not finite inside the fit window".into()));
        }
        let row = V3::new(1.0, t, t * t);
        ata += row * row.transpose();
        atb += row * v;
        samples.push((t, v));
    }
    let c = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::InvalidArgument("degenerate fit".into()))?;
    let rms = (samples
        .iter()
        .map(|&(t, v)| (c[0] + c[1] * t + c[2] * t * t - v).powi(2))
        .sum::<f64>()
        / points as f64)
        .sqrt();
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)));
    let curvature = c[2] / (half_width * half_width);
    let omega2 = 2.0 * curvature * ELEMENTARY_CHARGE / mass;
    Ok(HarmonicFit {
        center,
        axis,
        half_width,
        points,
        curvature,
        omega: omega2.signum() * omega2.abs().sqrt(),
        offset: if c[2] != 0.0 { -c[1] / (2.0 * c[2]) * half_width } else { 0.0 },
        residual: if hi > lo { rms / (hi - lo) } else { 0.0 },
    })
}

/// Angular frequencies (rad/s) and directions from a Hessian in eV/m²,
/// ascending. Negative entries mark deconfining directions.
pub fn normal_modes(h: &Matrix3<f64>, mass: f64) -> [(f64, V3); 3] {
    let eig = h.symmetric_eigen();
    let mut modes: Vec<(f64, V3)> = (0..3)
        .map(|k| {
            let w2 = eig.eigenvalues[k] * ELEMENTARY_CHARGE / mass;
            (w2.signum() * w2.abs().sqrt(), eig.eigenvectors.column(k).into_owned())
        })
        .collect();
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    [modes[0], modes[1], modes[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::IonSpecies;
    use std::f64::consts::PI;

    fn bowl(k: V3, r0: V3) -> impl Fn(&V3) -> f64 {
        move |r: &V3| {
            let d = r - r0;
            0.5 * (k.x * d.x * d.x + k.y * d.y * d.y + k.z * d.z * d.z)
        }
    }

    #[test]
    fn bowl_minimum_from_fifty_microns() {
        let r0 = V3::new(1e-6, -2e-6, 0.5e-6);
        let f = bowl(V3::new(1e9, 3e9, 2e8), r0);
        let m = find_minimum(&f, r0 + V3::new(50e-6, 0.0, 0.0), &MinimumOptions::default()).unwrap();
        assert!((m.point - r0).norm() < 1e-9, "{:?}", m.point);
        let again = find_minimum(&f, m.point, &MinimumOptions::default()).unwrap();
        assert!((again.point - m.point).norm() < 50e-9);
    }

    #[test]
    fn transverse_mode_keeps_z() {
        let f = |r: &V3| r.x * r.x + (r.y - 1e-6).powi(2) - 1e3 * r.z * r.z;
        let m = find_minimum(&f, V3::new(5e-6, 5e-6, 2e-6), &MinimumOptions::transverse()).unwrap();
        assert!((m.point - V3::new(0.0, 1e-6, 2e-6)).norm() < 1e-9);
    }

    #[test]
    fn saddle_diverges_or_fails() {
        let f = |r: &V3| r.x * r.x - r.y * r.y + r.z * r.z;
        let opts = MinimumOptions {
            bound: 1e-4,
            ..Default::default()
        };
        assert!(find_minimum(&f, V3::new(1e-6, 1e-6, 0.0), &opts).is_err());
    }

    #[test]
    fn fit_identity_on_exact_quadratic() {
        let ion = IonSpecies::yb171();
        let w = 2.0 * PI * 3.2e6;
        let k = ion.mass * w * w / ELEMENTARY_CHARGE;
        let c = V3::new(0.2e-6, 1.6e-6, 0.0);
        let f = move |r: &V3| 0.5 * k * (r - c).x.powi(2) + 3.0;
        let fit = harmonic_fit(&f, c, V3::x(), 20e-6, 41, ion.mass).unwrap();
        assert!((fit.frequency() / 3.2e6 - 1.0).abs() < 1e-10);
        assert!(fit.residual < 1e-10 && fit.offset.abs() < 1e-15);
        let g = move |r: &V3| -f(r);
        let fit = harmonic_fit(&g, c, V3::x(), 20e-6, 41, ion.mass).unwrap();
        assert!(!fit.confining() && (fit.frequency() / -3.2e6 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn derivatives_are_exact_on_quadratics() {
        let f = |r: &V3| 3.0 * r.x * r.x + 2.0 * r.x * r.y - r.z * r.z + 4.0 * r.y;
        let x = V3::new(1e-5, -2e-5, 3e-5);
        let h = hessian(&f, &x, 1e-6, [true; 3]);
        let want = Matrix3::new(6.0, 2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, -2.0);
        assert!((h - want).norm() < 1e-3);
        let g = gradient(&f, &x, 1e-6, [true; 3]);
        assert!((g - V3::new(6.0 * x.x + 2.0 * x.y, 2.0 * x.x + 4.0, -2.0 * x.z)).norm() < 1e-9);
    }
}
