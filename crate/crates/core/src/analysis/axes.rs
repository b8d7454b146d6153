use nalgebra::{Matrix2, Vector3};

use super::hessian;
use crate::contour::{contour_lines, ellipse_long_axis, fit_conic, Field2};
use crate::error::{Error, Result};

type V3 = Vector3<f64>;

/// Eigenvalues closer than this (relative) are treated as equal.
const DEGENERATE: f64 = 1e-4;

/// Cross-check of ζ from one equipotential contour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipseFit {
    /// Long-axis angle from +x, degrees in [0, 180).
    pub zeta: f64,
    /// Contour level above the minimum (eV).
    pub level: f64,
    pub points: usize,
}

/// In-plane (xy) curvature at a minimum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipalAxes {
    /// 2×2 Hessian block (eV/m²).
    pub hessian: Matrix2<f64>,
    /// Smaller eigenvalue (eV/m²).
    pub soft: f64,
    pub stiff: f64,
    /// Soft-axis angle from +x in degrees, [0, 180); `None` when degenerate.
    pub zeta: Option<f64>,
    pub degenerate: bool,
    pub ellipse: Option<EllipseFit>,
}

/// Hessian eigen-decomposition in the xy plane through `r_min`, with an
/// ellipse fitted to the contour whose soft semi-axis is about 3 µm.
pub fn principal_axes(f: &dyn Fn(&V3) -> f64, r_min: V3, step: f64) -> Result<PrincipalAxes> {
    let h3 = hessian(f, &r_min, step, [true, true, false]);
    let h = Matrix2::new(h3[(0, 0)], h3[(0, 1)], h3[(1, 0)], h3[(1, 1)]);
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("energy not finite near the minimum".into()));
    }
    let eig = h.symmetric_eigen();
    let (k_soft, k_stiff) = if eig.eigenvalues[0] <= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let (soft, stiff) = (eig.eigenvalues[k_soft], eig.eigenvalues[k_stiff]);
    let degenerate = (stiff - soft).abs() <= DEGENERATE * stiff.abs().max(soft.abs());
    let v = eig.eigenvectors.column(k_soft);
    let zeta = (!degenerate).then(|| v[1].atan2(v[0]).to_degrees().rem_euclid(180.0));
    let ellipse = if degenerate || soft <= 0.0 {
        None
    } else {
        let a = 3e-6;
        let level = 0.5 * soft * a * a;
        let w = 1.5 * a;
        let n = 61;
        let dx = 2.0 * w / (n - 1) as f64;
        let f0 = f(&r_min);
        let field = Field2::sample([-w, -w], [dx, dx], n, n, |x, y| f(&(r_min + V3::new(x, y, 0.0))) - f0);
        let points = contour_lines(&field, level).concat();
        fit_conic(&points, [0.0, 0.0], a)
            .and_then(|c| ellipse_long_axis(&c))
            .map(|zeta| EllipseFit {
                zeta,
                level,
                points: points.len(),
            })
    };
    Ok(PrincipalAxes {
        hessian: h,
        soft,
        stiff,
        zeta,
        degenerate,
        ellipse,
    })
}
