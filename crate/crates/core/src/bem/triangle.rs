//! Potential integrals of a uniformly charged flat triangle.
//!
//! For a triangle S and an observation point r this computes
//! `I(r) = ∫_S dA / |r - y|` and its gradient with respect to r in closed
//! form (edge-by-edge decomposition of Wilton et al. / Graglia), plus a
//! 7-point quadrature and a monopole approximation for distant points.

use nalgebra::Vector3;

type V3 = Vector3<f64>;

/// Closed-form `(∫ 1/R dA, ∇_r ∫ 1/R dA)`.
///
/// `normal` must be the unit normal of the counter-clockwise vertex order.
/// The potential is finite everywhere; the gradient is singular only on the
/// triangle edges.
pub fn analytic(v: &[V3; 3], normal: &V3, r: &V3) -> (f64, V3) {
    let d = normal.dot(&(r - v[0]));
    let ad = d.abs();
    let rho = r - normal * d;
    let mut pot = 0.0;
    let mut grad_plane = V3::zeros();
    let mut beta_sum = 0.0;
    for k in 0..3 {
        let a = &v[k];
        let b = &v[(k + 1) % 3];
        let e = b - a;
        let len = e.norm();
        let s = e / len;
        let m = s.cross(normal);
        let lp = (b - rho).dot(&s);
        let lm = (a - rho).dot(&s);
        let p0 = (a - rho).dot(&m);
        let r0sq = p0 * p0 + d * d;
        let rp = (b - r).norm();
        let rm = (a - r).norm();
        let f = if lp + lm >= 0.0 {
            ((rp + lp) / (rm + lm)).ln()
        } else {
            ((rm - lm) / (rp - lp)).ln()
        };
        let f = if f.is_finite() { f } else { 0.0 };
        let beta = (p0 * lp).atan2(r0sq + ad * rp) - (p0 * lm).atan2(r0sq + ad * rm);
        if p0.abs() > 1e-14 * len {
            pot += p0 * f;
        }
        grad_plane -= m * f;
        beta_sum += beta;
    }
    pot -= ad * beta_sum;
    let sign = if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    };
    (pot, grad_plane - normal * (sign * beta_sum))
}

/// Degree-5 rule (Dunavant, 7 points): barycentric coordinates and weights.
const RULE7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const W1: f64 = 0.132_394_152_788_506;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W2: f64 = 0.125_939_180_544_827;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Quadrature points of [`RULE7`] mapped onto a triangle, with weights
/// already multiplied by the area.
pub fn quadrature_points(v: &[V3; 3], area: f64) -> [(V3, f64); 7] {
    RULE7.map(|(l, w)| (v[0] * l[0] + v[1] * l[1] + v[2] * l[2], w * area))
}

/// 7-point quadrature of `(∫ 1/R dA, ∇_r ∫ 1/R dA)`; accurate when `r` is
/// a few triangle diameters away.
pub fn quadrature(points: &[(V3, f64); 7], r: &V3) -> (f64, V3) {
    let mut pot = 0.0;
    let mut grad = V3::zeros();
    for (y, w) in points {
        let dr = r - y;
        let inv = 1.0 / dr.norm();
        pot += w * inv;
        grad -= dr * (w * inv * inv * inv);
    }
    (pot, grad)
}

/// Point-charge approximation about the centroid.
pub fn monopole(centroid: &V3, area: f64, r: &V3) -> (f64, V3) {
    let dr = r - centroid;
    let inv = 1.0 / dr.norm();
    (area * inv, -dr * (area * inv * inv * inv))
}

/// Potential-only variants, used in matrix assembly.
pub fn analytic_potential(v: &[V3; 3], normal: &V3, r: &V3) -> f64 {
    analytic(v, normal, r).0
}

pub fn quadrature_potential(points: &[(V3, f64); 7], r: &V3) -> f64 {
    points.iter().map(|(y, w)| w / (r - y).norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force reference: subdivide into 4^levels similar triangles and
    /// apply the 7-point rule on each, with the singularity handled by
    /// subdividing heavily around it.
    fn reference(v: &[V3; 3], r: &V3, levels: u32) -> (f64, V3) {
        let mut tris = vec![*v];
        for _ in 0..levels {
            let mut next = Vec::with_capacity(tris.len() * 4);
            for t in &tris {
                let m01 = (t[0] + t[1]) * 0.5;
                let m12 = (t[1] + t[2]) * 0.5;
                let m20 = (t[2] + t[0]) * 0.5;
                next.push([t[0], m01, m20]);
                next.push([m01, t[1], m12]);
                next.push([m20, m12, t[2]]);
                next.push([m01, m12, m20]);
            }
            tris = next;
        }
        let mut acc = (0.0, V3::zeros());
        for t in &tris {
            let area = 0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm();
            let (p, g) = quadrature(&quadrature_points(t, area), r);
            acc.0 += p;
            acc.1 += g;
        }
        acc
    }

    fn tri() -> ([V3; 3], V3) {
        let v = [
            V3::new(0.1, -0.2, 0.3),
            V3::new(1.3, 0.1, 0.2),
            V3::new(0.4, 0.9, 0.6),
        ];
        let n = (v[1] - v[0]).cross(&(v[2] - v[0])).normalize();
        (v, n)
    }

    #[test]
    fn matches_refined_quadrature_off_plane() {
        let (v, n) = tri();
        let c = (v[0] + v[1] + v[2]) / 3.0;
        for r in [
            c + n * 0.3,
            c - n * 0.05 + V3::new(0.2, 0.0, 0.0),
            V3::new(2.0, -1.0, 0.5),
            v[1] + n * 0.2 + V3::new(0.3, 0.3, -0.1),
        ] {
            let (p, g) = analytic(&v, &n, &r);
            let (pr, gr) = reference(&v, &r, 8);
            assert!((p - pr).abs() < 1e-6 * pr.abs(), "{p} {pr}");
            assert!((g - gr).norm() < 1e-5 * gr.norm(), "{g} {gr}");
        }
    }

    #[test]
    fn in_plane_and_self_terms() {
        // For an in-plane point inside the triangle, ∫ dA/R reduces to the
        // polar integral of the distance to the boundary along each ray.
        let a = 2.0;
        let v = [
            V3::new(0.0, 0.0, 0.0),
            V3::new(a, 0.0, 0.0),
            V3::new(0.5 * a, 0.5 * a * 3f64.sqrt(), 0.0),
        ];
        let n = V3::z();
        let c = V3::new(0.7, 0.4, 0.0);
        let rays = 200_000;
        let mut exact = 0.0;
        for k in 0..rays {
            let phi = (k as f64 + 0.5) * 2.0 * std::f64::consts::PI / rays as f64;
            let dir = V3::new(phi.cos(), phi.sin(), 0.0);
            let mut reach = f64::INFINITY;
            for e in 0..3 {
                let (p, q) = (v[e], v[(e + 1) % 3]);
                let edge = q - p;
                let det = dir.x * (-edge.y) - dir.y * (-edge.x);
                if det.abs() < 1e-300 {
                    continue;
                }
                let rhs = p - c;
                let t = (rhs.x * (-edge.y) - rhs.y * (-edge.x)) / det;
                let s = (dir.x * rhs.y - dir.y * rhs.x) / det;
                if t > 0.0 && (0.0..=1.0).contains(&s) {
                    reach = reach.min(t);
                }
            }
            exact += reach;
        }
        exact *= 2.0 * std::f64::consts::PI / rays as f64;
        let (p, g) = analytic(&v, &n, &c);
        assert!((p - exact).abs() < 1e-8 * exact, "{p} {exact}");
        assert!(g.z.abs() < 1e-12);
        let centroid = (v[0] + v[1] + v[2]) / 3.0;
        // by symmetry the in-plane field at the centroid vanishes
        assert!(analytic(&v, &n, &centroid).1.norm() < 1e-12);

        // in-plane points outside the triangle, including on edge extensions
        for r in [V3::new(3.0, 0.0, 0.0), V3::new(-1.0, 0.0, 0.0), V3::new(1.0, -0.5, 0.0), V3::new(2.5, 2.5, 0.0)] {
            let (p, _) = analytic(&v, &n, &r);
            let (pr, _) = reference(&v, &r, 7);
            assert!((p - pr).abs() < 1e-6 * pr, "{r:?}: {p} {pr}");
        }
    }

    #[test]
    fn far_field_limits() {
        let (v, n) = tri();
        let area = 0.5 * (v[1] - v[0]).cross(&(v[2] - v[0])).norm();
        let c = (v[0] + v[1] + v[2]) / 3.0;
        let r = c + V3::new(20.0, -35.0, 12.0);
        let (p, g) = analytic(&v, &n, &r);
        let (pq, gq) = quadrature(&quadrature_points(&v, area), &r);
        let (pm, gm) = monopole(&c, area, &r);
        assert!((p - pq).abs() < 1e-9 * p);
        assert!((g - gq).norm() < 1e-8 * g.norm());
        assert!((p - pm).abs() < 1e-4 * p);
        assert!((g - gm).norm() < 1e-3 * g.norm());
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let (v, n) = tri();
        let r = V3::new(0.5, 0.2, 0.45);
        let (_, g) = analytic(&v, &n, &r);
        let h = 1e-6;
        for k in 0..3 {
            let mut e = V3::zeros();
            e[k] = h;
            let fd = (analytic(&v, &n, &(r + e)).0 - analytic(&v, &n, &(r - e)).0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7 * g.norm());
        }
    }

    #[test]
    fn normal_field_jumps_by_two_pi() {
        // Just above and below the interior the normal derivative of the
        // single-layer potential differs by 4 pi for unit density:
        // dI/dn(+) - dI/dn(-) = -4 pi.
        let (v, n) = tri();
        let c = (v[0] + v[1] + v[2]) / 3.0;
        let up = analytic(&v, &n, &(c + n * 1e-9)).1.dot(&n);
        let down = analytic(&v, &n, &(c - n * 1e-9)).1.dot(&n);
        assert!((up - down + 4.0 * std::f64::consts::PI).abs() < 1e-6);
    }
}
