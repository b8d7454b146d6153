//! Simple conductor shapes for solver validation.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::Panel;

type V3 = Vector3<f64>;

/// Geodesic sphere: an icosahedron subdivided `level` times (20·4^level
/// triangles) with vertices on the sphere.
pub fn icosphere(center: V3, radius: f64, level: u32, electrode: usize) -> Vec<Panel> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<V3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| V3::new(v[0], v[1], v[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<V3>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    faces
        .iter()
        .map(|f| {
            let v = f.map(|i| center + verts[i] * radius);
            let p = Panel::new(v, electrode);
            if p.normal.dot(&(p.centroid() - center)) < 0.0 {
                Panel::new([v[0], v[2], v[1]], electrode)
            } else {
                p
            }
        })
        .collect()
}

/// Flat rectangle spanned by `origin + s·u + t·v` for s, t in [0, 1], split
/// into `nu × nv` cells of two triangles each.
pub fn rectangle(origin: V3, u: V3, v: V3, nu: usize, nv: usize, electrode: usize) -> Vec<Panel> {
    let mut out = Vec::with_capacity(2 * nu * nv);
    let at = |i: usize, j: usize| origin + u * (i as f64 / nu as f64) + v * (j as f64 / nv as f64);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            out.push(Panel::new([a, b, c], electrode));
            out.push(Panel::new([a, c, d], electrode));
        }
    }
    out
}

/// Surface of an axis-aligned box with cells no larger than `h`, normals
/// pointing out of the box when `outward`, into it otherwise.
pub fn box_surface(min: V3, max: V3, h: f64, outward: bool, electrode: usize) -> Vec<Panel> {
    let size = max - min;
    let n = |len: f64| ((len / h).ceil() as usize).max(1);
    let mut out = Vec::new();
    for axis in 0..3 {
        let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut u = V3::zeros();
        u[a1] = size[a1];
        let mut v = V3::zeros();
        v[a2] = size[a2];
        for high in [false, true] {
            let mut origin = min;
            if high {
                origin[axis] = max[axis];
            }
            let mut face = rectangle(origin, u, v, n(size[a1]), n(size[a2]), electrode);
            // u x v points along +axis; flip faces whose normal should not
            let want_positive = high == outward;
            if !want_positive {
                for p in &mut face {
                    *p = Panel::new([p.vertices[0], p.vertices[2], p.vertices[1]], electrode);
                }
            }
            out.extend(face);
        }
    }
    out
}
