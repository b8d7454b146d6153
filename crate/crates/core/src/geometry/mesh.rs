//! Flat-triangle surface meshes of the trap conductors.
//!
//! Every conductor is a right prism (blade, blade segment, or polygonal rod)
//! meshed face by face on a graded tensor grid. Faces are meshed
//! independently, so neighbouring faces may have hanging nodes along shared
//! edges; piecewise-constant collocation does not need conforming meshes.

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use super::{point_in_polygon, Blade, ElectrodeId, RigidTransform, TrapSpec};
use crate::error::{Error, Result};

/// Panel-size policy. The target edge length grows linearly with the
/// distance from the trap center and is capped at `max_edge`; `refine`
/// multiplies the panel count per unit area.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshDensity {
    pub min_edge: f64,
    pub growth: f64,
    pub max_edge: f64,
    pub refine: f64,
    /// Number of flat sides used for each rod.
    pub rod_sides: usize,
}

impl Default for MeshDensity {
    fn default() -> Self {
        MeshDensity {
            min_edge: 20e-6,
            growth: 0.25,
            max_edge: 2e-3,
            refine: 1.0,
            rod_sides: 12,
        }
    }
}

impl MeshDensity {
    /// Cheap density for quick checks and unit tests.
    pub fn coarse() -> Self {
        MeshDensity {
            min_edge: 20e-6,
            growth: 0.3,
            max_edge: 3e-3,
            refine: 1.0,
            rod_sides: 10,
        }
    }

    pub fn edge_at(&self, distance: f64) -> f64 {
        (self.min_edge + self.growth * distance).min(self.max_edge) / self.refine.sqrt()
    }

    /// Same policy with `factor` times as many panels per unit area.
    pub fn refined(&self, factor: f64) -> Self {
        MeshDensity {
            refine: self.refine * factor,
            ..*self
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub vertices: [Vector3<f64>; 3],
    /// Outward unit normal.
    pub normal: Vector3<f64>,
    /// Index into [`ElectrodeMesh::electrodes`].
    pub electrode: usize,
}

impl Panel {
    pub fn new(vertices: [Vector3<f64>; 3], electrode: usize) -> Self {
        let n = (vertices[1] - vertices[0]).cross(&(vertices[2] - vertices[0]));
        let norm = n.norm();
        let normal = if norm > 0.0 { n / norm } else { Vector3::zeros() };
        Panel {
            vertices,
            normal,
            electrode,
        }
    }

    pub fn area(&self) -> f64 {
        let [a, b, c] = &self.vertices;
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let [a, b, c] = &self.vertices;
        (a + b + c) / 3.0
    }

    /// Longest edge.
    pub fn diameter(&self) -> f64 {
        let [a, b, c] = &self.vertices;
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }
}

/// Right prism: a convex, counter-clockwise profile in a local (u, w)
/// frame rotated by `angle` about z and shifted to `origin`, extruded
/// from `z0` to `z1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prism {
    pub profile: Vec<[f64; 2]>,
    pub origin: [f64; 2],
    pub angle: f64,
    pub z0: f64,
    pub z1: f64,
}

impl Prism {
    fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.angle.sin_cos();
        ([c, s], [-s, c])
    }

    pub fn to_global(&self, u: f64, w: f64, z: f64) -> Vector3<f64> {
        let (eu, ew) = self.axes();
        Vector3::new(
            self.origin[0] + u * eu[0] + w * ew[0],
            self.origin[1] + u * eu[1] + w * ew[1],
            z,
        )
    }

    fn direction_to_global(&self, u: f64, w: f64) -> Vector3<f64> {
        let (eu, ew) = self.axes();
        Vector3::new(u * eu[0] + w * ew[0], u * eu[1] + w * ew[1], 0.0)
    }

    fn to_local(&self, p: &Vector3<f64>) -> [f64; 3] {
        let (eu, ew) = self.axes();
        let (x, y) = (p.x - self.origin[0], p.y - self.origin[1]);
        [x * eu[0] + y * eu[1], x * ew[0] + y * ew[1], p.z]
    }

    /// Strict interior test in nominal coordinates.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let [u, w, z] = self.to_local(p);
        z > self.z0 && z < self.z1 && point_in_polygon(&self.profile, [u, w])
    }

    pub fn profile_area(&self) -> f64 {
        let n = self.profile.len();
        0.5 * (0..n)
            .map(|i| {
                let [x0, y0] = self.profile[i];
                let [x1, y1] = self.profile[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum::<f64>()
    }

    pub fn profile_perimeter(&self) -> f64 {
        let n = self.profile.len();
        (0..n)
            .map(|i| {
                let [x0, y0] = self.profile[i];
                let [x1, y1] = self.profile[(i + 1) % n];
                ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
            })
            .sum()
    }

    pub fn surface_area(&self) -> f64 {
        2.0 * self.profile_area() + self.profile_perimeter() * (self.z1 - self.z0)
    }
}

/// Solid body of one electrode, with the rigid motion applied to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Conductor {
    pub electrode: ElectrodeId,
    pub prism: Prism,
    pub transform: RigidTransform,
}

impl Conductor {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let nominal = if self.transform.is_identity() {
            *p
        } else {
            self.transform.inverse().apply(p)
        };
        self.prism.contains(&nominal)
    }
}

/// Labeled triangulation of all conductor surfaces.
#[derive(Clone, Debug, PartialEq)]
pub struct ElectrodeMesh {
    electrodes: Vec<ElectrodeId>,
    panels: Vec<Panel>,
    conductors: Vec<Conductor>,
}

impl ElectrodeMesh {
    /// Assembles a mesh from raw parts, checking labels and panel areas.
    pub fn new(
        electrodes: Vec<ElectrodeId>,
        panels: Vec<Panel>,
        conductors: Vec<Conductor>,
    ) -> Result<Self> {
        for (i, a) in electrodes.iter().enumerate() {
            if electrodes[..i].contains(a) {
                return Err(Error::InvalidArgument(format!("electrode {a} listed twice")));
            }
        }
        let mut seen = vec![false; electrodes.len()];
        for (k, p) in panels.iter().enumerate() {
            if p.electrode >= electrodes.len() {
                return Err(Error::InvalidArgument(format!(
                    "panel {k} refers to electrode index {} of {}",
                    p.electrode,
                    electrodes.len()
                )));
            }
            if !(p.area() > 0.0) || p.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
                return Err(Error::InvalidArgument(format!("panel {k} is degenerate")));
            }
            seen[p.electrode] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "electrode {} has no panels",
                electrodes[i]
            )));
        }
        Ok(ElectrodeMesh {
            electrodes,
            panels,
            conductors,
        })
    }

    pub fn electrodes(&self) -> &[ElectrodeId] {
        &self.electrodes
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    pub fn conductors(&self) -> &[Conductor] {
        &self.conductors
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    pub fn electrode_index(&self, id: ElectrodeId) -> Option<usize> {
        self.electrodes.iter().position(|&e| e == id)
    }

    pub fn panels_of(&self, id: ElectrodeId) -> impl Iterator<Item = &Panel> {
        let idx = self.electrode_index(id);
        self.panels.iter().filter(move |p| Some(p.electrode) == idx)
    }

    pub fn area_of(&self, id: ElectrodeId) -> f64 {
        self.panels_of(id).map(Panel::area).sum()
    }

    /// Axis-aligned bounds `(min, max)` of one electrode.
    pub fn bounds_of(&self, id: ElectrodeId) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let mut it = self.panels_of(id).flat_map(|p| p.vertices.iter());
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))))
    }

    /// Electrode whose solid strictly contains `p`.
    pub fn conductor_containing(&self, p: &Vector3<f64>) -> Option<ElectrodeId> {
        self.conductors
            .iter()
            .find(|c| c.contains(p))
            .map(|c| c.electrode)
    }

    /// SHA-256 over electrode labels and exact panel coordinates.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"bladetrap-mesh-v1");
        h.update((self.electrodes.len() as u64).to_le_bytes());
        for e in &self.electrodes {
            let name = e.to_string();
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
        }
        h.update((self.panels.len() as u64).to_le_bytes());
        for p in &self.panels {
            for v in &p.vertices {
                for c in v.iter() {
                    h.update(c.to_bits().to_le_bytes());
                }
            }
            h.update((p.electrode as u64).to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn hash_hex(&self) -> String {
        hex(&self.content_hash())
    }

    fn transform_electrode(&mut self, index: usize, t: &RigidTransform) {
        for p in self.panels.iter_mut().filter(|p| p.electrode == index) {
            for v in p.vertices.iter_mut() {
                *v = t.apply(v);
            }
            p.normal = t.apply_vector(&p.normal);
        }
        let id = self.electrodes[index];
        for c in self.conductors.iter_mut().filter(|c| c.electrode == id) {
            c.transform = t.compose(&c.transform);
        }
    }

    /// Fails if any panel vertex, edge midpoint or centroid of an electrode
    /// in `moved` lies strictly inside another conductor, or vice versa.
    fn check_intersections(&self, moved: &[usize]) -> Result<()> {
        for (ci, c) in self.conductors.iter().enumerate() {
            let Some(cidx) = self.electrode_index(c.electrode) else {
                continue;
            };
            for p in &self.panels {
                if p.electrode == cidx {
                    continue;
                }
                if !moved.contains(&p.electrode) && !moved.contains(&cidx) {
                    continue;
                }
                let [a, b, d] = &p.vertices;
                let probes = [*a, *b, *d, (a + b) * 0.5, (b + d) * 0.5, (d + a) * 0.5, p.centroid()];
                if probes.iter().any(|q| c.contains(q)) {
                    let other = self.electrodes[p.electrode];
                    let _ = ci;
                    return Err(Error::Intersection(other, c.electrode));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Moves one electrode rigidly. Distances within the electrode are
/// preserved; every other panel is untouched.
pub fn apply_misalignment(
    mesh: &ElectrodeMesh,
    electrode: ElectrodeId,
    transform: &RigidTransform,
) -> Result<ElectrodeMesh> {
    let index = mesh
        .electrode_index(electrode)
        .ok_or_else(|| Error::UnknownElectrode(electrode.to_string()))?;
    let mut out = mesh.clone();
    if transform.is_identity() {
        return Ok(out);
    }
    out.transform_electrode(index, transform);
    out.check_intersections(&[index])?;
    Ok(out)
}

/// Meshes the full trap: two rf blades, ten dc segments, two rods, with the
/// per-blade misalignments of `spec` applied.
pub fn build_trap(spec: &TrapSpec, density: &MeshDensity) -> Result<ElectrodeMesh> {
    spec.validate()?;
    if !(density.min_edge > 0.0 && density.max_edge >= density.min_edge && density.refine > 0.0)
        || !(density.growth >= 0.0)
        || density.rod_sides < 3
    {
        return Err(Error::InvalidArgument("invalid mesh density policy".into()));
    }
    let profile = spec.blade_profile();
    let mut bodies: Vec<(ElectrodeId, Prism, Option<Blade>, usize)> = Vec::new();
    let (bz0, bz1) = spec.blade_z_extent();
    for (blade, n) in [(Blade::Rf1, 1u8), (Blade::Rf2, 2)] {
        let prism = Prism {
            profile: profile.clone(),
            origin: [0.0, 0.0],
            angle: blade.direction(spec.blade_angle),
            z0: bz0,
            z1: bz1,
        };
        bodies.push((ElectrodeId::RfBlade(n), prism, Some(blade), 5));
    }
    for (blade, n) in [(Blade::Dc1, 1u8), (Blade::Dc2, 2)] {
        for (seg, &(z0, z1)) in super::Segment::ALL.iter().zip(spec.segment_bounds.iter()) {
            let prism = Prism {
                profile: profile.clone(),
                origin: [0.0, 0.0],
                angle: blade.direction(spec.blade_angle),
                z0,
                z1,
            };
            bodies.push((ElectrodeId::Dc(n, *seg), prism, Some(blade), 5));
        }
    }
    let rod_profile = rod_polygon(0.5 * spec.rod_diameter, density.rod_sides);
    for (k, c) in spec.rod_centers.iter().enumerate() {
        let prism = Prism {
            profile: rod_profile.clone(),
            origin: *c,
            angle: 0.0,
            z0: -0.5 * spec.rod_length,
            z1: 0.5 * spec.rod_length,
        };
        bodies.push((ElectrodeId::Rod(k as u8 + 1), prism, None, usize::MAX));
    }

    let electrodes: Vec<ElectrodeId> = bodies.iter().map(|b| b.0).collect();
    let mut panels = Vec::new();
    let mut conductors = Vec::new();
    for (index, (id, prism, blade, tip_edge)) in bodies.into_iter().enumerate() {
        let start = panels.len();
        mesh_prism(&prism, density, index, tip_edge, &mut panels);
        let transform = match blade {
            Some(b) => spec.misalignment(b).resolve(spec.blade_centroid(b))?,
            None => RigidTransform::identity(),
        };
        if !transform.is_identity() {
            for p in &mut panels[start..] {
                for v in p.vertices.iter_mut() {
                    *v = transform.apply(v);
                }
                p.normal = transform.apply_vector(&p.normal);
            }
        }
        conductors.push(Conductor {
            electrode: id,
            prism,
            transform,
        });
    }
    let mesh = ElectrodeMesh::new(electrodes, panels, conductors)?;
    let moved: Vec<usize> = mesh
        .conductors
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.transform.is_identity())
        .map(|(i, _)| i)
        .collect();
    if !moved.is_empty() {
        mesh.check_intersections(&moved)?;
    }
    Ok(mesh)
}

/// Regular polygon with the same perimeter as a circle of radius `r`,
/// vertices placed symmetrically about the local u axis.
fn rod_polygon(r: f64, sides: usize) -> Vec<[f64; 2]> {
    let n = sides as f64;
    let rc = std::f64::consts::PI * r / (n * (std::f64::consts::PI / n).sin());
    (0..sides)
        .map(|k| {
            let a = (k as f64 + 0.5) * 2.0 * std::f64::consts::PI / n;
            [rc * a.cos(), rc * a.sin()]
        })
        .collect()
}

/// Nodes on `[a, b]` whose spacing follows `size`: the interval count is
/// the integral of `1/size` rounded up, and nodes equidistribute it.
pub fn graded_nodes(a: f64, b: f64, size: impl Fn(f64) -> f64, min_intervals: usize) -> Vec<f64> {
    const SAMPLES: usize = 256;
    let len = b - a;
    if !(len > 0.0) {
        return vec![a, b];
    }
    let step = len / SAMPLES as f64;
    let mut cum = Vec::with_capacity(SAMPLES + 1);
    cum.push(0.0);
    let mut prev = 1.0 / size(a);
    for k in 1..=SAMPLES {
        let cur = 1.0 / size(a + step * k as f64);
        let last = *cum.last().unwrap();
        cum.push(last + 0.5 * (prev + cur) * step);
        prev = cur;
    }
    let total = cum[SAMPLES];
    let n = ((total - 1e-6).ceil().max(1.0) as usize).max(min_intervals);
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(a);
    let mut k = 0;
    for i in 1..n {
        let target = total * i as f64 / n as f64;
        while k + 1 < SAMPLES && cum[k + 1] < target {
            k += 1;
        }
        let frac = (target - cum[k]) / (cum[k + 1] - cum[k]);
        nodes.push(a + step * (k as f64 + frac));
    }
    nodes.push(b);
    nodes
}

/// Axial nodes with a node forced at z = 0; intervals symmetric about 0
/// get exactly mirrored nodes.
fn axial_nodes(z0: f64, z1: f64, size: impl Fn(f64) -> f64) -> Vec<f64> {
    if !(z0 < 0.0 && z1 > 0.0) {
        return graded_nodes(z0, z1, size, 1);
    }
    if (z0 + z1).abs() <= 1e-12 * (z1 - z0) {
        let right = graded_nodes(0.0, z1, &size, 1);
        let mut nodes: Vec<f64> = right.iter().rev().map(|z| -z).collect();
        nodes.pop();
        nodes.extend(right);
        nodes[0] = z0;
        return nodes;
    }
    let mut nodes = graded_nodes(z0, 0.0, &size, 1);
    nodes.pop();
    nodes.extend(graded_nodes(0.0, z1, &size, 1));
    nodes
}

fn push_triangle(out: &mut Vec<Panel>, v: [Vector3<f64>; 3], outward: &Vector3<f64>, electrode: usize, scale: f64) {
    let n = (v[1] - v[0]).cross(&(v[2] - v[0]));
    if n.norm() <= 1e-12 * scale * scale {
        return;
    }
    let v = if n.dot(outward) < 0.0 { [v[0], v[2], v[1]] } else { v };
    out.push(Panel::new(v, electrode));
}

/// `tip_edge` is the index of the profile edge that must be split at least
/// twice across its width (usize::MAX for none).
fn mesh_prism(prism: &Prism, density: &MeshDensity, electrode: usize, tip_edge: usize, out: &mut Vec<Panel>) {
    let n = prism.profile.len();
    for k in 0..n {
        let pa = prism.profile[k];
        let pb = prism.profile[(k + 1) % n];
        let (du, dw) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = (du * du + dw * dw).sqrt();
        let (eu, ew) = (du / len, dw / len);
        let outward = prism.direction_to_global(ew, -eu);
        let point = |a: f64, z: f64| prism.to_global(pa[0] + a * eu, pa[1] + a * ew, z);

        let g0 = point(0.0, 0.0).xy();
        let g1 = point(len, 0.0).xy();
        let astar = ((-g0.dot(&(g1 - g0))) / (len * len)).clamp(0.0, 1.0) * len;
        let zstar = 0.0f64.clamp(prism.z0, prism.z1);
        let min_div = if k == tip_edge { 2 } else { 1 };
        let a_nodes = graded_nodes(0.0, len, |a| density.edge_at(point(a, zstar).norm()), min_div);
        let z_nodes = axial_nodes(prism.z0, prism.z1, |z| density.edge_at(point(astar, z).norm()));
        let scale = len.min(prism.z1 - prism.z0);

        for j in 0..z_nodes.len() - 1 {
            let (za, zb) = (z_nodes[j], z_nodes[j + 1]);
            for i in 0..a_nodes.len() - 1 {
                let p00 = point(a_nodes[i], za);
                let p10 = point(a_nodes[i + 1], za);
                let p01 = point(a_nodes[i], zb);
                let p11 = point(a_nodes[i + 1], zb);
                if za >= 0.0 {
                    push_triangle(out, [p00, p10, p11], &outward, electrode, scale);
                    push_triangle(out, [p00, p11, p01], &outward, electrode, scale);
                } else {
                    push_triangle(out, [p00, p10, p01], &outward, electrode, scale);
                    push_triangle(out, [p10, p11, p01], &outward, electrode, scale);
                }
            }
        }
    }
    mesh_cap(prism, density, prism.z0, -1.0, electrode, out);
    mesh_cap(prism, density, prism.z1, 1.0, electrode, out);
}

/// w-range of a convex profile along the line u = const.
fn slice(profile: &[[f64; 2]], u: f64) -> (f64, f64) {
    let n = profile.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let span = profile
        .iter()
        .map(|p| p[0].abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    for i in 0..n {
        let [ua, wa] = profile[i];
        let [ub, wb] = profile[(i + 1) % n];
        let (umin, umax) = (ua.min(ub), ua.max(ub));
        let tol = 1e-12 * span;
        if u < umin - tol || u > umax + tol {
            continue;
        }
        if (ub - ua).abs() <= tol {
            lo = lo.min(wa.min(wb));
            hi = hi.max(wa.max(wb));
        } else {
            let s = ((u - ua) / (ub - ua)).clamp(0.0, 1.0);
            let w = wa + s * (wb - wa);
            lo = lo.min(w);
            hi = hi.max(w);
        }
    }
    (lo, hi)
}

fn mesh_cap(prism: &Prism, density: &MeshDensity, z: f64, side: f64, electrode: usize, out: &mut Vec<Panel>) {
    let outward = Vector3::new(0.0, 0.0, side);
    let mut breaks: Vec<f64> = prism.profile.iter().map(|p| p[0]).collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let span = breaks[breaks.len() - 1] - breaks[0];
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * span);

    let size = |u: f64| {
        let (lo, hi) = slice(&prism.profile, u);
        density.edge_at(prism.to_global(u, 0.5 * (lo + hi), z).norm())
    };
    let mut us = vec![breaks[0]];
    for w in breaks.windows(2) {
        let nodes = graded_nodes(w[0], w[1], size, 1);
        us.extend_from_slice(&nodes[1..]);
    }
    let cols: Vec<(f64, f64, f64)> = us
        .iter()
        .map(|&u| {
            let (lo, hi) = slice(&prism.profile, u);
            (u, lo, hi)
        })
        .collect();
    for c in cols.windows(2) {
        let (ua, la, ha) = c[0];
        let (ub, lb, hb) = c[1];
        let h = size(0.5 * (ua + ub));
        let width = (ha - la).max(hb - lb);
        let m = ((width / h - 1e-6).ceil() as usize).max(1);
        let scale = (ub - ua).min(width.max(ub - ua));
        for j in 0..m {
            let (s0, s1) = (j as f64 / m as f64, (j + 1) as f64 / m as f64);
            let l0 = prism.to_global(ua, la + s0 * (ha - la), z);
            let l1 = prism.to_global(ua, la + s1 * (ha - la), z);
            let r0 = prism.to_global(ub, lb + s0 * (hb - lb), z);
            let r1 = prism.to_global(ub, lb + s1 * (hb - lb), z);
            push_triangle(out, [l0, r0, r1], &outward, electrode, scale);
            push_triangle(out, [l0, r1, l1], &outward, electrode, scale);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Misalignment, Segment};

    fn coarse_mesh(spec: &TrapSpec) -> ElectrodeMesh {
        build_trap(spec, &MeshDensity::coarse()).unwrap()
    }

    #[test]
    fn graded_nodes_respect_size() {
        let nodes = graded_nodes(0.0, 1.0, |s| 0.01 + 0.1 * s, 1);
        assert_eq!(nodes[0], 0.0);
        assert_eq!(*nodes.last().unwrap(), 1.0);
        for w in nodes.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            assert!(w[1] > w[0]);
            assert!(w[1] - w[0] <= 1.05 * (0.01 + 0.1 * mid), "{w:?}");
        }
        assert_eq!(graded_nodes(0.0, 1.0, |_| 10.0, 3).len(), 4);
    }

    #[test]
    fn axial_nodes_are_mirrored() {
        let nodes = axial_nodes(-2.0, 2.0, |z| 0.05 + 0.1 * z.abs());
        let n = nodes.len();
        for i in 0..n {
            assert_eq!(nodes[i], -nodes[n - 1 - i]);
        }
        assert!(nodes.contains(&0.0));
    }

    #[test]
    fn default_trap_has_fourteen_watertight_electrodes() {
        let spec = TrapSpec::default();
        let mesh = coarse_mesh(&spec);
        assert_eq!(mesh.electrodes().len(), 14);
        assert_eq!(mesh.electrodes(), ElectrodeId::standard().as_slice());
        for c in mesh.conductors() {
            let area = mesh.area_of(c.electrode);
            let expected = c.prism.surface_area();
            assert!(
                ((area - expected) / expected).abs() < 1e-9,
                "{}: {area} vs {expected}",
                c.electrode
            );
        }
        // every panel points away from its own solid
        for p in mesh.panels() {
            let c = &mesh.conductors()[p.electrode];
            let probe = p.centroid() + p.normal * 1e-7;
            assert!(!c.contains(&probe));
            let inward = p.centroid() - p.normal * 1e-7;
            assert!(c.contains(&inward), "{}", c.electrode);
        }
    }

    /// Blade-frame (u, w) coordinates of every vertex of `id`.
    fn blade_frame(mesh: &ElectrodeMesh, spec: &TrapSpec, id: ElectrodeId) -> Vec<Vec<(f64, f64)>> {
        let a = id.blade().unwrap().direction(spec.blade_angle);
        let (eu, ew) = (nalgebra::Vector2::new(a.cos(), a.sin()), nalgebra::Vector2::new(-a.sin(), a.cos()));
        mesh.panels_of(id)
            .map(|p| p.vertices.iter().map(|v| (v.xy().dot(&eu), v.xy().dot(&ew))).collect())
            .collect()
    }

    #[test]
    fn tip_faces_are_split_across_their_width() {
        let spec = TrapSpec::default();
        let mesh = coarse_mesh(&spec);
        let tip = 0.5 * spec.blade_distance;
        for id in ElectrodeId::standard().into_iter().filter(|i| !i.is_rod()) {
            let mut count = 0;
            for verts in blade_frame(&mesh, &spec, id) {
                if verts.iter().all(|&(u, _)| (u - tip).abs() < 1e-12) {
                    count += 1;
                    let lo = verts.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
                    let hi = verts.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
                    assert!(hi - lo <= 0.5 * spec.tip_width + 1e-12, "{id}");
                }
            }
            assert!(count > 0, "{id}");
        }
    }

    #[test]
    fn mesh_is_z_mirror_symmetric() {
        let mesh = coarse_mesh(&TrapSpec::default());
        let mut cents: Vec<[f64; 3]> = mesh.panels().iter().map(|p| p.centroid().into()).collect();
        let key = |c: &[f64; 3]| ((c[0] * 1e9).round() as i64, (c[1] * 1e9).round() as i64, (c[2] * 1e9).round() as i64);
        let mut mirrored: Vec<_> = cents.iter().map(|c| key(&[c[0], c[1], -c[2]])).collect();
        let mut orig: Vec<_> = cents.iter_mut().map(|c| key(c)).collect();
        orig.sort();
        mirrored.sort();
        assert_eq!(orig, mirrored);
    }

    #[test]
    fn tip_separation_equals_blade_distance() {
        for d in [400e-6, 1e-3] {
            let spec = TrapSpec::default().with_blade_distance(d);
            let mesh = coarse_mesh(&spec);
            let reach = |id| {
                blade_frame(&mesh, &spec, id)
                    .into_iter()
                    .flatten()
                    .map(|v| v.0)
                    .fold(f64::INFINITY, f64::min)
            };
            let rf = reach(ElectrodeId::RfBlade(1)) + reach(ElectrodeId::RfBlade(2));
            let dc = reach(ElectrodeId::Dc(1, Segment::C)) + reach(ElectrodeId::Dc(2, Segment::C));
            assert!((rf - d).abs() < 1e-15 && (dc - d).abs() < 1e-15, "{rf} {dc}");
        }
    }

    #[test]
    fn tilted_blade_tip_distance_is_monotone_in_z() {
        let spec = TrapSpec::default().with_misalignment(Blade::Rf1, Misalignment::tilt(1.5f64.to_radians()));
        let mesh = coarse_mesh(&spec);
        let dir = Blade::Rf1.direction(spec.blade_angle);
        let axis = nalgebra::Vector2::new(dir.cos(), dir.sin());
        let mut samples: Vec<(f64, f64)> = mesh
            .panels_of(ElectrodeId::RfBlade(1))
            .flat_map(|p| p.vertices.iter())
            .map(|v| (v.z, v.xy().dot(&axis)))
            .collect();
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // minimum radial coordinate within z bins must decrease with z
        let bins = 10;
        let (zmin, zmax) = (samples[0].0, samples.last().unwrap().0);
        let mut mins = vec![f64::INFINITY; bins];
        for (z, r) in samples {
            let b = (((z - zmin) / (zmax - zmin)) * bins as f64).min(bins as f64 - 1.0) as usize;
            mins[b] = mins[b].min(r);
        }
        for w in mins.windows(2) {
            assert!(w[1] < w[0], "{mins:?}");
        }
    }

    #[test]
    fn misalignment_moves_only_target() {
        let mesh = coarse_mesh(&TrapSpec::default());
        let t = RigidTransform::translation(Vector3::new(-100e-6, 173.2e-6, 0.0));
        let moved = apply_misalignment(&mesh, ElectrodeId::RfBlade(1), &t).unwrap();
        for (a, b) in mesh.panels().iter().zip(moved.panels()) {
            if a.electrode == 0 {
                assert!((b.centroid() - a.centroid() - t.translation).norm() < 1e-15);
            } else {
                assert_eq!(a, b);
            }
        }
        assert_eq!(apply_misalignment(&mesh, ElectrodeId::RfBlade(1), &RigidTransform::identity()).unwrap(), mesh);
        assert!(matches!(
            apply_misalignment(&mesh, ElectrodeId::Aux(3), &t),
            Err(Error::UnknownElectrode(_))
        ));
    }

    #[test]
    fn collision_is_reported_with_offending_pair() {
        let mesh = coarse_mesh(&TrapSpec::default());
        // push RF_BLADE_1 straight through the trap center
        let t = RigidTransform::translation(Vector3::new(0.3e-3, -0.5e-3, 0.0));
        match apply_misalignment(&mesh, ElectrodeId::RfBlade(1), &t) {
            Err(Error::Intersection(a, b)) => {
                assert!(a == ElectrodeId::RfBlade(1) || b == ElectrodeId::RfBlade(1), "{a} {b}");
            }
            other => panic!("expected intersection, got {other:?}"),
        }
    }
}
