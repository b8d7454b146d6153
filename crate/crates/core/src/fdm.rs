//! Brute-force finite-difference Laplace solver on a voxel box, used as an
//! independent check of the boundary-element engine.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::primitives::box_surface;
use crate::geometry::{Conductor, ElectrodeId, ElectrodeMesh, Prism, RigidTransform};
use crate::potential::{GridKind, PotentialGrid};

type V3 = Vector3<f64>;

/// Largest node count per axis.
pub const MAX_NODES_PER_AXIS: usize = 512;

/// Condition on a pair of box faces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// φ = 0 on the face.
    Grounded,
    /// Zero normal derivative (mirror plane).
    Symmetric,
}

/// Node lattice with conductor labels. Nodes whose position lies inside a
/// conductor are Dirichlet nodes (staircase voxelization).
#[derive(Clone, Debug)]
pub struct VoxelProblem {
    pub min: V3,
    pub h: f64,
    pub n: [usize; 3],
    pub boundary: [Boundary; 3],
    /// 0 for vacuum, k + 1 for `electrodes[k]`.
    labels: Vec<u16>,
    electrodes: Vec<ElectrodeId>,
}

impl VoxelProblem {
    pub fn new(min: V3, max: V3, h: f64, boundary: [Boundary; 3]) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || (0..3).any(|a| !(max[a] > min[a])) {
            return Err(Error::InvalidArgument("voxel box needs max > min and h > 0".into()));
        }
        let mut n = [0; 3];
        for a in 0..3 {
            let cells = ((max[a] - min[a]) / h).round();
            if cells > (MAX_NODES_PER_AXIS - 1) as f64 {
                return Err(Error::Budget(format!(
                    "{} nodes along axis {a} exceed {MAX_NODES_PER_AXIS}; use a coarser spacing",
                    cells + 1.0
                )));
            }
            n[a] = cells as usize + 1;
            if n[a] < 3 {
                return Err(Error::InvalidArgument("voxel box needs at least 3 nodes per axis".into()));
            }
        }
        Ok(VoxelProblem {
            min,
            h,
            n,
            boundary,
            labels: vec![0; n[0] * n[1] * n[2]],
            electrodes: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> V3 {
        self.min + V3::new(i as f64, j as f64, k as f64) * self.h
    }

    pub fn electrodes(&self) -> &[ElectrodeId] {
        &self.electrodes
    }

    /// Marks every node inside `inside` as part of conductor `id`.
    pub fn paint(&mut self, id: ElectrodeId, inside: impl Fn(&V3) -> bool) {
        let label = match self.electrodes.iter().position(|&e| e == id) {
            Some(k) => k + 1,
            None => {
                self.electrodes.push(id);
                self.electrodes.len()
            }
        } as u16;
        for k in 0..self.n[2] {
            for j in 0..self.n[1] {
                for i in 0..self.n[0] {
                    if inside(&self.node(i, j, k)) {
                        let idx = self.index(i, j, k);
                        self.labels[idx] = label;
                    }
                }
            }
        }
    }

    /// Paints every solid conductor of a mesh.
    pub fn paint_mesh(&mut self, mesh: &ElectrodeMesh) {
        for c in mesh.conductors() {
            self.paint(c.electrode, |p| c.contains(p));
        }
    }

    /// Conductor label at a node, if any.
    pub fn conductor_at(&self, i: usize, j: usize, k: usize) -> Option<ElectrodeId> {
        match self.labels[self.index(i, j, k)] {
            0 => None,
            l => Some(self.electrodes[l as usize - 1]),
        }
    }

    fn on_grounded_face(&self, idx: [usize; 3]) -> bool {
        (0..3).any(|a| self.boundary[a] == Boundary::Grounded && (idx[a] == 0 || idx[a] == self.n[a] - 1))
    }

    fn check(&self) -> Result<()> {
        for k in 0..self.n[2] {
            for j in 0..self.n[1] {
                for i in 0..self.n[0] {
                    if self.labels[self.index(i, j, k)] != 0 && self.on_grounded_face([i, j, k]) {
                        return Err(Error::InvalidArgument(format!(
                            "conductor {} touches a grounded box face",
                            self.conductor_at(i, j, k).unwrap()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdmOptions {
    /// Stop when the largest Gauss–Seidel correction is below this fraction
    /// of max|V|.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for FdmOptions {
    fn default() -> Self {
        FdmOptions {
            tolerance: 1e-6,
            max_sweeps: 200_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FdmSolution {
    pub min: V3,
    pub h: f64,
    pub n: [usize; 3],
    pub values: Vec<f64>,
    pub sweeps: usize,
    /// Final largest correction relative to max|V|.
    pub residual: f64,
}

impl FdmSolution {
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.n[0] * (j + self.n[1] * k)]
    }

    /// Trilinear interpolation; `None` outside the box.
    pub fn potential(&self, r: &V3) -> Option<f64> {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let s = (r[a] - self.min[a]) / self.h;
            if !(s >= 0.0 && s <= (self.n[a] - 1) as f64) {
                return None;
            }
            let i = (s.floor() as usize).min(self.n[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut v = 0.0;
        for c in 0..8 {
            let o = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let w: f64 = (0..3).map(|a| if o[a] == 1 { frac[a] } else { 1.0 - frac[a] }).product();
            v += w * self.at(base[0] + o[0], base[1] + o[1], base[2] + o[2]);
        }
        Some(v)
    }

    pub fn to_grid(&self) -> PotentialGrid {
        PotentialGrid {
            kind: GridKind::DcStatic,
            origin: [self.min.x, self.min.y, self.min.z],
            spacing: [self.h; 3],
            counts: self.n,
            meta: vec![("solver".into(), "fdm".into())],
            values: self.values.clone(),
        }
    }
}

/// Red-black successive over-relaxation of the 7-point Laplacian.
pub fn fdm_solve(problem: &VoxelProblem, voltages: &[(ElectrodeId, f64)], opts: &FdmOptions) -> Result<FdmSolution> {
    problem.check()?;
    let [nx, ny, nz] = problem.n;
    let mut volt = vec![0.0; problem.electrodes.len() + 1];
    for &(id, v) in voltages {
        if !v.is_finite() {
            return Err(Error::InvalidArgument("voltages must be finite".into()));
        }
        if let Some(k) = problem.electrodes.iter().position(|&e| e == id) {
            volt[k + 1] = v;
        }
    }
    let vmax = volt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut phi: Vec<f64> = problem.labels.iter().map(|&l| volt[l as usize]).collect();
    if vmax == 0.0 {
        return Ok(FdmSolution {
            min: problem.min,
            h: problem.h,
            n: problem.n,
            values: phi,
            sweeps: 0,
            residual: 0.0,
        });
    }
    // free nodes split by colour
    let mut free: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = problem.index(i, j, k);
                if problem.labels[idx] == 0 && !problem.on_grounded_face([i, j, k]) {
                    free[(i + j + k) % 2].push(idx as u32);
                }
            }
        }
    }
    let longest = *problem.n.iter().max().unwrap() as f64;
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / longest).sin());
    let stride = [1, nx, nx * ny];
    let sym = problem.boundary.map(|b| b == Boundary::Symmetric);
    let n = problem.n;
    let neighbours = |idx: usize, phi: &[f64]| -> f64 {
        let c = [idx % nx, (idx / nx) % ny, idx / (nx * ny)];
        let mut s = 0.0;
        for a in 0..3 {
            let lo = if c[a] == 0 {
                debug_assert!(sym[a]);
                idx + stride[a]
            } else {
                idx - stride[a]
            };
            let hi = if c[a] == n[a] - 1 { idx - stride[a] } else { idx + stride[a] };
            s += phi[lo] + phi[hi];
        }
        s / 6.0
    };
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut worst = 0.0f64;
        for colour in &free {
            for &idx in colour {
                let idx = idx as usize;
                let gs = neighbours(idx, &phi);
                let delta = gs - phi[idx];
                worst = worst.max(delta.abs());
                phi[idx] += omega * delta;
            }
        }
        residual = worst / vmax;
        if residual <= opts.tolerance {
            break;
        }
    }
    if residual > opts.tolerance {
        return Err(Error::NoConvergence(format!(
            "relaxation residual {residual:e} after {sweeps} sweeps"
        )));
    }
    Ok(FdmSolution {
        min: problem.min,
        h: problem.h,
        n: problem.n,
        values: phi,
        sweeps,
        residual,
    })
}

/// Agreement statistics between two sample sets at identical points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub points: usize,
    /// RMS of the differences.
    pub rms: f64,
    pub max: f64,
    /// `rms` divided by the RMS of the reference values.
    pub rms_relative: f64,
    /// Largest difference divided by the largest reference magnitude.
    pub max_relative: f64,
    /// RMS difference over the probes on the x, y and z lines through the
    /// probe-set centre (NaN when a line holds no probes).
    pub per_axis: [f64; 3],
}

impl Comparison {
    pub fn within(&self, relative: f64) -> bool {
        self.rms_relative <= relative
    }
}

/// Compares `test` against `reference`; both are (point, value) lists over
/// the same points in the same order.
pub fn compare_solvers(test: &[([f64; 3], f64)], reference: &[([f64; 3], f64)]) -> Result<Comparison> {
    if test.len() != reference.len() || test.is_empty() {
        return Err(Error::InvalidArgument("sample sets differ in length or are empty".into()));
    }
    if test.iter().zip(reference).any(|(a, b)| a.0 != b.0) {
        return Err(Error::InvalidArgument("sample sets use different points".into()));
    }
    let n = test.len() as f64;
    let diffs: Vec<f64> = test.iter().zip(reference).map(|(a, b)| a.1 - b.1).collect();
    let rms = (diffs.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    let ref_rms = (reference.iter().map(|r| r.1 * r.1).sum::<f64>() / n).sqrt();
    let max = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let ref_max = reference.iter().fold(0.0f64, |m, r| m.max(r.1.abs()));
    let mut centre = [0.0; 3];
    for (p, _) in reference {
        for a in 0..3 {
            centre[a] += p[a] / n;
        }
    }
    let scale = reference
        .iter()
        .flat_map(|(p, _)| (0..3).map(move |a| (p[a] - centre[a]).abs()))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let per_axis = std::array::from_fn(|axis| {
        let on: Vec<f64> = reference
            .iter()
            .zip(&diffs)
            .filter(|((p, _), _)| (0..3).all(|a| a == axis || (p[a] - centre[a]).abs() <= 1e-9 * scale))
            .map(|(_, d)| d * d)
            .collect();
        if on.is_empty() {
            f64::NAN
        } else {
            (on.iter().sum::<f64>() / on.len() as f64).sqrt()
        }
    });
    let rel = |x: f64, r: f64| if r > 0.0 { x / r } else if x == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(Comparison {
        points: test.len(),
        rms,
        max,
        rms_relative: rel(rms, ref_rms),
        max_relative: rel(max, ref_max),
        per_axis,
    })
}

/// Axis-aligned cross-check trap: rectangular rf bars along ±x, dc bars
/// along ±y, tips `d/2` from the axis, inside a grounded box.
#[derive(Clone, Debug)]
pub struct SimplifiedTrap {
    pub d: f64,
    pub bar_thickness: f64,
    pub bar_outer: f64,
    pub bar_half_length: f64,
    /// Half extents of the grounded enclosure.
    pub enclosure: V3,
}

impl Default for SimplifiedTrap {
    fn default() -> Self {
        SimplifiedTrap {
            d: 500e-6,
            bar_thickness: 300e-6,
            bar_outer: 1.0e-3,
            bar_half_length: 1.0e-3,
            enclosure: V3::new(1.2e-3, 1.2e-3, 1.4e-3),
        }
    }
}

impl SimplifiedTrap {
    pub const ENCLOSURE: ElectrodeId = ElectrodeId::Aux(1);

    /// (electrode, direction angle) of the four bars.
    pub fn bars() -> [(ElectrodeId, f64); 4] {
        use std::f64::consts::PI;
        use crate::geometry::Segment;
        [
            (ElectrodeId::RfBlade(1), 0.0),
            (ElectrodeId::RfBlade(2), PI),
            (ElectrodeId::Dc(1, Segment::C), 0.5 * PI),
            (ElectrodeId::Dc(2, Segment::C), 1.5 * PI),
        ]
    }

    fn prism(&self, angle: f64) -> Prism {
        let (u0, u1, w) = (0.5 * self.d, self.bar_outer, 0.5 * self.bar_thickness);
        Prism {
            profile: vec![[u0, -w], [u1, -w], [u1, w], [u0, w]],
            origin: [0.0, 0.0],
            angle,
            z0: -self.bar_half_length,
            z1: self.bar_half_length,
        }
    }

    /// Surface mesh with uniform cells of size `h_bar` on the bars and
    /// `h_box` on the enclosure, plus the bar solids.
    pub fn mesh(&self, h_bar: f64, h_box: f64) -> Result<ElectrodeMesh> {
        let mut electrodes: Vec<ElectrodeId> = Self::bars().iter().map(|b| b.0).collect();
        electrodes.push(Self::ENCLOSURE);
        let mut panels = Vec::new();
        let mut conductors = Vec::new();
        for (k, (id, angle)) in Self::bars().into_iter().enumerate() {
            let prism = self.prism(angle);
            let (lo, hi) = (0..4).fold((V3::repeat(f64::INFINITY), V3::repeat(f64::NEG_INFINITY)), |(lo, hi), c| {
                let p = prism.to_global(prism.profile[c][0], prism.profile[c][1], 0.0);
                (lo.inf(&p), hi.sup(&p))
            });
            let lo = V3::new(lo.x, lo.y, prism.z0);
            let hi = V3::new(hi.x, hi.y, prism.z1);
            panels.extend(box_surface(lo, hi, h_bar, true, k));
            conductors.push(Conductor {
                electrode: id,
                prism,
                transform: RigidTransform::identity(),
            });
        }
        panels.extend(box_surface(-self.enclosure, self.enclosure, h_box, false, 4));
        ElectrodeMesh::new(electrodes, panels, conductors)
    }

    /// Voxel problem with spacing `h`; the box faces are the grounded
    /// enclosure.
    pub fn voxels(&self, h: f64) -> Result<VoxelProblem> {
        let mut p = VoxelProblem::new(-self.enclosure, self.enclosure, h, [Boundary::Grounded; 3])?;
        let tol = 1e-9 * h;
        for (id, angle) in Self::bars() {
            let prism = self.prism(angle);
            let (c, s) = (angle.cos(), angle.sin());
            p.paint(id, |r| {
                let u = c * r.x + s * r.y;
                let w = -s * r.x + c * r.y;
                u >= prism.profile[0][0] - tol
                    && u <= prism.profile[1][0] + tol
                    && w.abs() <= 0.5 * self.bar_thickness + tol
                    && r.z >= prism.z0 - tol
                    && r.z <= prism.z1 + tol
            });
        }
        Ok(p)
    }
}
