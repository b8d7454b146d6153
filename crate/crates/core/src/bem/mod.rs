//! Boundary-element electrostatics.
//!
//! Single-layer formulation with one constant charge density per triangle,
//! collocated at panel centroids: `Σ_j σ_j ∫_j dA / (4πε₀ |c_i - y|) = V_i`.
//! One solve per electrode (1 V on it, 0 V elsewhere) yields a basis from
//! which any voltage set follows by superposition.

pub mod container;
mod eval;
mod solve;
pub mod triangle;

use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{ElectrodeId, ElectrodeMesh};

pub use eval::{ChargeSet, EvalPlan, Region};
pub use solve::{gmres, solve_basis, SolveMethod, SolveOptions};

type V3 = Vector3<f64>;

/// Per-panel data needed by every kernel evaluation.
#[derive(Clone, Debug)]
pub struct PanelGeom {
    pub vertices: [V3; 3],
    pub normal: V3,
    pub centroid: V3,
    pub area: f64,
    pub diameter: f64,
    pub quad: [(V3, f64); 7],
}

/// Panel geometry plus the distance thresholds (in panel diameters) that
/// select the analytic, quadrature and monopole kernels.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub panels: Vec<PanelGeom>,
    pub near_factor: f64,
    pub far_factor: f64,
}

impl Geometry {
    pub fn new(mesh: &ElectrodeMesh, near_factor: f64, far_factor: f64) -> Self {
        let panels = mesh
            .panels()
            .iter()
            .map(|p| {
                let area = p.area();
                PanelGeom {
                    vertices: p.vertices,
                    normal: p.normal,
                    centroid: p.centroid(),
                    area,
                    diameter: p.diameter(),
                    quad: triangle::quadrature_points(&p.vertices, area),
                }
            })
            .collect();
        Geometry {
            panels,
            near_factor,
            far_factor,
        }
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    /// `∫_j dA/|r - y|` with the kernel chosen from the distance to `r`.
    #[inline]
    pub fn potential_kernel(&self, j: usize, r: &V3) -> f64 {
        let p = &self.panels[j];
        let dist = (r - p.centroid).norm();
        if dist < self.near_factor * p.diameter {
            triangle::analytic_potential(&p.vertices, &p.normal, r)
        } else if dist < self.far_factor * p.diameter {
            triangle::quadrature_potential(&p.quad, r)
        } else {
            p.area / dist
        }
    }

    #[inline]
    pub(crate) fn kernel_class(&self, j: usize, dist: f64) -> Kernel {
        let d = self.panels[j].diameter;
        if dist < self.near_factor * d {
            Kernel::Analytic
        } else if dist < self.far_factor * d {
            Kernel::Quadrature
        } else {
            Kernel::Monopole
        }
    }

    #[inline]
    pub(crate) fn kernel_with(&self, class: Kernel, j: usize, r: &V3) -> (f64, V3) {
        let p = &self.panels[j];
        match class {
            Kernel::Analytic => triangle::analytic(&p.vertices, &p.normal, r),
            Kernel::Quadrature => triangle::quadrature(&p.quad, r),
            Kernel::Monopole => triangle::monopole(&p.centroid, p.area, r),
        }
    }

    /// Closest panel to `r` and its distance.
    pub fn nearest_panel(&self, r: &V3) -> Option<(usize, f64)> {
        self.panels
            .iter()
            .enumerate()
            .map(|(j, p)| (j, point_triangle_distance(&p.vertices, &p.normal, r)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Kernel {
    Analytic,
    Quadrature,
    Monopole,
}

pub(crate) fn point_triangle_distance(v: &[V3; 3], n: &V3, r: &V3) -> f64 {
    let d = n.dot(&(r - v[0]));
    let q = r - n * d;
    let inside = (0..3).all(|k| {
        let a = &v[k];
        let b = &v[(k + 1) % 3];
        (b - a).cross(&(q - a)).dot(n) >= 0.0
    });
    if inside {
        return d.abs();
    }
    (0..3)
        .map(|k| {
            let a = &v[k];
            let b = &v[(k + 1) % 3];
            let e = b - a;
            let t = ((r - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
            (r - (a + e * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// How the basis was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub method: SolveMethod,
    pub panels: usize,
    /// Largest boundary-condition error over all collocation points and
    /// electrodes, relative to the 1 V drive.
    pub residual: f64,
    /// 1-norm condition estimate (NaN when not computed).
    pub condition: f64,
    /// Krylov iterations summed over electrodes (0 for dense solves).
    pub iterations: usize,
}

/// Unit-voltage charge solutions, one per electrode.
#[derive(Clone, Debug)]
pub struct BasisSet {
    mesh: Arc<ElectrodeMesh>,
    geometry: Arc<Geometry>,
    mesh_hash: [u8; 32],
    /// charges[e][j]: density (C/m²) on panel j with electrode e at 1 V.
    charges: Vec<Vec<f64>>,
    tolerance: f64,
    pub diagnostics: Diagnostics,
}

impl BasisSet {
    pub(crate) fn from_parts(
        mesh: Arc<ElectrodeMesh>,
        geometry: Arc<Geometry>,
        charges: Vec<Vec<f64>>,
        tolerance: f64,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        if charges.len() != mesh.electrodes().len() || charges.iter().any(|c| c.len() != mesh.len()) {
            return Err(Error::Format("charge arrays do not match the mesh".into()));
        }
        let mesh_hash = mesh.content_hash();
        Ok(BasisSet {
            mesh,
            geometry,
            mesh_hash,
            charges,
            tolerance,
            diagnostics,
        })
    }

    pub fn mesh(&self) -> &Arc<ElectrodeMesh> {
        &self.mesh
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    pub fn mesh_hash(&self) -> [u8; 32] {
        self.mesh_hash
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn electrodes(&self) -> &[ElectrodeId] {
        self.mesh.electrodes()
    }

    pub fn charge_density(&self, id: ElectrodeId) -> Option<&[f64]> {
        self.mesh.electrode_index(id).map(|e| self.charges[e].as_slice())
    }

    pub(crate) fn all_charges(&self) -> &[Vec<f64>] {
        &self.charges
    }

    /// Superposed density for the given electrode voltages. Electrodes not
    /// listed are grounded; absent electrodes may be listed at 0 V.
    pub fn combine(&self, voltages: &[(ElectrodeId, f64)]) -> Result<Vec<f64>> {
        let mut sigma = vec![0.0; self.mesh.len()];
        for &(id, v) in voltages {
            if v == 0.0 && self.mesh.electrode_index(id).is_none() {
                continue;
            }
            let e = self
                .mesh
                .electrode_index(id)
                .ok_or_else(|| Error::UnknownElectrode(id.to_string()))?;
            if v != 0.0 {
                for (s, c) in sigma.iter_mut().zip(&self.charges[e]) {
                    *s += v * c;
                }
            }
        }
        Ok(sigma)
    }

    /// Evaluator for several voltage sets at once (one column each).
    pub fn charge_set(&self, columns: &[Vec<(ElectrodeId, f64)>]) -> Result<ChargeSet> {
        let cols = columns
            .iter()
            .map(|c| self.combine(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChargeSet::new(self.geometry.clone(), &cols))
    }

    /// Maxwell capacitance matrix: entry (i, j) is the charge on electrode i
    /// with electrode j at 1 V and all others grounded.
    pub fn capacitance_matrix(&self) -> Vec<Vec<f64>> {
        let ne = self.charges.len();
        let mut c = vec![vec![0.0; ne]; ne];
        for (j, sigma) in self.charges.iter().enumerate() {
            for (p, s) in self.mesh.panels().iter().zip(sigma) {
                c[p.electrode][j] += s * p.area();
            }
        }
        c
    }
}
