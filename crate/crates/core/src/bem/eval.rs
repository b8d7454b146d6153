use std::sync::Arc;

use nalgebra::Vector3;

use super::{Geometry, Kernel};
use crate::units::COULOMB;

type V3 = Vector3<f64>;

/// Ball in which an [`EvalPlan`] keeps its kernel choice fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub center: V3,
    pub radius: f64,
}

/// Kernel selection frozen for every point of a region. Point-wise
/// selection switches kernels as the observation point moves, which puts
/// tiny steps into the potential; inside a plan the potential is smooth, so
/// finite-difference curvatures stay clean.
#[derive(Clone, Debug)]
pub struct EvalPlan {
    region: Region,
    analytic: Vec<u32>,
    quadrature: Vec<u32>,
    monopole: Vec<u32>,
}

impl EvalPlan {
    pub fn region(&self) -> Region {
        self.region
    }

    pub fn contains(&self, r: &V3) -> bool {
        (r - self.region.center).norm() <= self.region.radius * (1.0 + 1e-12)
    }
}

/// Several superposed charge distributions on one mesh, evaluated together.
#[derive(Clone, Debug)]
pub struct ChargeSet {
    geometry: Arc<Geometry>,
    columns: usize,
    /// Panel-major, pre-multiplied by 1/(4πε₀).
    sigma: Vec<f64>,
}

impl ChargeSet {
    pub fn new(geometry: Arc<Geometry>, columns: &[Vec<f64>]) -> Self {
        let n = geometry.len();
        let k = columns.len();
        let mut sigma = vec![0.0; n * k];
        for (c, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), n, "charge column length must match the panel count");
            for (j, s) in col.iter().enumerate() {
                sigma[j * k + c] = s * COULOMB;
            }
        }
        ChargeSet {
            geometry,
            columns: k,
            sigma,
        }
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    pub fn plan(&self, region: Region) -> EvalPlan {
        let mut plan = EvalPlan {
            region,
            analytic: Vec::new(),
            quadrature: Vec::new(),
            monopole: Vec::new(),
        };
        for (j, p) in self.geometry.panels.iter().enumerate() {
            let dist = ((p.centroid - region.center).norm() - region.radius).max(0.0);
            match self.geometry.kernel_class(j, dist) {
                Kernel::Analytic => plan.analytic.push(j as u32),
                Kernel::Quadrature => plan.quadrature.push(j as u32),
                Kernel::Monopole => plan.monopole.push(j as u32),
            }
        }
        plan
    }

    #[inline]
    fn accumulate(&self, j: usize, (pot, grad): (f64, V3), out_pot: &mut [f64], out_field: &mut [V3]) {
        let s = &self.sigma[j * self.columns..(j + 1) * self.columns];
        for c in 0..self.columns {
            out_pot[c] += s[c] * pot;
            out_field[c] -= grad * s[c];
        }
    }

    /// Potentials (V) and fields (V/m) of every column at `r`, with the
    /// kernel picked per panel from its distance to `r`.
    pub fn evaluate(&self, r: &V3, pot: &mut [f64], field: &mut [V3]) {
        pot.iter_mut().for_each(|p| *p = 0.0);
        field.iter_mut().for_each(|f| *f = V3::zeros());
        for (j, p) in self.geometry.panels.iter().enumerate() {
            let class = self.geometry.kernel_class(j, (r - p.centroid).norm());
            self.accumulate(j, self.geometry.kernel_with(class, j, r), pot, field);
        }
    }

    /// As [`evaluate`](Self::evaluate) but with the kernel choice of `plan`.
    /// Points outside the plan's region fall back to point-wise selection.
    pub fn evaluate_planned(&self, plan: &EvalPlan, r: &V3, pot: &mut [f64], field: &mut [V3]) {
        if !plan.contains(r) {
            return self.evaluate(r, pot, field);
        }
        pot.iter_mut().for_each(|p| *p = 0.0);
        field.iter_mut().for_each(|f| *f = V3::zeros());
        for (list, class) in [
            (&plan.analytic, Kernel::Analytic),
            (&plan.quadrature, Kernel::Quadrature),
            (&plan.monopole, Kernel::Monopole),
        ] {
            for &j in list {
                let j = j as usize;
                self.accumulate(j, self.geometry.kernel_with(class, j, r), pot, field);
            }
        }
    }

    pub fn potential(&self, r: &V3) -> Vec<f64> {
        let mut pot = vec![0.0; self.columns];
        let mut field = vec![V3::zeros(); self.columns];
        self.evaluate(r, &mut pot, &mut field);
        pot
    }

    pub fn field(&self, r: &V3) -> Vec<V3> {
        let mut pot = vec![0.0; self.columns];
        let mut field = vec![V3::zeros(); self.columns];
        self.evaluate(r, &mut pot, &mut field);
        field
    }
}
