//! Trapping energies from a solved basis: rf pseudopotential, static dc and
//! rod potentials, and their sum.

mod grid;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::Vector3;

use crate::bem::{BasisSet, ChargeSet, EvalPlan, Region};
use crate::error::{Error, Result};
use crate::geometry::{ElectrodeId, Segment};
use crate::units::{ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE, YB171_MASS_U};

pub use grid::{parse_grid, sample_grid, write_grid, GridKind, PotentialGrid};

type V3 = Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IonSpecies {
    /// kg
    pub mass: f64,
    /// C
    pub charge: f64,
}

impl Default for IonSpecies {
    fn default() -> Self {
        Self::yb171()
    }
}

impl IonSpecies {
    /// Singly charged ¹⁷¹Yb⁺ (atomic mass, electron mass neglected).
    pub fn yb171() -> Self {
        IonSpecies {
            mass: YB171_MASS_U * ATOMIC_MASS_UNIT,
            charge: ELEMENTARY_CHARGE,
        }
    }

    pub fn new(mass: f64, charge: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) || !(charge != 0.0 && charge.is_finite()) {
            return Err(Error::InvalidArgument("ion mass must be positive and charge nonzero".into()));
        }
        Ok(IonSpecies { mass, charge })
    }
}

/// Drive voltages. Electrodes absent from `dc` are grounded.
#[derive(Clone, Debug, PartialEq)]
pub struct VoltageSet {
    /// Amplitude applied to both rf blades (V).
    pub rf_amplitude: f64,
    /// Drive angular frequency Ω (rad/s).
    pub rf_omega: f64,
    pub dc: BTreeMap<ElectrodeId, f64>,
    pub rods: [f64; 2],
}

/// Default drive frequency, Ω = 2π × 22.5 MHz.
pub const DEFAULT_RF_OMEGA: f64 = 2.0 * std::f64::consts::PI * 22.5e6;

impl Default for VoltageSet {
    fn default() -> Self {
        VoltageSet {
            rf_amplitude: 0.0,
            rf_omega: DEFAULT_RF_OMEGA,
            dc: BTreeMap::new(),
            rods: [0.0; 2],
        }
    }
}

impl VoltageSet {
    /// rf on, every dc segment and rod grounded.
    pub fn rf_only(amplitude: f64) -> Self {
        VoltageSet {
            rf_amplitude: amplitude,
            ..Default::default()
        }
    }

    /// Same voltage on segment `s` of both dc blades, for s = A..E.
    pub fn with_segments(mut self, volts: [f64; 5]) -> Self {
        for blade in [1, 2] {
            for s in Segment::ALL {
                self.dc.insert(ElectrodeId::Dc(blade, s), volts[s.index()]);
            }
        }
        self
    }

    pub fn with_rods(mut self, v: f64) -> Self {
        self.rods = [v, v];
        self
    }

    /// V_rf = 600 V with A/E = 15 V, B/D = 3 V, C = -10 V.
    pub fn operating_point() -> Self {
        Self::rf_only(600.0).with_segments([15.0, 3.0, -10.0, 3.0, 15.0])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rf_omega > 0.0 && self.rf_omega.is_finite()) {
            return Err(Error::InvalidArgument("rf drive frequency must be positive".into()));
        }
        let finite = self.rf_amplitude.is_finite()
            && self.rods.iter().all(|v| v.is_finite())
            && self.dc.values().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("voltages must be finite".into()));
        }
        if let Some(id) = self.dc.keys().find(|id| !id.is_dc()) {
            return Err(Error::InvalidArgument(format!("{id} is not a dc segment")));
        }
        Ok(())
    }

    /// Linear combination of basis electrodes for one component, with the
    /// rf component at unit amplitude.
    pub fn weights(&self, which: Component) -> Vec<(ElectrodeId, f64)> {
        match which {
            Component::Rf => vec![(ElectrodeId::RfBlade(1), 1.0), (ElectrodeId::RfBlade(2), 1.0)],
            Component::Dc => self.dc.iter().map(|(&k, &v)| (k, v)).collect(),
            Component::Rod => vec![(ElectrodeId::Rod(1), self.rods[0]), (ElectrodeId::Rod(2), self.rods[1])],
            Component::Static => {
                let mut w = self.weights(Component::Dc);
                w.extend(self.weights(Component::Rod));
                w
            }
        }
    }

    /// Stable text summary, used in file headers.
    pub fn describe(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("V_rf".to_string(), format!("{:e}", self.rf_amplitude)),
            ("Omega".to_string(), format!("{:e}", self.rf_omega)),
            ("V_rod1".to_string(), format!("{:e}", self.rods[0])),
            ("V_rod2".to_string(), format!("{:e}", self.rods[1])),
        ];
        for (k, v) in &self.dc {
            out.push((format!("V_{k}"), format!("{v:e}")));
        }
        out
    }
}

/// Selector for the electrostatic contributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    /// rf blades at unit amplitude scaled by `rf_amplitude`.
    Rf,
    Dc,
    Rod,
    /// dc plus rods.
    Static,
}

/// How point evaluations near or inside conductors are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strictness {
    /// Log a warning and evaluate anyway.
    Warn,
    /// Return an error.
    Error,
    /// No checks (fast path for dense sampling in known-safe regions).
    Off,
}

/// q²|E|²/(4mΩ²) in joules for an rf field amplitude `e` (V/m).
pub fn pseudopotential_energy(e: f64, ion: &IonSpecies, omega: f64) -> f64 {
    ion.charge * ion.charge * e * e / (4.0 * ion.mass * omega * omega)
}

/// All fields at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    /// rf field amplitude at the configured V_rf (V/m).
    pub rf_field: V3,
    pub rf_potential: f64,
    pub dc_potential: f64,
    pub dc_field: V3,
    pub rod_potential: f64,
    pub rod_field: V3,
}

/// Basis + voltages + ion: the object every analysis evaluates.
#[derive(Clone, Debug)]
pub struct TrapModel {
    basis: Arc<BasisSet>,
    voltages: VoltageSet,
    ion: IonSpecies,
    charges: ChargeSet,
    plan: Option<Arc<EvalPlan>>,
    strictness: Strictness,
}

impl TrapModel {
    pub fn new(basis: Arc<BasisSet>, voltages: VoltageSet, ion: IonSpecies) -> Result<Self> {
        voltages.validate()?;
        let rf: Vec<_> = voltages
            .weights(Component::Rf)
            .into_iter()
            .map(|(k, w)| (k, w * voltages.rf_amplitude))
            .collect();
        let charges = basis.charge_set(&[rf, voltages.weights(Component::Dc), voltages.weights(Component::Rod)])?;
        Ok(TrapModel {
            basis,
            voltages,
            ion,
            charges,
            plan: None,
            strictness: Strictness::Warn,
        })
    }

    /// Freezes the kernel selection inside a ball so that every quantity is
    /// a smooth function of position there.
    pub fn with_region(mut self, center: V3, radius: f64) -> Self {
        self.plan = Some(Arc::new(self.charges.plan(Region { center, radius })));
        self
    }

    pub fn with_strictness(mut self, s: Strictness) -> Self {
        self.strictness = s;
        self
    }

    /// Same basis and plan with other voltages.
    pub fn with_voltages(&self, voltages: VoltageSet) -> Result<Self> {
        let mut m = TrapModel::new(self.basis.clone(), voltages, self.ion)?;
        m.plan = self.plan.clone();
        m.strictness = self.strictness;
        Ok(m)
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    pub fn voltages(&self) -> &VoltageSet {
        &self.voltages
    }

    pub fn ion(&self) -> &IonSpecies {
        &self.ion
    }

    /// Conductor containing `r`, if the mesh carries solids.
    pub fn inside_conductor(&self, r: &V3) -> Option<ElectrodeId> {
        self.basis.mesh().conductor_containing(r)
    }

    /// Errors (or warns) when `r` is inside a conductor or closer to a
    /// surface than the nearest panel's size.
    pub fn check_point(&self, r: &V3) -> Result<()> {
        if self.strictness == Strictness::Off {
            return Ok(());
        }
        let problem = if let Some(e) = self.inside_conductor(r) {
            Some(Error::InsideConductor {
                point: [r.x, r.y, r.z],
                electrode: e,
            })
        } else {
            let geom = self.basis.geometry();
            geom.nearest_panel(r).and_then(|(j, dist)| {
                (dist < geom.panels[j].diameter).then(|| Error::NearSurface {
                    point: [r.x, r.y, r.z],
                    electrode: self.basis.electrodes()[self.basis.mesh().panels()[j].electrode],
                    distance: dist,
                })
            })
        };
        match (problem, self.strictness) {
            (None, _) => Ok(()),
            (Some(e), Strictness::Error) => Err(e),
            (Some(e), _) => {
                log::warn!("{e}");
                Ok(())
            }
        }
    }

    /// One pass over the panels for every component. No proximity checks.
    pub fn sample_unchecked(&self, r: &V3) -> Sample {
        let mut pot = [0.0; 3];
        let mut field = [V3::zeros(); 3];
        match &self.plan {
            Some(plan) => self.charges.evaluate_planned(plan, r, &mut pot, &mut field),
            None => self.charges.evaluate(r, &mut pot, &mut field),
        }
        Sample {
            rf_potential: pot[0],
            rf_field: field[0],
            dc_potential: pot[1],
            dc_field: field[1],
            rod_potential: pot[2],
            rod_field: field[2],
        }
    }

    pub fn sample(&self, r: &V3) -> Result<Sample> {
        self.check_point(r)?;
        Ok(self.sample_unchecked(r))
    }

    /// Electrostatic potential (V) of one component. The rf component is
    /// the potential at the peak of the drive.
    pub fn potential(&self, r: &V3, which: Component) -> Result<f64> {
        let s = self.sample(r)?;
        Ok(match which {
            Component::Rf => s.rf_potential,
            Component::Dc => s.dc_potential,
            Component::Rod => s.rod_potential,
            Component::Static => s.dc_potential + s.rod_potential,
        })
    }

    /// Electric field (V/m), from analytic kernel gradients.
    pub fn field(&self, r: &V3, which: Component) -> Result<V3> {
        let s = self.sample(r)?;
        Ok(match which {
            Component::Rf => s.rf_field,
            Component::Dc => s.dc_field,
            Component::Rod => s.rod_field,
            Component::Static => s.dc_field + s.rod_field,
        })
    }

    fn pseudo_ev(&self, s: &Sample) -> f64 {
        pseudopotential_energy(s.rf_field.norm(), &self.ion, self.voltages.rf_omega) / ELEMENTARY_CHARGE
    }

    fn static_ev(&self, s: &Sample) -> f64 {
        self.ion.charge * (s.dc_potential + s.rod_potential) / ELEMENTARY_CHARGE
    }

    /// Pseudopotential energy (eV).
    pub fn pseudopotential(&self, r: &V3) -> Result<f64> {
        Ok(self.pseudo_ev(&self.sample(r)?))
    }

    /// q(φ_dc + φ_rod) in eV.
    pub fn static_energy(&self, r: &V3) -> Result<f64> {
        Ok(self.static_ev(&self.sample(r)?))
    }

    /// Pseudopotential plus static energy (eV).
    pub fn total(&self, r: &V3) -> Result<f64> {
        let s = self.sample(r)?;
        Ok(self.pseudo_ev(&s) + self.static_ev(&s))
    }

    pub fn pseudopotential_unchecked(&self, r: &V3) -> f64 {
        self.pseudo_ev(&self.sample_unchecked(r))
    }

    pub fn total_unchecked(&self, r: &V3) -> f64 {
        let s = self.sample_unchecked(r);
        self.pseudo_ev(&s) + self.static_ev(&s)
    }

    pub fn static_unchecked(&self, r: &V3) -> f64 {
        self.static_ev(&self.sample_unchecked(r))
    }

    /// Energy function of a grid kind, without proximity checks.
    pub fn energy_fn(&self, kind: GridKind) -> impl Fn(&V3) -> f64 + Sync + '_ {
        move |r: &V3| {
            let s = self.sample_unchecked(r);
            match kind {
                GridKind::Pseudo => self.pseudo_ev(&s),
                GridKind::DcStatic => s.dc_potential + s.rod_potential,
                GridKind::Total => self.pseudo_ev(&s) + self.static_ev(&s),
            }
        }
    }
}

/// Potential of one component for a voltage set, without building a model.
pub fn potential_at(basis: &Arc<BasisSet>, v: &VoltageSet, r: &V3, which: Component) -> Result<f64> {
    TrapModel::new(basis.clone(), v.clone(), IonSpecies::default())?.potential(r, which)
}

/// Field of one component for a voltage set.
pub fn field_at(basis: &Arc<BasisSet>, v: &VoltageSet, r: &V3, which: Component) -> Result<V3> {
    TrapModel::new(basis.clone(), v.clone(), IonSpecies::default())?.field(r, which)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::BOLTZMANN;

    #[test]
    fn pseudopotential_formula_closure() {
        let ion = IonSpecies::yb171();
        let phi = pseudopotential_energy(59.8, &ion, DEFAULT_RF_OMEGA);
        let nev = phi / ELEMENTARY_CHARGE * 1e9;
        assert!((nev - 25.2).abs() < 0.005 * 25.2, "{nev}");
        let t = 2.0 * phi / BOLTZMANN * 1e6;
        assert!((t - 585.0).abs() < 0.005 * 585.0, "{t}");
        assert_eq!(pseudopotential_energy(0.0, &ion, DEFAULT_RF_OMEGA), 0.0);
    }

    #[test]
    fn voltage_set_validation() {
        assert!(VoltageSet::operating_point().validate().is_ok());
        let mut v = VoltageSet::operating_point();
        v.rf_omega = 0.0;
        assert!(v.validate().is_err());
        let mut v = VoltageSet::operating_point();
        v.dc.insert(ElectrodeId::Rod(1), 1.0);
        assert!(v.validate().is_err());
        let mut v = VoltageSet::operating_point();
        v.rods[1] = f64::NAN;
        assert!(v.validate().is_err());
        assert!(IonSpecies::new(-1.0, 1.0).is_err());
    }
}
