//! Physical constants (CODATA 2018) and small unit helpers. Everything
//! inside the crate is SI; these helpers exist for readability at call sites.

use std::f64::consts::PI;

pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Atomic mass of 171Yb in u. The ion mass ignores the missing electron.
pub const YB171_MASS_U: f64 = 170.936_3;

/// 1 / (4 pi eps0)
pub const COULOMB: f64 = 1.0 / (4.0 * PI * EPSILON_0);

pub const fn um(x: f64) -> f64 {
    x * 1e-6
}

pub const fn mm(x: f64) -> f64 {
    x * 1e-3
}

pub const fn nm(x: f64) -> f64 {
    x * 1e-9
}

pub fn deg(x: f64) -> f64 {
    x.to_radians()
}

/// Angular frequency for a frequency given in MHz.
pub fn mhz_angular(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e6
}

/// Joules to electron-volts.
pub fn j_to_ev(e: f64) -> f64 {
    e / ELEMENTARY_CHARGE
}

pub fn ev_to_j(e: f64) -> f64 {
    e * ELEMENTARY_CHARGE
}
