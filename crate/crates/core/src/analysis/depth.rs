use nalgebra::Vector3;

use crate::error::{Error, Result};

type V3 = Vector3<f64>;

/// A maximum along a ray, energies relative to the ray origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Barrier {
    pub distance: f64,
    pub energy: f64,
}

/// Energy profile along one ray from the minimum.
#[derive(Clone, Debug, PartialEq)]
pub struct Ray {
    pub direction: V3,
    /// First local maximum (a sample at least as high as its neighbours
    /// within ±`window` steps and higher than the start).
    pub first: Option<Barrier>,
    /// Highest sample on the ray.
    pub global: Barrier,
    /// Distance at which the ray entered a conductor, if it did.
    pub blocked_at: Option<f64>,
    /// The energy was still rising at the last sample.
    pub unbounded: bool,
}

impl Ray {
    /// Barrier height for escape along this ray: the first local maximum,
    /// infinite when the energy keeps rising to the end of an open ray.
    pub fn barrier(&self) -> f64 {
        match self.first {
            Some(b) => b.energy,
            None if self.unbounded => f64::INFINITY,
            None => self.global.energy,
        }
    }

    /// Same with the global maximum.
    pub fn global_barrier(&self) -> f64 {
        if self.unbounded {
            f64::INFINITY
        } else {
            self.global.energy
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthReport {
    pub plus: Ray,
    pub minus: Ray,
}

impl DepthReport {
    /// Escape barrier: the lower of the two first-maximum barriers.
    pub fn depth(&self) -> f64 {
        self.plus.barrier().min(self.minus.barrier())
    }

    /// The lower of the two global maxima.
    pub fn global_depth(&self) -> f64 {
        self.plus.global_barrier().min(self.minus.global_barrier())
    }

    /// True when either ray ended in a conductor before its first maximum.
    pub fn truncated(&self) -> bool {
        [&self.plus, &self.minus]
            .iter()
            .any(|r| r.blocked_at.is_some() && r.first.is_none())
    }
}

const WINDOW: usize = 10;

fn scan(
    f: &dyn Fn(&V3) -> f64,
    blocked: &dyn Fn(&V3) -> bool,
    origin: V3,
    direction: V3,
    step: f64,
    range: f64,
) -> Ray {
    let f0 = f(&origin);
    let n = (range / step).round() as usize;
    let mut values = vec![0.0];
    let mut blocked_at = None;
    for k in 1..=n {
        let s = k as f64 * step;
        let r = origin + direction * s;
        if blocked(&r) {
            blocked_at = Some(s);
            break;
        }
        values.push(f(&r) - f0);
    }
    let last = values.len() - 1;
    let first = (1..last).find_map(|i| {
        let lo = i.saturating_sub(WINDOW);
        let hi = (i + WINDOW).min(last);
        let peak = values[i] > 0.0 && values[i] > values[i - 1] && values[lo..=hi].iter().all(|&v| v <= values[i]);
        // a peak needs a descent after it, not just the end of the ray
        (peak && i < last && values[i + 1] < values[i]).then(|| Barrier {
            distance: i as f64 * step,
            energy: values[i],
        })
    });
    let (gi, gv) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let unbounded = blocked_at.is_none() && gi == last && last > 0;
    Ray {
        direction,
        first,
        global: Barrier {
            distance: gi as f64 * step,
            energy: gv.max(0.0),
        },
        blocked_at,
        unbounded,
    }
}

/// Samples the energy along ±`direction` from `origin` every `step` out to
/// `range` or until `blocked` reports a conductor.
pub fn trap_depth(
    f: &dyn Fn(&V3) -> f64,
    blocked: &dyn Fn(&V3) -> bool,
    origin: V3,
    direction: V3,
    step: f64,
    range: f64,
) -> Result<DepthReport> {
    if !(step > 0.0 && range >= step) || direction.norm() == 0.0 {
        return Err(Error::InvalidArgument("depth ray needs a direction, step > 0 and range >= step".into()));
    }
    let d = direction.normalize();
    Ok(DepthReport {
        plus: scan(f, blocked, origin, d, step, range),
        minus: scan(f, blocked, origin, -d, step, range),
    })
}
