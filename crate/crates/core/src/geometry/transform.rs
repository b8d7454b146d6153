use nalgebra::{Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

/// Proper rigid motion `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn translation(t: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Rotation3::identity(),
            translation: t,
        }
    }

    /// Rotation by `angle` about `axis` through `pivot`, then a translation.
    pub fn about_pivot(
        axis: Vector3<f64>,
        angle: f64,
        pivot: Vector3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let rotation = if angle == 0.0 {
            Rotation3::identity()
        } else {
            let n = axis.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidArgument("rotation axis must be nonzero".into()));
            }
            Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle)
        };
        Ok(RigidTransform {
            rotation,
            translation: pivot - rotation * pivot + translation,
        })
    }

    /// Builds a transform from a raw 3x3 matrix, rejecting anything that is
    /// not a proper rotation.
    pub fn from_matrix(m: nalgebra::Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let orth = (m.transpose() * m - nalgebra::Matrix3::identity()).abs().max();
        if !(orth < 1e-10) || !((m.determinant() - 1.0).abs() < 1e-10) {
            return Err(Error::InvalidArgument(
                "transform is not a proper rigid motion".into(),
            ));
        }
        Ok(RigidTransform {
            rotation: Rotation3::from_matrix_unchecked(m),
            translation,
        })
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        RigidTransform {
            rotation: r,
            translation: -(r * self.translation),
        }
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Rotation3::identity() && self.translation == Vector3::zeros()
    }
}
