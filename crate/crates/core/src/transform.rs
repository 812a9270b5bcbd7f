//! Rigid-body pose algebra.
//!
//! Rotations are unit quaternions stored as `(w, x, y, z)`, right-handed,
//! acting actively on vectors. Every constructor and composition
//! renormalizes, so the quaternion norm stays within `1e-9` of one.

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// A proper rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a transform from a `(w, x, y, z)` quaternion, normalizing it.
    ///
    /// Returns `None` for a zero or non-finite quaternion.
    pub fn from_parts(wxyz: [f64; 4], xyz: [f64; 3]) -> Option<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 || xyz.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Self {
            rotation: UnitQuaternion::new_normalize(q),
            translation: Vec3::new(xyz[0], xyz[1], xyz[2]),
        })
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: t,
        }
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: renormalize(rotation),
            translation,
        }
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let rotation = UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self::from_rotation(rotation)
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn xyz(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: renormalize(self.rotation * other.rotation),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.inverse();
        RigidTransform {
            rotation: renormalize(inv),
            translation: -(inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Geodesic angle between the two rotations, `2 acos(|<q1, q2>|)`.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        quaternion_angle(&self.rotation, &other.rotation)
    }
}

/// Geodesic distance between two unit quaternions in radians.
pub fn quaternion_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let dot = a.quaternion().dot(b.quaternion()).abs().min(1.0);
    2.0 * dot.acos()
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    // leave already-unit quaternions untouched so identity maps are exact
    if (q.quaternion().norm_squared() - 1.0).abs() <= 1e-12 {
        q
    } else {
        UnitQuaternion::new_normalize(q.into_inner())
    }
}

/// Wire representation shared by every file format: `xyz` plus `wxyz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub xyz: [f64; 3],
    pub wxyz: [f64; 4],
}

impl From<&RigidTransform> for PoseRecord {
    fn from(t: &RigidTransform) -> Self {
        PoseRecord {
            xyz: t.xyz(),
            wxyz: t.wxyz(),
        }
    }
}

impl PoseRecord {
    pub fn to_transform(&self) -> Option<RigidTransform> {
        RigidTransform::from_parts(self.wxyz, self.xyz)
    }

    /// Builds the transform without renormalizing a quaternion that already
    /// has unit norm to within `tol`, so stored values round-trip exactly.
    pub fn to_transform_exact(&self, tol: f64) -> Option<RigidTransform> {
        let [w, x, y, z] = self.wxyz;
        let q = Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() <= tol && self.xyz.iter().all(|v| v.is_finite()) {
            Some(RigidTransform {
                rotation: UnitQuaternion::new_unchecked(q),
                translation: Vec3::new(self.xyz[0], self.xyz[1], self.xyz[2]),
            })
        } else {
            self.to_transform()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_is_neutral() {
        let t = RigidTransform::from_parts([0.9, 0.1, -0.3, 0.2], [0.4, -1.0, 2.0]).unwrap();
        let a = RigidTransform::identity().compose(&t);
        let b = t.compose(&RigidTransform::identity());
        for (u, v) in a.wxyz().iter().zip(t.wxyz()) {
            assert!((u - v).abs() < 1e-15);
        }
        assert!((a.translation() - t.translation()).norm() < 1e-15);
        assert!((b.translation() - t.translation()).norm() < 1e-15);
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = RigidTransform::from_axis_angle(&Vec3::z(), FRAC_PI_2);
        let p = t.transform_point(&Vec3::x());
        assert!((p - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn inverse_round_trip() {
        let t = RigidTransform::from_parts([0.3, 0.5, -0.7, 0.1], [1.0, 2.0, 3.0]).unwrap();
        let id = t.compose(&t.inverse());
        assert!(id.translation().norm() < 1e-12);
        assert!(id.rotation_angle_to(&RigidTransform::identity()) < 1e-7);
    }

    #[test]
    fn rejects_zero_quaternion() {
        assert!(RigidTransform::from_parts([0.0; 4], [0.0; 3]).is_none());
    }

    #[test]
    fn long_compositions_stay_unit() {
        let step = RigidTransform::from_parts([0.99, 0.05, 0.07, -0.02], [0.01, 0.0, 0.0]).unwrap();
        let mut acc = RigidTransform::identity();
        for _ in 0..10_000 {
            acc = acc.compose(&step);
        }
        assert!((acc.rotation().quaternion().norm() - 1.0).abs() < 1e-9);
    }
}
