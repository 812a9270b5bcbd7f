use serde::{Deserialize, Serialize};

use super::TrajectoryError;
use crate::transform::Vec3;

/// Sampled object surface in the object frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub id: String,
    pub points: Vec<Vec3>,
    pub scale: f64,
    pub bounding_radius: f64,
}

impl ObjectModel {
    pub fn new(id: impl Into<String>, points: Vec<Vec3>, scale: f64) -> Result<Self, TrajectoryError> {
        if points.len() < 16 {
            return Err(TrajectoryError::Invalid(format!(
                "object model needs at least 16 points, got {}",
                points.len()
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(TrajectoryError::Invalid(format!("object scale must be positive, got {scale}")));
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(TrajectoryError::NonFinite { path: "points".into() });
        }
        let bounding_radius = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
        Ok(ObjectModel {
            id: id.into(),
            points,
            scale,
            bounding_radius,
        })
    }

    /// The same object uniformly resized by `f` about its origin.
    pub fn scaled(&self, f: f64) -> ObjectModel {
        ObjectModel {
            id: self.id.clone(),
            points: self.points.iter().map(|p| p * f).collect(),
            scale: self.scale * f,
            bounding_radius: self.bounding_radius * f,
        }
    }

    /// Nearest sampled surface point to `p` (object frame) and its distance.
    pub fn nearest(&self, p: &Vec3) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, s) in self.points.iter().enumerate() {
            let d = (s - p).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        (best.0, best.1.sqrt())
    }

    /// Approximate signed distance to the surface for star-shaped objects:
    /// negative when `p` is closer to the center than the nearest surface
    /// sample.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let (i, d) = self.nearest(p);
        if p.norm() < self.points[i].norm() {
            -d
        } else {
            d
        }
    }
}

/// Analytic primitive shapes for synthetic tasks, centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObjectShape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    Cylinder { radius: f64, half_height: f64 },
}

impl ObjectShape {
    pub fn scaled(&self, f: f64) -> ObjectShape {
        match *self {
            ObjectShape::Sphere { radius } => ObjectShape::Sphere { radius: radius * f },
            ObjectShape::Box { half_extents } => ObjectShape::Box {
                half_extents: half_extents.map(|h| h * f),
            },
            ObjectShape::Cylinder { radius, half_height } => ObjectShape::Cylinder {
                radius: radius * f,
                half_height: half_height * f,
            },
        }
    }

    /// Height of the center above a supporting plane.
    pub fn rest_height(&self) -> f64 {
        match *self {
            ObjectShape::Sphere { radius } => radius,
            ObjectShape::Box { half_extents } => half_extents[2],
            ObjectShape::Cylinder { half_height, .. } => half_height,
        }
    }

    pub fn is_valid(&self) -> bool {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            ObjectShape::Sphere { radius } => positive(radius),
            ObjectShape::Box { half_extents } => half_extents.iter().all(|&h| positive(h)),
            ObjectShape::Cylinder { radius, half_height } => positive(radius) && positive(half_height),
        }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        match *self {
            ObjectShape::Sphere { radius } => p.norm() - radius,
            ObjectShape::Box { half_extents } => {
                let q = Vec3::new(
                    p.x.abs() - half_extents[0],
                    p.y.abs() - half_extents[1],
                    p.z.abs() - half_extents[2],
                );
                let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                outside + q.x.max(q.y).max(q.z).min(0.0)
            }
            ObjectShape::Cylinder { radius, half_height } => {
                let dr = p.xy().norm() - radius;
                let dz = p.z.abs() - half_height;
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                outside + dr.max(dz).min(0.0)
            }
        }
    }

    /// Deterministic surface sampling with roughly `n` points.
    pub fn sample_surface(&self, n: usize) -> Vec<Vec3> {
        match *self {
            ObjectShape::Sphere { radius } => fibonacci_sphere(n).into_iter().map(|u| u * radius).collect(),
            ObjectShape::Box { half_extents: h } => {
                let area = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
                let total: f64 = area.iter().sum::<f64>() * 2.0;
                let mut pts = Vec::with_capacity(n);
                for axis in 0..3 {
                    let per_face = ((n as f64) * area[axis] / total).ceil().max(4.0);
                    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                    let ratio = h[u] / h[v];
                    let nu = (per_face * ratio).sqrt().ceil().max(2.0) as usize;
                    let nv = (per_face / nu as f64).ceil().max(2.0) as usize;
                    for sign in [-1.0, 1.0] {
                        for i in 0..nu {
                            for j in 0..nv {
                                let mut p = Vec3::zeros();
                                p[axis] = sign * h[axis];
                                p[u] = h[u] * (2.0 * (i as f64 + 0.5) / nu as f64 - 1.0);
                                p[v] = h[v] * (2.0 * (j as f64 + 0.5) / nv as f64 - 1.0);
                                pts.push(p);
                            }
                        }
                    }
                }
                pts
            }
            ObjectShape::Cylinder { radius, half_height } => {
                let side = 2.0 * std::f64::consts::PI * radius * 2.0 * half_height;
                let cap = std::f64::consts::PI * radius * radius;
                let n_side = ((n as f64) * side / (side + 2.0 * cap)).max(8.0);
                let rings = ((n_side * half_height / (std::f64::consts::PI * radius)).sqrt().ceil() as usize).max(2);
                let per_ring = (n_side / rings as f64).ceil().max(6.0) as usize;
                let mut pts = Vec::new();
                for r in 0..rings {
                    let z = half_height * (2.0 * (r as f64 + 0.5) / rings as f64 - 1.0);
                    for k in 0..per_ring {
                        let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5 * (r % 2) as f64) / per_ring as f64;
                        pts.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
                    }
                }
                let n_cap = ((n as f64) * cap / (side + 2.0 * cap)).max(4.0) as usize;
                for sign in [-1.0, 1.0] {
                    for k in 0..n_cap {
                        // sunflower disc
                        let r = radius * ((k as f64 + 0.5) / n_cap as f64).sqrt();
                        let a = k as f64 * GOLDEN_ANGLE;
                        pts.push(Vec3::new(r * a.cos(), r * a.sin(), sign * half_height));
                    }
                }
                pts
            }
        }
    }

    pub fn to_model(&self, id: &str, scale: f64, n: usize) -> ObjectModel {
        ObjectModel::new(id, self.sample_surface(n), scale).expect("sampled shapes are valid")
    }
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = i as f64 * GOLDEN_ANGLE;
            Vec3::new(r * a.cos(), r * a.sin(), z)
        })
        .collect()
}
