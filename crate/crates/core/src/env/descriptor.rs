use nalgebra::{Matrix3, SymmetricEigen};

use crate::trajectory::ObjectModel;
use crate::transform::Vec3;

pub const DESCRIPTOR_LEN: usize = 13;
const RADIAL_BINS: usize = 8;

/// Fixed-length shape summary: scale, bounding radius, the largest
/// absolute projection of the points on each principal axis (descending
/// variance), and the fraction of points in eight equal radial bins of
/// `|p| / bounding_radius`.
pub fn object_descriptor(model: &ObjectModel) -> [f64; DESCRIPTOR_LEN] {
    let n = model.points.len() as f64;
    let mean = model.points.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let mut cov = Matrix3::zeros();
    for p in &model.points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut out = [0.0; DESCRIPTOR_LEN];
    out[0] = model.scale;
    out[1] = model.bounding_radius;
    for (slot, &k) in order.iter().enumerate() {
        let axis = eig.eigenvectors.column(k);
        out[2 + slot] = model
            .points
            .iter()
            .map(|p| (p - mean).dot(&axis).abs())
            .fold(0.0, f64::max);
    }
    let r = model.bounding_radius.max(f64::MIN_POSITIVE);
    for p in &model.points {
        let bin = ((p.norm() / r) * RADIAL_BINS as f64).floor() as usize;
        out[5 + bin.min(RADIAL_BINS - 1)] += 1.0 / n;
    }
    out
}
