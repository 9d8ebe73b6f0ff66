//! Cross-object statistics: barycentric (affine) coordinates of metric
//! triples, surface incidence angles, relative surface area and the tables
//! behind the distance, magnitude and barycentric plots.

mod plots;

pub use plots::{
    build_plot_tables, five_number_summary, write_plot_data, BaryRow, BoxplotRow, BoxStats, ObjectAnalysis,
    PlotOptions, PlotTables, ScatterRow,
};

use crate::error::{Error, Result};
use crate::geometry::vertex_normals;
use crate::metrics::median;
use crate::model::{TriMesh, Vec3};

/// `w_i = μ_i / (μ_a + μ_b + μ_c)`.
pub fn barycentric_weights(mu: [f64; 3]) -> Result<[f64; 3]> {
    if mu.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
        return Err(Error::invalid("barycentric inputs must be finite and non-negative"));
    }
    let sum: f64 = mu.iter().sum();
    if sum <= 0.0 {
        return Err(Error::UndefinedWeights);
    }
    Ok(mu.map(|m| m / sum))
}

/// Angle between `normal` and the boresight axis, folded into [0°, 90°].
pub fn incidence_angle_deg(normal: &Vec3) -> f64 {
    (normal.z.abs() / normal.norm()).min(1.0).acos().to_degrees()
}

/// Median per-vertex angle between the surface normal and the +z depth axis,
/// in degrees. The mesh must already be in the radar frame.
pub fn incidence_angle_median(mesh: &TriMesh) -> Result<f64> {
    let angles: Vec<f64> = vertex_normals(mesh).iter().flatten().map(incidence_angle_deg).collect();
    if angles.is_empty() {
        return Err(Error::Empty("valid vertex normals"));
    }
    Ok(median(&angles))
}

/// Axis-aligned rectangle in the x/y plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb2 {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Aabb2 {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        if !(min[0] <= max[0] && min[1] <= max[1]) {
            return Err(Error::invalid("bounding box min must not exceed max"));
        }
        Ok(Aabb2 { min, max })
    }

    /// x/y bounds of a point set.
    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Result<Self> {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            min = [min[0].min(p.x), min[1].min(p.y)];
            max = [max[0].max(p.x), max[1].max(p.y)];
        }
        if !min[0].is_finite() {
            return Err(Error::Empty("point set"));
        }
        Self::new(min, max)
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    pub fn intersection_area(&self, other: &Aabb2) -> f64 {
        let w = (self.max[0].min(other.max[0]) - self.min[0].max(other.min[0])).max(0.0);
        let h = (self.max[1].min(other.max[1]) - self.min[1].max(other.min[1])).max(0.0);
        w * h
    }
}

/// Fraction of `aperture` covered by `object`: `area(A ∩ B) / area(B)`.
pub fn relative_surface_area(object: &Aabb2, aperture: &Aabb2) -> Result<f64> {
    let b = aperture.area();
    if !(b > 0.0) {
        return Err(Error::invalid("aperture box has zero area"));
    }
    Ok(object.intersection_area(aperture) / b)
}
