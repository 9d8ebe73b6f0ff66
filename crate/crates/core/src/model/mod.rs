//! Shared domain types: transforms, depth images, masks, point clouds,
//! meshes and per-sensor capture records.
//!
//! All lengths are meters. Depth value `0.0` marks an invalid pixel and every
//! consumer treats exactly `d > 0` as valid.

pub mod io;

use nalgebra::{Matrix3, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

const DET_EPS: f64 = 1e-12;

/// Homogeneous 4×4 rigid/affine transform with last row `(0, 0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform4(Matrix4<f64>);

impl Transform4 {
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transform entry".into()));
        }
        let last = m.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::invalid("transform last row must be (0, 0, 0, 1)"));
        }
        if m.determinant().abs() <= DET_EPS {
            return Err(Error::Singular);
        }
        Ok(Transform4(m))
    }

    /// Builds a transform from 16 row-major entries.
    pub fn from_row_major(values: &[f64]) -> Result<Self> {
        if values.len() != 16 {
            return Err(Error::invalid(format!(
                "expected 16 matrix entries, got {}",
                values.len()
            )));
        }
        Self::new(Matrix4::from_row_slice(values))
    }

    pub fn identity() -> Self {
        Transform4(Matrix4::identity())
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Transform4(Matrix4::new_translation(&Vec3::new(x, y, z)))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.0[(r, c)];
            }
        }
        out
    }

    pub fn inverse(&self) -> Self {
        // Invertibility is checked at construction.
        let inv = self.0.try_inverse().expect("invertible by construction");
        Transform4(clean_last_row(inv))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Transform4) -> Self {
        Transform4(clean_last_row(self.0 * other.0))
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        let h = self.0 * Vector4::new(p.x, p.y, p.z, 1.0);
        Vec3::new(h.x, h.y, h.z)
    }
}

impl Default for Transform4 {
    fn default() -> Self {
        Self::identity()
    }
}

fn clean_last_row(mut m: Matrix4<f64>) -> Matrix4<f64> {
    m[(3, 0)] = 0.0;
    m[(3, 1)] = 0.0;
    m[(3, 2)] = 0.0;
    m[(3, 3)] = 1.0;
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Perspective,
    Orthographic,
}

/// Image formation model: `(u·a, v·a, d) = I·x + t` with `a = d` for
/// perspective and `a = 1` for orthographic images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionModel {
    pub kind: ProjectionKind,
    pub intrinsics: Matrix3<f64>,
    pub offset: Vec3,
}

impl ProjectionModel {
    pub fn new(kind: ProjectionKind, intrinsics: Matrix3<f64>, offset: Vec3) -> Result<Self> {
        if intrinsics.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection parameter".into()));
        }
        if intrinsics.determinant().abs() <= DET_EPS {
            return Err(Error::Singular);
        }
        Ok(ProjectionModel {
            kind,
            intrinsics,
            offset,
        })
    }

    /// Pinhole camera with focal lengths and principal point in pixels.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0);
        Self::new(ProjectionKind::Perspective, k, Vec3::zeros())
    }

    /// Orthographic image whose pixel `(u, v)` is centered at metric
    /// `(origin_x + u·pitch_x, origin_y + v·pitch_y)`.
    pub fn orthographic_grid(origin_x: f64, origin_y: f64, pitch_x: f64, pitch_y: f64) -> Result<Self> {
        if !(pitch_x > 0.0 && pitch_y > 0.0) {
            return Err(Error::invalid("orthographic pixel pitch must be positive"));
        }
        let scale = Matrix3::new(1.0 / pitch_x, 0.0, 0.0, 0.0, 1.0 / pitch_y, 0.0, 0.0, 0.0, 1.0);
        let offset = Vec3::new(-origin_x / pitch_x, -origin_y / pitch_y, 0.0);
        Self::new(ProjectionKind::Orthographic, scale, offset)
    }

    /// The 4×4 matrix embedding `I` and `t`.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.intrinsics);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.offset);
        m
    }
}

/// A W×H depth map in meters, row-major, `0` = invalid.
///
/// `transform` maps metric sensor-space points into the frame the projection
/// model operates in; the full image transform is `projection · transform`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
    projection: ProjectionModel,
    transform: Transform4,
}

impl DepthImage {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<f32>,
        projection: ProjectionModel,
        transform: Transform4,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("depth image dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}×{} image with {} values",
                width,
                height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("depth value {v}")));
        }
        if data.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("negative depth value"));
        }
        Ok(DepthImage {
            width,
            height,
            data,
            projection,
            transform,
        })
    }

    /// All-invalid image with the given geometry.
    pub fn empty(width: usize, height: usize, projection: ProjectionModel, transform: Transform4) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height], projection, transform)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn projection(&self) -> &ProjectionModel {
        &self.projection
    }

    pub fn transform(&self) -> &Transform4 {
        &self.transform
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v) > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }

    /// `{d > 0}` as a mask.
    pub fn valid_mask(&self) -> SegMask {
        SegMask {
            width: self.width,
            height: self.height,
            bits: self.data.iter().map(|&d| d > 0.0).collect(),
        }
    }

    /// Full image transform `projection · transform`.
    pub fn image_matrix(&self) -> Matrix4<f64> {
        self.projection.matrix() * self.transform.matrix()
    }

    /// Same geometry, new values.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.width, self.height, data, self.projection, self.transform)
    }

    pub fn same_geometry(&self, other: &DepthImage) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.projection == other.projection
            && self.transform == other.transform
    }

    /// Invalidates every pixel outside `mask`.
    pub fn masked(&self, mask: &SegMask) -> Result<Self> {
        check_mask_dims(self, mask)?;
        let data = self
            .data
            .iter()
            .zip(&mask.bits)
            .map(|(&d, &m)| if m { d } else { 0.0 })
            .collect();
        self.with_data(data)
    }
}

pub(crate) fn check_mask_dims(depth: &DepthImage, mask: &SegMask) -> Result<()> {
    if depth.width != mask.width || depth.height != mask.height {
        return Err(Error::DimensionMismatch(format!(
            "mask {}×{} vs depth {}×{}",
            mask.width, mask.height, depth.width, depth.height
        )));
    }
    Ok(())
}

/// Binary object mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("mask dimensions must be positive"));
        }
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}×{} mask with {} entries",
                width,
                height,
                bits.len()
            )));
        }
        Ok(SegMask { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn intersect(&self, other: &SegMask) -> Result<SegMask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch("mask intersection".into()));
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && b).collect();
        Ok(SegMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    pub fn is_subset_of(&self, other: &SegMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("point coordinate".into()));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }
}

/// Triangle mesh with validated indices and no degenerate faces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

pub(crate) const DEGENERATE_AREA: f64 = 1e-12;

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("mesh vertex".into()));
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&i) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::invalid(format!(
                    "face {fi} references vertex {i} of {}",
                    vertices.len()
                )));
            }
            let area = 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]])).norm();
            if area <= DEGENERATE_AREA {
                return Err(Error::invalid(format!("face {fi} is degenerate")));
            }
        }
        Ok(TriMesh { vertices, faces })
    }

    /// For meshes derived from an already validated one by an invertible map.
    pub(crate) fn from_parts_unchecked(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        TriMesh { vertices, faces }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }
}

/// Nominal object-to-sensor distance of a capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum DistanceTag {
    Cm30,
    Cm40,
    Cm50,
}

impl DistanceTag {
    pub fn centimeters(self) -> u32 {
        match self {
            DistanceTag::Cm30 => 30,
            DistanceTag::Cm40 => 40,
            DistanceTag::Cm50 => 50,
        }
    }

    pub fn meters(self) -> f64 {
        f64::from(self.centimeters()) / 100.0
    }
}

impl TryFrom<u32> for DistanceTag {
    type Error = String;

    fn try_from(cm: u32) -> Result<Self, String> {
        match cm {
            30 => Ok(DistanceTag::Cm30),
            40 => Ok(DistanceTag::Cm40),
            50 => Ok(DistanceTag::Cm50),
            other => Err(format!("unsupported distance {other} cm (expected 30, 40 or 50)")),
        }
    }
}

impl From<DistanceTag> for u32 {
    fn from(d: DistanceTag) -> u32 {
        d.centimeters()
    }
}

/// Coarse material grouping used in the radar signal analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaterialClass {
    Metal,
    FibersAndStone,
    Polymer,
    Skin,
    FoamAndFabric,
    OutsideFov,
}

impl MaterialClass {
    pub fn as_str(self) -> &'static str {
        match self {
            MaterialClass::Metal => "metal",
            MaterialClass::FibersAndStone => "fibers-and-stone",
            MaterialClass::Polymer => "polymer",
            MaterialClass::Skin => "skin",
            MaterialClass::FoamAndFabric => "foam-and-fabric",
            MaterialClass::OutsideFov => "outside-fov",
        }
    }
}

/// Object → material assignment shipped with the crate, plus the list of
/// objects that extend beyond the radar field of view.
#[derive(Debug, Clone, Deserialize)]
pub struct MaterialTable {
    pub classes: std::collections::BTreeMap<String, MaterialClass>,
    pub outside_fov: Vec<String>,
}

impl MaterialTable {
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("materials.json")).expect("bundled material table is valid")
    }

    pub fn class_of(&self, object: &str) -> Option<MaterialClass> {
        self.classes.get(object).copied()
    }

    pub fn is_outside_fov(&self, object: &str) -> bool {
        self.outside_fov.iter().any(|o| o == object)
    }
}

/// All frames of one sensor for one object at one distance.
#[derive(Debug, Clone)]
pub struct CaptureRecord {
    pub object: String,
    pub sensor_id: String,
    pub frames: Vec<DepthImage>,
    /// Either empty (frames are pre-filtered) or one mask per frame.
    pub masks: Vec<SegMask>,
    /// GT space → sensor space.
    pub calibration: Transform4,
    pub distance: DistanceTag,
    pub material_class: MaterialClass,
    /// Use the first frame instead of the frame average.
    pub quasi_static: bool,
}

impl CaptureRecord {
    pub fn validate(&self) -> Result<()> {
        let first = self.frames.first().ok_or(Error::Empty("capture frames"))?;
        if let Some(bad) = self.frames.iter().position(|f| {
            f.width() != first.width() || f.height() != first.height() || f.projection() != first.projection()
        }) {
            return Err(Error::DimensionMismatch(format!(
                "frame {bad} of {}/{} differs in geometry from frame 0",
                self.object, self.sensor_id
            )));
        }
        if !self.masks.is_empty() {
            if self.masks.len() != self.frames.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} masks for {} frames",
                    self.masks.len(),
                    self.frames.len()
                )));
            }
            for m in &self.masks {
                check_mask_dims(first, m)?;
            }
        }
        Ok(())
    }
}
