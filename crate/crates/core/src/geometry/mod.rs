//! Depth-map and mesh geometry: unprojection, joint alignment, frame
//! averaging, vertex normals, z-buffer rasterization and mask erosion.

mod morph;
mod raster;

pub use morph::erode_mask;
pub use raster::rasterize_mesh_depth;

use nalgebra::Vector4;

use crate::error::{Error, Result};
use crate::model::{check_mask_dims, DepthImage, PointCloud, ProjectionKind, SegMask, Transform4, TriMesh, Vec3};

/// Back-projects every valid pixel (`d > 0`, inside `mask` if given) to a
/// metric point, row-major: `p = (P·E)⁻¹ · (u·a, v·a, d, 1)` with `a = d` for
/// perspective and `a = 1` for orthographic images.
pub fn unproject(depth: &DepthImage, mask: Option<&SegMask>) -> Result<PointCloud> {
    if let Some(m) = mask {
        check_mask_dims(depth, m)?;
    }
    let inv = depth.image_matrix().try_inverse().ok_or(Error::Singular)?;
    let perspective = depth.projection().kind == ProjectionKind::Perspective;
    let mut points = Vec::with_capacity(depth.valid_count());
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let d = f64::from(depth.get(u, v));
            if d <= 0.0 || mask.is_some_and(|m| !m.get(u, v)) {
                continue;
            }
            let a = if perspective { d } else { 1.0 };
            let h = inv * Vector4::new(u as f64 * a, v as f64 * a, d, 1.0);
            points.push(Vec3::new(h.x, h.y, h.z));
        }
    }
    PointCloud::new(points)
}

/// Geometry that can be carried from GT space into a sensor frame.
pub trait Align: Sized {
    fn align(&self, k_g_to_s: &Transform4) -> Self;
}

impl Align for PointCloud {
    fn align(&self, k: &Transform4) -> Self {
        PointCloud::new(self.points().iter().map(|p| k.apply(p)).collect()).expect("finite transform of finite points")
    }
}

impl Align for TriMesh {
    fn align(&self, k: &Transform4) -> Self {
        let vertices = self.vertices().iter().map(|p| k.apply(p)).collect();
        TriMesh::from_parts_unchecked(vertices, self.faces().to_vec())
    }
}

/// Row-vector form `R̃·Kᵀ`, i.e. `p' = K·p` per point.
pub fn align_to_sensor<T: Align>(geometry: &T, k_g_to_s: &Transform4) -> T {
    geometry.align(k_g_to_s)
}

/// Per-pixel mean over the frames in which the pixel is valid; pixels that
/// are invalid in every frame stay invalid.
pub fn average_frames(frames: &[DepthImage]) -> Result<DepthImage> {
    let first = frames.first().ok_or(Error::Empty("frame list"))?;
    if let Some(i) = frames.iter().position(|f| !f.same_geometry(first)) {
        return Err(Error::DimensionMismatch(format!("frame {i} differs in geometry")));
    }
    let n = first.width() * first.height();
    let mut sum = vec![0.0f64; n];
    let mut count = vec![0u32; n];
    for f in frames {
        for ((s, c), &d) in sum.iter_mut().zip(count.iter_mut()).zip(f.data()) {
            if d > 0.0 {
                *s += f64::from(d);
                *c += 1;
            }
        }
    }
    let data = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { (s / f64::from(c)) as f32 })
        .collect();
    first.with_data(data)
}

/// Area-weighted vertex normals following face winding. Vertices without an
/// incident face get `None`.
pub fn vertex_normals(mesh: &TriMesh) -> Vec<Option<Vec3>> {
    let v = mesh.vertices();
    let mut acc = vec![Vec3::zeros(); v.len()];
    for f in mesh.faces() {
        // |cross| is twice the face area.
        let n = (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]]));
        for &i in f {
            acc[i] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            (len > 0.0).then(|| n / len)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProjectionModel;
    use nalgebra::Matrix3;

    fn ortho_identity() -> ProjectionModel {
        ProjectionModel::new(ProjectionKind::Orthographic, Matrix3::identity(), Vec3::zeros()).unwrap()
    }

    fn image_with(w: usize, h: usize, proj: ProjectionModel, set: &[(usize, usize, f32)]) -> DepthImage {
        let mut data = vec![0.0; w * h];
        for &(u, v, d) in set {
            data[v * w + u] = d;
        }
        DepthImage::new(w, h, data, proj, Transform4::identity()).unwrap()
    }

    #[test]
    fn unproject_orthographic_identity() {
        let img = image_with(6, 8, ortho_identity(), &[(3, 5, 0.4)]);
        let cloud = unproject(&img, None).unwrap();
        assert_eq!(cloud.len(), 1);
        let p = cloud.points()[0];
        assert!((p - Vec3::new(3.0, 5.0, f64::from(0.4f32))).norm() < 1e-15);
    }

    #[test]
    fn unproject_pinhole_axis_and_offaxis() {
        let unit = ProjectionModel::pinhole(1.0, 1.0, 0.0, 0.0).unwrap();
        let img = image_with(2, 2, unit, &[(0, 0, 0.7)]);
        let p = unproject(&img, None).unwrap().points()[0];
        assert!((p - Vec3::new(0.0, 0.0, f64::from(0.7f32))).norm() < 1e-15);

        let cam = ProjectionModel::pinhole(500.0, 500.0, 320.0, 240.0).unwrap();
        let img = image_with(821, 241, cam, &[(820, 240, 2.0)]);
        let p = unproject(&img, None).unwrap().points()[0];
        assert!((p - Vec3::new(2.0, 0.0, 2.0)).norm() < 1e-12, "{p}");
    }

    #[test]
    fn unproject_honors_mask_and_validity() {
        let img = image_with(2, 2, ortho_identity(), &[(0, 0, 0.5), (1, 0, 0.5), (1, 1, 0.6)]);
        let mask = SegMask::new(2, 2, vec![true, false, true, true]).unwrap();
        let cloud = unproject(&img, Some(&mask)).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points()[1].x, 1.0);
        let bad = SegMask::filled(3, 2, true).unwrap();
        assert!(unproject(&img, Some(&bad)).is_err());
    }

    #[test]
    fn unproject_applies_extrinsic() {
        let t = Transform4::translation(0.0, 0.0, -0.1);
        let img = DepthImage::new(1, 1, vec![0.5], ortho_identity(), t).unwrap();
        let p = unproject(&img, None).unwrap().points()[0];
        assert!((p.z - (f64::from(0.5f32) + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn align_examples() {
        let cloud = PointCloud::new(vec![Vec3::new(0.0, 0.0, 0.3), Vec3::new(0.1, -0.2, 0.5)]).unwrap();
        assert_eq!(align_to_sensor(&cloud, &Transform4::identity()), cloud);
        let moved = align_to_sensor(&cloud, &Transform4::translation(0.05, 0.0, 0.0));
        assert!((moved.points()[0] - Vec3::new(0.05, 0.0, 0.3)).norm() < 1e-15);
    }

    #[test]
    fn average_examples() {
        let p = ortho_identity();
        let f = |d: f32| image_with(1, 2, p, &[(0, 0, d)]);
        let avg = average_frames(&[f(1.0), f(0.0), f(2.0)]).unwrap();
        assert_eq!(avg.get(0, 0), 1.5);
        assert_eq!(avg.get(0, 1), 0.0);
        let single = f(0.25);
        assert_eq!(average_frames(std::slice::from_ref(&single)).unwrap(), single);
        assert!(average_frames(&[]).is_err());
        let other = image_with(2, 1, p, &[]);
        assert!(average_frames(&[single, other]).is_err());
    }

    fn square_mesh() -> TriMesh {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        TriMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    #[test]
    fn planar_normals() {
        for n in vertex_normals(&square_mesh()) {
            assert_eq!(n, Some(Vec3::new(0.0, 0.0, 1.0)));
        }
    }

    #[test]
    fn cube_corner_normal_is_area_weighted_sum() {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push(Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64));
        }
        // Outward-wound quads split along one diagonal.
        let quads = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let faces: Vec<[usize; 3]> = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        let mesh = TriMesh::new(v.clone(), faces.clone()).unwrap();
        let normals = vertex_normals(&mesh);
        for corner in [0usize, 7] {
            let mut expected = Vec3::zeros();
            for f in faces.iter().filter(|f| f.contains(&corner)) {
                let e1 = v[f[1]] - v[f[0]];
                let e2 = v[f[2]] - v[f[0]];
                let area = 0.5 * e1.cross(&e2).norm();
                expected += area * e1.cross(&e2).normalize();
            }
            let expected = expected.normalize();
            let got = normals[corner].unwrap();
            assert!((got - expected).norm() < 1e-12);
            assert!((got.norm() - 1.0).abs() <= 1e-12);
            // Outward at the corners.
            assert!(got.dot(&(v[corner] - Vec3::repeat(0.5))) > 0.0);
        }
    }

    #[test]
    fn isolated_vertex_has_no_normal() {
        let mut v = square_mesh().vertices().to_vec();
        v.push(Vec3::new(5.0, 5.0, 5.0));
        let mesh = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        let n = vertex_normals(&mesh);
        assert!(n[0].is_some());
        assert!(n[3].is_none() && n[4].is_none());
    }
}
