//! Generators and invariant checks shared by the property suite and the
//! acceptance runner.
#![allow(dead_code)]

use nalgebra::{Rotation3, Unit};
use nearfield::analysis::barycentric_weights;
use nearfield::geometry::{average_frames, erode_mask};
use nearfield::imaging::{backproject, VoxelGridSpec};
use nearfield::metrics::chamfer_one_sided;
use nearfield::signal::{build_square_array, simulate_fscw, FscwConfig, PointScatterer};
use nearfield::{DepthImage, PointCloud, ProjectionModel, SegMask, Transform4, Vec3};
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type CheckResult = Result<(), TestCaseError>;

pub fn vec3(range: std::ops::Range<f64>) -> impl Strategy<Value = Vec3> {
    (range.clone(), range.clone(), range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

pub fn cloud(max_len: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(vec3(-1.0..1.0), 1..=max_len)
}

pub fn rigid() -> impl Strategy<Value = Transform4> {
    (vec3(-1.0..1.0), 0.0..std::f64::consts::PI, vec3(-2.0..2.0)).prop_filter_map("degenerate axis", |(axis, angle, t)| {
        let axis = Unit::try_new(axis, 1e-3)?;
        let mut m = Rotation3::from_axis_angle(&axis, angle).to_homogeneous();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Transform4::new(m).ok()
    })
}

pub fn mask() -> impl Strategy<Value = SegMask> {
    (1usize..24, 1usize..24, 0.3f64..0.95)
        .prop_flat_map(|(w, h, _)| prop::collection::vec(prop::bool::weighted(0.8), w * h).prop_map(move |b| (w, h, b)))
        .prop_map(|(w, h, bits)| SegMask::new(w, h, bits).unwrap())
}

pub fn mu_triple() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(prop_oneof![Just(0.0), 1e-6..10.0]).prop_filter("all zero", |m| m.iter().any(|&x| x > 0.0))
}

pub struct SmallScene {
    pub scatterers: Vec<PointScatterer>,
}

impl std::fmt::Debug for SmallScene {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.scatterers.iter().map(|s| (s.position, s.reflectivity))).finish()
    }
}

pub fn small_scene() -> impl Strategy<Value = SmallScene> {
    prop::collection::vec((vec3(-0.01..0.01), 0.1f64..1.0), 1..=3).prop_map(|v| SmallScene {
        scatterers: v
            .into_iter()
            .map(|(p, a)| PointScatterer::new(p + Vec3::new(0.0, 0.0, 0.3), a).unwrap())
            .collect(),
    })
}

fn small_grid() -> VoxelGridSpec {
    VoxelGridSpec::centered(Vec3::new(0.0, 0.0, 0.3), Vec3::repeat(0.004), [6, 6, 6]).unwrap()
}

/// Multiplying the raw signal by `s·e^{iθ}` scales |c_BP| by `s` and keeps the peak.
pub fn check_backprojection_phase_scale(scene: &SmallScene, theta: f64, scale: f64) -> CheckResult {
    let array = build_square_array(0.138, 2).unwrap();
    let config = FscwConfig::new(72e9, 82e9, 8).unwrap();
    let cube = simulate_fscw(&scene.scatterers, &array, &config, false).unwrap();
    let grid = small_grid();
    let base = backproject(&cube, &grid).unwrap();
    let factor = Complex64::from_polar(scale, theta);
    let moved = backproject(&cube.map(|z| z * factor).unwrap(), &grid).unwrap();
    let peak = base.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
    for (a, b) in base.values().iter().zip(moved.values()) {
        prop_assert!((b.norm() - scale * a.norm()).abs() <= 1e-9 * scale * peak.max(1e-300));
    }
    let (ia, ib) = (base.argmax(), moved.argmax());
    if ia != ib {
        // Only acceptable for numerically tied voxels.
        let (a, b) = (base.get(ia[0], ia[1], ia[2]).norm(), base.get(ib[0], ib[1], ib[2]).norm());
        prop_assert!((a - b).abs() <= 1e-9 * peak, "argmax moved {ia:?} -> {ib:?}");
    }
    Ok(())
}

/// Applying one rigid motion to both clouds leaves Chamfer distances unchanged.
pub fn check_chamfer_rigid(a: &[Vec3], b: &[Vec3], k: &Transform4) -> CheckResult {
    let (ca, cb) = (PointCloud::new(a.to_vec()).unwrap(), PointCloud::new(b.to_vec()).unwrap());
    let move_all = |v: &[Vec3]| PointCloud::new(v.iter().map(|p| k.apply(p)).collect()).unwrap();
    let before = chamfer_one_sided(&ca, &cb).unwrap();
    let after = chamfer_one_sided(&move_all(a), &move_all(b)).unwrap();
    for (x, y) in before.iter().zip(&after) {
        prop_assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
    }
    Ok(())
}

/// erode(m, k2) ⊆ erode(m, k1) ⊆ m for k1 ≤ k2.
pub fn check_erosion(m: &SegMask, k1: usize, k2: usize) -> CheckResult {
    let (k1, k2) = (k1.min(k2), k1.max(k2));
    let (e1, e2) = (erode_mask(m, k1), erode_mask(m, k2));
    prop_assert!(e1.is_subset_of(m));
    prop_assert!(e2.is_subset_of(&e1));
    prop_assert!(e2.count() <= e1.count());
    Ok(())
}

pub fn check_barycentric(mu: [f64; 3], scale: f64) -> CheckResult {
    let w = barycentric_weights(mu).unwrap();
    prop_assert!(w.iter().all(|&x| x >= 0.0));
    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    let ws = barycentric_weights(mu.map(|m| m * scale)).unwrap();
    for (a, b) in w.iter().zip(&ws) {
        prop_assert!((a - b).abs() <= 1e-12, "{w:?} vs {ws:?}");
    }
    let argmax = |v: &[f64; 3]| (0..3).fold(0, |b, i| if v[i] > v[b] { i } else { b });
    let i = argmax(&mu);
    prop_assert!(w.iter().all(|&x| x <= w[i]), "largest μ at {i} but w = {w:?}");
    Ok(())
}

pub fn frames() -> impl Strategy<Value = (Vec<Vec<f32>>, Vec<usize>)> {
    (2usize..6)
        .prop_flat_map(|n| {
            let frame = prop::collection::vec(prop_oneof![1 => Just(0.0f32), 4 => 0.1f32..2.0], 12);
            (prop::collection::vec(frame, n), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        })
}

/// The average does not depend on frame order (bitwise).
pub fn check_average_permutation(data: &[Vec<f32>], perm: &[usize]) -> CheckResult {
    let projection = ProjectionModel::pinhole(4.0, 4.0, 2.0, 1.5).unwrap();
    let make = |d: &Vec<f32>| DepthImage::new(4, 3, d.clone(), projection, Transform4::identity()).unwrap();
    let frames: Vec<DepthImage> = data.iter().map(make).collect();
    let permuted: Vec<DepthImage> = perm.iter().map(|&i| frames[i].clone()).collect();
    let (a, b) = (average_frames(&frames).unwrap(), average_frames(&permuted).unwrap());
    prop_assert_eq!(
        a.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        b.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
    Ok(())
}
