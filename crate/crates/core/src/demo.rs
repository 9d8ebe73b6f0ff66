//! Synthetic scenes: a small multi-sensor capture set with known ground
//! truth, and random point-scatterer layouts for the radar chain.

use std::path::{Path, PathBuf};

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{align_to_sensor, rasterize_mesh_depth};
use crate::model::io::{save_calibration, save_depth_image, save_mask, save_mesh};
use crate::model::{DepthImage, DistanceTag, ProjectionModel, Transform4, TriMesh, Vec3};
use crate::pipeline::{CaptureManifest, ErosionTable, ManifestEntry};
use crate::signal::{build_square_array, save_raw_cube, simulate_fscw, FscwConfig, PointScatterer};

pub const DEMO_RADAR: &str = "radar";

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub seed: u64,
    pub objects: Vec<String>,
    pub distances: Vec<DistanceTag>,
    /// Half-width of the uniform depth noise added to sensor frames.
    pub noise_m: f64,
    /// Sensor frames are the exact rasterized ground truth.
    pub self_compare: bool,
    /// Also write a simulated raw radar frame per radar capture.
    pub radar_signals: bool,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            seed: 7,
            objects: vec!["cardboard".into(), "sponge".into(), "wood-plane".into()],
            distances: vec![DistanceTag::Cm30, DistanceTag::Cm40],
            noise_m: 1e-3,
            self_compare: false,
            radar_signals: true,
        }
    }
}

struct DemoSensor {
    name: &'static str,
    width: usize,
    height: usize,
    frames: usize,
    quasi_static: bool,
    bias_m: f64,
    erosion: usize,
}

const SENSORS: [DemoSensor; 4] = [
    DemoSensor { name: DEMO_RADAR, width: 81, height: 81, frames: 1, quasi_static: true, bias_m: 0.0, erosion: 2 },
    DemoSensor { name: "stereo", width: 64, height: 48, frames: 3, quasi_static: false, bias_m: 0.0, erosion: 3 },
    DemoSensor { name: "tof", width: 48, height: 40, frames: 1, quasi_static: true, bias_m: 1e-3, erosion: 0 },
    DemoSensor { name: "lidar", width: 64, height: 48, frames: 3, quasi_static: false, bias_m: -5e-4, erosion: 1 },
];

impl DemoSensor {
    fn projection(&self) -> Result<ProjectionModel> {
        if self.name == DEMO_RADAR {
            // 1 mm pixels centered on boresight.
            let half = (self.width / 2) as f64 * 1e-3;
            ProjectionModel::orthographic_grid(-half, -half, 1e-3, 1e-3)
        } else {
            let f = 2.5 * self.width as f64;
            ProjectionModel::pinhole(f, f, self.width as f64 / 2.0, self.height as f64 / 2.0)
        }
    }
}

/// Heightfield patch of ±3 cm in GT space; the shape depends on `variant`:
/// a Gaussian bump, a plane tilted about x, or a flat plane.
pub fn demo_mesh(variant: usize) -> TriMesh {
    const N: usize = 25;
    let half = 0.03;
    let mut vertices = Vec::with_capacity(N * N);
    for j in 0..N {
        for i in 0..N {
            let x = -half + 2.0 * half * i as f64 / (N - 1) as f64;
            let y = -half + 2.0 * half * j as f64 / (N - 1) as f64;
            let z = match variant % 3 {
                0 => -0.01 * (-(x * x + y * y) / (2.0 * 0.012f64.powi(2))).exp(),
                1 => y * 20f64.to_radians().tan(),
                _ => 0.0,
            };
            vertices.push(Vec3::new(x, y, z));
        }
    }
    let mut faces = Vec::with_capacity(2 * (N - 1) * (N - 1));
    for j in 0..N - 1 {
        for i in 0..N - 1 {
            let a = j * N + i;
            faces.push([a, a + 1, a + N + 1]);
            faces.push([a, a + N + 1, a + N]);
        }
    }
    TriMesh::new(vertices, faces).expect("valid heightfield")
}

/// GT → sensor: a small rotation about boresight, then a shift to `distance`.
fn demo_calibration(distance: DistanceTag, sensor: usize) -> Transform4 {
    let a = 0.05 * sensor as f64;
    let (s, c) = a.sin_cos();
    #[rustfmt::skip]
    let m = Matrix4::new(
        c, -s, 0.0, 0.002 * sensor as f64,
        s, c, 0.0, -0.001 * sensor as f64,
        0.0, 0.0, 1.0, distance.meters(),
        0.0, 0.0, 0.0, 1.0,
    );
    Transform4::new(m).expect("rigid transform")
}

/// Uniformly placed scatterers with reflectivity in [0.5, 1] inside the box
/// `center ± half_extent`.
pub fn random_scatterers(n: usize, seed: u64, center: Vec3, half_extent: Vec3) -> Result<Vec<PointScatterer>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let offset = Vec3::from_fn(|i, _| rng.gen_range(-1.0..=1.0) * half_extent[i]);
            PointScatterer::new(center + offset, rng.gen_range(0.5..=1.0))
        })
        .collect()
}

fn rel(dir: &Path, name: String) -> (PathBuf, PathBuf) {
    (dir.join(&name), PathBuf::from(name))
}

/// Writes meshes, calibrations, depth frames, masks, raw radar frames,
/// `manifest.json` and `erosion.json` into `dir`. Returns the manifest path.
pub fn generate_demo(dir: impl AsRef<Path>, opts: &DemoOptions) -> Result<PathBuf> {
    let dir = dir.as_ref();
    if opts.objects.is_empty() || opts.distances.is_empty() {
        return Err(Error::Empty("demo objects or distances"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut entries = Vec::new();
    let mut erosion = ErosionTable::default();
    for (oi, object) in opts.objects.iter().enumerate() {
        let mesh = demo_mesh(oi);
        let (mesh_path, mesh_rel) = rel(dir, format!("{object}/gt.obj"));
        save_mesh(&mesh_path, &mesh)?;
        for (si, sensor) in SENSORS.iter().enumerate() {
            erosion.0.entry(object.clone()).or_default().insert(sensor.name.into(), sensor.erosion);
            for &distance in &opts.distances {
                let d = distance.centimeters();
                let base = format!("{object}/{}/{d}", sensor.name);
                let calibration = demo_calibration(distance, si);
                let (calib_path, calib_rel) = rel(dir, format!("{base}/calibration.json"));
                save_calibration(&calib_path, &calibration)?;

                let aligned = align_to_sensor(&mesh, &calibration);
                let gt = rasterize_mesh_depth(
                    &aligned,
                    &sensor.projection()?,
                    &Transform4::identity(),
                    sensor.width,
                    sensor.height,
                )?;
                let mask = gt.valid_mask();
                let mut frames = Vec::new();
                let mut masks = Vec::new();
                for f in 0..sensor.frames {
                    let frame = if opts.self_compare {
                        gt.clone()
                    } else {
                        noisy(&gt, sensor.bias_m, opts.noise_m, &mut rng)?
                    };
                    let (p, r) = rel(dir, format!("{base}/frame{f}.dmap"));
                    save_depth_image(&p, &frame)?;
                    frames.push(r);
                    let (p, r) = rel(dir, format!("{base}/mask{f}.pgm"));
                    save_mask(&p, &mask)?;
                    masks.push(r);
                }
                let mut raw_signals = Vec::new();
                if sensor.name == DEMO_RADAR && opts.radar_signals {
                    let (p, r) = rel(dir, format!("{base}/raw0.rsc"));
                    save_raw_cube(&p, &demo_radar_frame(&aligned)?)?;
                    raw_signals.push(r);
                }
                entries.push(ManifestEntry {
                    object: object.clone(),
                    sensor: sensor.name.into(),
                    distance_cm: d,
                    material_class: None,
                    outside_fov: None,
                    quasi_static: sensor.quasi_static,
                    gt_mesh: mesh_rel.clone(),
                    calibration: calib_rel,
                    frames,
                    masks,
                    raw_signals,
                });
            }
        }
    }
    let manifest_path = dir.join("manifest.json");
    CaptureManifest::new(entries, dir).save(&manifest_path)?;
    erosion.save(dir.join("erosion.json"))?;
    Ok(manifest_path)
}

fn noisy(gt: &DepthImage, bias: f64, noise: f64, rng: &mut ChaCha8Rng) -> Result<DepthImage> {
    let data = gt
        .data()
        .iter()
        .map(|&z| {
            if z > 0.0 {
                let n = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
                (f64::from(z) + bias + n) as f32
            } else {
                0.0
            }
        })
        .collect();
    gt.with_data(data)
}

/// Coarse radar frame of the mesh vertices: 16 TX, 16 RX, 8 frequencies.
fn demo_radar_frame(mesh: &TriMesh) -> Result<crate::signal::RawSignalCube> {
    let array = build_square_array(0.138, 8)?;
    let config = FscwConfig::new(72e9, 82e9, 8)?;
    let scatterers = mesh
        .vertices()
        .iter()
        .map(|&p| PointScatterer::new(p, 1.0))
        .collect::<Result<Vec<_>>>()?;
    simulate_fscw(&scatterers, &array, &config, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{evaluate_manifest, PipelineConfig};

    #[test]
    fn self_compare_scene_has_zero_error() {
        let dir = tempfile::tempdir().unwrap();
        let opts = DemoOptions {
            objects: vec!["cardboard".into()],
            distances: vec![DistanceTag::Cm30],
            self_compare: true,
            radar_signals: false,
            ..DemoOptions::default()
        };
        let manifest = generate_demo(dir.path(), &opts).unwrap();
        let reports = evaluate_manifest(&PipelineConfig::new(manifest, dir.path())).unwrap();
        assert_eq!(reports.len(), 4);
        for r in &reports {
            for m in &r.metrics {
                assert!(m.count > 0, "{} {}", r.sensor, m.metric);
                assert_eq!(m.mean_cm, Some(0.0), "{} {}", r.sensor, m.metric);
            }
        }
    }

    #[test]
    fn scatterers_are_seeded() {
        let c = Vec3::new(0.0, 0.0, 0.3);
        let h = Vec3::repeat(0.01);
        let a = random_scatterers(5, 1, c, h).unwrap();
        assert_eq!(a, random_scatterers(5, 1, c, h).unwrap());
        assert_ne!(a, random_scatterers(5, 2, c, h).unwrap());
        assert!(a.iter().all(|s| (s.position - c).abs().max() <= 0.01));
    }
}
