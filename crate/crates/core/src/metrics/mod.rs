//! Depth-deviation metrics between sensor and ground-truth reconstructions.
//!
//! * C1: one-sided Chamfer distance from the rendered GT cloud to the sensor cloud.
//! * C2: one-sided Chamfer distance from the sensor cloud to the rendered GT cloud.
//! * P1: per-pixel |D_s − D̂_g| over pixels valid in both maps.
//! * P2: as P1, with the GT validity mask eroded by a k×k kernel first.
//! * P1s / P2s: signed sensor-minus-GT variants (positive = sensor farther).
//!
//! Statistics are reported in centimeters with population standard deviation.

mod kdtree;

pub use kdtree::{squared_distance, KdTree};

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{align_to_sensor, average_frames, erode_mask, rasterize_mesh_depth, unproject};
use crate::model::{DepthImage, DistanceTag, PointCloud, SegMask, TriMesh};
use crate::model::CaptureRecord;

/// Per-point distance from each source point to its nearest destination
/// point, using a k-d tree over `dest`.
pub fn chamfer_one_sided(source: &PointCloud, dest: &PointCloud) -> Result<Vec<f64>> {
    if dest.is_empty() {
        return Err(Error::Empty("destination cloud"));
    }
    let tree = KdTree::new(dest.points());
    Ok(source
        .points()
        .par_iter()
        .map(|p| tree.nearest(p).expect("non-empty tree").1.sqrt())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProjectiveErrors {
    /// |D − F| per domain pixel, row-major.
    pub absolute: Vec<f64>,
    /// D − F per domain pixel, row-major.
    pub signed: Vec<f64>,
}

/// Per-pixel depth differences over the pixels of `domain`.
pub fn projective_error(d: &DepthImage, f: &DepthImage, domain: &SegMask) -> Result<ProjectiveErrors> {
    if d.width() != f.width() || d.height() != f.height() || d.projection() != f.projection() {
        return Err(Error::DimensionMismatch("projective error needs maps on a common image plane".into()));
    }
    if domain.width() != d.width() || domain.height() != d.height() {
        return Err(Error::DimensionMismatch("domain mask size".into()));
    }
    let mut out = ProjectiveErrors::default();
    for ((&a, &b), &m) in d.data().iter().zip(f.data()).zip(domain.bits()) {
        if m {
            let s = f64::from(a) - f64::from(b);
            out.signed.push(s);
            out.absolute.push(s.abs());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

/// Mean, population standard deviation and median (midpoint for even counts).
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty("value list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(Summary {
        mean,
        std: var.sqrt(),
        median: median(values),
    })
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    C1,
    C2,
    P1,
    P2,
    P1s,
    P2s,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::C1,
        MetricKind::C2,
        MetricKind::P1,
        MetricKind::P2,
        MetricKind::P1s,
        MetricKind::P2s,
    ];

    /// The four unsigned metrics.
    pub const UNSIGNED: [MetricKind; 4] = [MetricKind::C1, MetricKind::C2, MetricKind::P1, MetricKind::P2];

    pub fn is_signed(self) -> bool {
        matches!(self, MetricKind::P1s | MetricKind::P2s)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown metric {s:?}")))
    }
}

/// Statistics of one metric in centimeters; empty domains have `count == 0`
/// and no statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub metric: MetricKind,
    pub count: usize,
    pub mean_cm: Option<f64>,
    pub std_cm: Option<f64>,
    pub median_cm: Option<f64>,
}

impl MetricStats {
    pub fn from_meters(metric: MetricKind, values_m: &[f64]) -> Self {
        match summarize(values_m) {
            Ok(s) => MetricStats {
                metric,
                count: values_m.len(),
                mean_cm: Some(s.mean * 100.0),
                std_cm: Some(s.std * 100.0),
                median_cm: Some(s.median * 100.0),
            },
            Err(_) => MetricStats {
                metric,
                count: 0,
                mean_cm: None,
                std_cm: None,
                median_cm: None,
            },
        }
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub object: String,
    pub sensor: String,
    pub distance: DistanceTag,
    pub erosion_k: usize,
    pub metrics: Vec<MetricStats>,
}

impl MetricReport {
    pub fn get(&self, metric: MetricKind) -> Option<&MetricStats> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    pub fn mean_cm(&self, metric: MetricKind) -> Option<f64> {
        self.get(metric).and_then(|m| m.mean_cm)
    }
}

/// Intermediate products of one capture evaluation, kept for inspection.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub sensor_depth: DepthImage,
    pub gt_depth: DepthImage,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub p1: ProjectiveErrors,
    pub p2: ProjectiveErrors,
    pub report: MetricReport,
}

/// Sensor depth used for evaluation: masks applied per frame, then either the
/// first frame (quasi-static) or the per-pixel average of valid samples.
pub fn sensor_depth(capture: &CaptureRecord) -> Result<DepthImage> {
    capture.validate()?;
    let masked: Vec<DepthImage> = if capture.masks.is_empty() {
        capture.frames.clone()
    } else {
        capture
            .frames
            .iter()
            .zip(&capture.masks)
            .map(|(f, m)| f.masked(m))
            .collect::<Result<_>>()?
    };
    if capture.quasi_static {
        Ok(masked.into_iter().next().expect("validated non-empty"))
    } else {
        average_frames(&masked)
    }
}

/// Full metric pipeline for one sensor capture against the GT mesh (in GT space).
pub fn evaluate_capture_detailed(capture: &CaptureRecord, gt_mesh: &TriMesh, erosion_k: usize) -> Result<Evaluation> {
    let depth = sensor_depth(capture)?;
    let gt_sensor = align_to_sensor(gt_mesh, &capture.calibration);
    let gt_depth = rasterize_mesh_depth(&gt_sensor, depth.projection(), depth.transform(), depth.width(), depth.height())?;

    let gt_cloud = unproject(&gt_depth, None)?;
    let sensor_cloud = unproject(&depth, None)?;
    let (c1, c2) = if gt_cloud.is_empty() || sensor_cloud.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (chamfer_one_sided(&gt_cloud, &sensor_cloud)?, chamfer_one_sided(&sensor_cloud, &gt_cloud)?)
    };

    let sensor_valid = depth.valid_mask();
    let gt_valid = gt_depth.valid_mask();
    let domain = sensor_valid.intersect(&gt_valid)?;
    let eroded = sensor_valid.intersect(&erode_mask(&gt_valid, erosion_k))?;
    let p1 = projective_error(&depth, &gt_depth, &domain)?;
    let p2 = projective_error(&depth, &gt_depth, &eroded)?;

    let metrics = vec![
        MetricStats::from_meters(MetricKind::C1, &c1),
        MetricStats::from_meters(MetricKind::C2, &c2),
        MetricStats::from_meters(MetricKind::P1, &p1.absolute),
        MetricStats::from_meters(MetricKind::P2, &p2.absolute),
        MetricStats::from_meters(MetricKind::P1s, &p1.signed),
        MetricStats::from_meters(MetricKind::P2s, &p2.signed),
    ];
    for m in metrics.iter().filter(|m| m.is_empty()) {
        log::warn!(
            "{}/{} at {} cm: empty domain for {}",
            capture.object,
            capture.sensor_id,
            capture.distance.centimeters(),
            m.metric
        );
    }
    let report = MetricReport {
        object: capture.object.clone(),
        sensor: capture.sensor_id.clone(),
        distance: capture.distance,
        erosion_k,
        metrics,
    };
    Ok(Evaluation {
        sensor_depth: depth,
        gt_depth,
        c1,
        c2,
        p1,
        p2,
        report,
    })
}

pub fn evaluate_capture(capture: &CaptureRecord, gt_mesh: &TriMesh, erosion_k: usize) -> Result<MetricReport> {
    evaluate_capture_detailed(capture, gt_mesh, erosion_k).map(|e| e.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MaterialClass, ProjectionModel, Transform4, Vec3};

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect()).unwrap()
    }

    #[test]
    fn chamfer_examples() {
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
        assert_eq!(chamfer_one_sided(&a, &a).unwrap(), vec![0.0, 0.0]);
        let d = chamfer_one_sided(&cloud(&[[0.0, 0.0, 0.0]]), &cloud(&[[3.0, 4.0, 0.0]])).unwrap();
        assert_eq!(d, vec![5.0]);
        assert!(chamfer_one_sided(&a, &PointCloud::default()).is_err());
        assert!(chamfer_one_sided(&PointCloud::default(), &a).unwrap().is_empty());
    }

    #[test]
    fn chamfer_is_one_sided() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]);
        assert_eq!(chamfer_one_sided(&a, &b).unwrap(), vec![0.0]);
        assert_eq!(chamfer_one_sided(&b, &a).unwrap(), vec![0.0, 10.0]);
    }

    fn plane_image(values: &[f32]) -> DepthImage {
        let proj = ProjectionModel::orthographic_grid(0.0, 0.0, 0.001, 0.001).unwrap();
        DepthImage::new(values.len(), 1, values.to_vec(), proj, Transform4::identity()).unwrap()
    }

    #[test]
    fn projective_examples() {
        let d = plane_image(&[0.305, 0.3]);
        let f = plane_image(&[0.300, 0.3]);
        let all = SegMask::filled(2, 1, true).unwrap();
        let e = projective_error(&d, &d, &all).unwrap();
        assert!(e.absolute.iter().all(|&v| v == 0.0));
        let e = projective_error(&d, &f, &all).unwrap();
        assert!((e.absolute[0] - 0.005).abs() < 1e-7);
        assert!((e.signed[0] - 0.005).abs() < 1e-7);
        assert_eq!(e.signed[1], 0.0);
        let only_second = SegMask::new(2, 1, vec![false, true]).unwrap();
        assert_eq!(projective_error(&d, &f, &only_second).unwrap().absolute.len(), 1);
        assert!(projective_error(&d, &plane_image(&[0.3]), &all).is_err());
    }

    #[test]
    fn projective_sign_convention() {
        // GT 2 mm deeper than the sensor.
        let sensor = plane_image(&[0.300, 0.310, 0.320]);
        let gt = plane_image(&[0.302, 0.312, 0.322]);
        let all = SegMask::filled(3, 1, true).unwrap();
        let e = projective_error(&sensor, &gt, &all).unwrap();
        let mean: f64 = e.signed.iter().sum::<f64>() / 3.0;
        assert!((mean + 0.002).abs() < 1e-7);
        let swapped = projective_error(&gt, &sensor, &all).unwrap();
        for (a, b) in e.signed.iter().zip(&swapped.signed) {
            assert_eq!(*a, -*b);
        }
        for (s, a) in e.signed.iter().zip(&e.absolute) {
            assert_eq!(s.abs(), *a);
        }
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.std - 0.8165).abs() < 1e-4);
        assert_eq!(s.median, 2.0);
        assert_eq!(summarize(&[5.0]).unwrap(), Summary { mean: 5.0, std: 0.0, median: 5.0 });
        assert_eq!(summarize(&[3.0, 1.0]).unwrap().median, 2.0);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn metric_names_roundtrip() {
        for m in MetricKind::ALL {
            assert_eq!(m.to_string().parse::<MetricKind>().unwrap(), m);
        }
        assert_eq!(serde_json::to_string(&MetricKind::P1s).unwrap(), "\"P1s\"");
    }

    fn plane_mesh(z: f64) -> TriMesh {
        let v = vec![
            Vec3::new(-0.0105, -0.0105, z),
            Vec3::new(0.0105, -0.0105, z),
            Vec3::new(0.0105, 0.0105, z),
            Vec3::new(-0.0105, 0.0105, z),
        ];
        TriMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    fn capture_of(depth: DepthImage) -> CaptureRecord {
        CaptureRecord {
            object: "plane".into(),
            sensor_id: "ortho".into(),
            frames: vec![depth],
            masks: Vec::new(),
            calibration: Transform4::identity(),
            distance: DistanceTag::Cm30,
            material_class: MaterialClass::Metal,
            quasi_static: false,
        }
    }

    #[test]
    fn self_comparison_is_zero() {
        let mesh = plane_mesh(0.3);
        let proj = ProjectionModel::orthographic_grid(-0.01, -0.01, 0.001, 0.001).unwrap();
        let gt = rasterize_mesh_depth(&mesh, &proj, &Transform4::identity(), 21, 21).unwrap();
        let report = evaluate_capture(&capture_of(gt), &mesh, 3).unwrap();
        for m in &report.metrics {
            assert_eq!(m.mean_cm, Some(0.0), "{}", m.metric);
            assert!(m.count > 0);
        }
    }

    #[test]
    fn empty_domain_is_flagged_not_fatal() {
        let mesh = plane_mesh(0.3);
        let proj = ProjectionModel::orthographic_grid(1.0, 1.0, 0.001, 0.001).unwrap();
        let depth = DepthImage::new(2, 2, vec![0.3; 4], proj, Transform4::identity()).unwrap();
        let report = evaluate_capture(&capture_of(depth), &mesh, 0).unwrap();
        assert!(report.metrics.iter().all(|m| m.is_empty()));
    }

    #[test]
    fn masks_and_quasi_static_frame_selection() {
        let proj = ProjectionModel::orthographic_grid(0.0, 0.0, 0.001, 0.001).unwrap();
        let f0 = DepthImage::new(2, 1, vec![0.3, 0.4], proj, Transform4::identity()).unwrap();
        let f1 = DepthImage::new(2, 1, vec![0.5, 0.6], proj, Transform4::identity()).unwrap();
        let mut cap = capture_of(f0);
        cap.frames.push(f1);
        cap.masks = vec![SegMask::new(2, 1, vec![true, false]).unwrap(); 2];
        let avg = sensor_depth(&cap).unwrap();
        assert_eq!(avg.data(), &[0.4, 0.0]);
        cap.quasi_static = true;
        assert_eq!(sensor_depth(&cap).unwrap().data(), &[0.3, 0.0]);
        cap.masks.pop();
        assert!(sensor_depth(&cap).is_err());
    }
}
