//! Manifest-driven batch evaluation and result persistence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{incidence_angle_median, relative_surface_area, Aabb2, ObjectAnalysis};
use crate::error::{Error, Result};
use crate::format::{round9, sig9};
use crate::geometry::align_to_sensor;
use crate::imaging::{backproject, db_threshold_filter, max_projection, VoxelGridSpec};
use crate::metrics::{evaluate_capture, MetricReport};
use crate::model::io::{load_calibration, load_depth_image, load_mask, load_mesh, read_file, write_file};
use crate::model::{CaptureRecord, DepthImage, DistanceTag, MaterialClass, MaterialTable, TriMesh, Vec3};
use crate::signal::{load_raw_cube, signal_magnitude, RawSignalCube};

pub const THREADS_ENV: &str = "NEARFIELD_THREADS";
pub const DEFAULT_THRESHOLD_DB: f64 = -14.0;

/// One capture as listed in a manifest. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub object: String,
    pub sensor: String,
    pub distance_cm: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material_class: Option<MaterialClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outside_fov: Option<bool>,
    #[serde(default)]
    pub quasi_static: bool,
    pub gt_mesh: PathBuf,
    pub calibration: PathBuf,
    #[serde(default)]
    pub frames: Vec<PathBuf>,
    #[serde(default)]
    pub masks: Vec<PathBuf>,
    /// Raw radar frames; when `frames` is empty the depth is reconstructed
    /// from these by backprojection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_signals: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptureManifest {
    pub captures: Vec<ManifestEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl CaptureManifest {
    pub fn new(captures: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Self {
        CaptureManifest {
            captures,
            root: root.into(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: CaptureManifest = serde_json::from_slice(&read_file(path)?)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &serde_json::to_vec_pretty(self)?)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    pub fn material_class(&self, e: &ManifestEntry, table: &MaterialTable) -> Result<MaterialClass> {
        e.material_class
            .or_else(|| table.class_of(&e.object))
            .ok_or_else(|| Error::invalid(format!("no material class for object {:?}", e.object)))
    }

    pub fn outside_fov(&self, e: &ManifestEntry, table: &MaterialTable) -> bool {
        e.outside_fov.unwrap_or_else(|| table.is_outside_fov(&e.object))
    }

    pub fn load_raw(&self, e: &ManifestEntry) -> Result<Vec<RawSignalCube>> {
        e.raw_signals.iter().map(|p| load_raw_cube(self.resolve(p))).collect()
    }

    /// Loads the frames, masks and calibration of one entry. Radar entries
    /// without depth frames are reconstructed on `grid` (default: the
    /// full-scale grid centered at the capture distance).
    pub fn load_capture(&self, e: &ManifestEntry, recon: &RadarRecon) -> Result<CaptureRecord> {
        let distance = DistanceTag::try_from(e.distance_cm).map_err(Error::InvalidArgument)?;
        let frames = if !e.frames.is_empty() {
            e.frames.iter().map(|p| load_depth_image(self.resolve(p))).collect::<Result<Vec<_>>>()?
        } else if !e.raw_signals.is_empty() {
            self.load_raw(e)?
                .iter()
                .map(|cube| recon.depth_from_cube(cube, distance))
                .collect::<Result<Vec<_>>>()?
        } else {
            return Err(Error::Empty("capture frames and raw signals"));
        };
        let capture = CaptureRecord {
            object: e.object.clone(),
            sensor_id: e.sensor.clone(),
            frames,
            masks: e.masks.iter().map(|p| load_mask(self.resolve(p))).collect::<Result<_>>()?,
            calibration: load_calibration(self.resolve(&e.calibration))?,
            distance,
            material_class: self.material_class(e, &MaterialTable::builtin())?,
            quasi_static: e.quasi_static,
        };
        capture.validate()?;
        Ok(capture)
    }
}

/// Backprojection settings for turning raw radar frames into depth maps.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarRecon {
    pub grid: Option<VoxelGridSpec>,
    pub threshold_db: f64,
}

impl Default for RadarRecon {
    fn default() -> Self {
        RadarRecon {
            grid: None,
            threshold_db: DEFAULT_THRESHOLD_DB,
        }
    }
}

impl RadarRecon {
    pub fn depth_from_cube(&self, cube: &RawSignalCube, distance: DistanceTag) -> Result<DepthImage> {
        let grid = match &self.grid {
            Some(g) => *g,
            None => VoxelGridSpec::full_scale(Vec3::new(0.0, 0.0, distance.meters()))?,
        };
        let volume = backproject(cube, &grid)?;
        let (depth, confidence) = max_projection(&volume)?;
        db_threshold_filter(&depth, &confidence, self.threshold_db)
    }
}

/// Per-object, per-sensor erosion kernel sizes; missing entries mean 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ErosionTable(pub BTreeMap<String, BTreeMap<String, usize>>);

impl ErosionTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&read_file(path.as_ref())?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &serde_json::to_vec_pretty(self)?)
    }

    pub fn kernel(&self, object: &str, sensor: &str) -> usize {
        self.0.get(object).and_then(|s| s.get(sensor)).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    /// Empty selects every sensor in the manifest.
    pub sensors: Vec<String>,
    /// Empty selects every distance.
    pub distances: Vec<DistanceTag>,
    pub recon: RadarRecon,
    pub erosion: Option<PathBuf>,
    pub output: PathBuf,
    pub threads: Option<usize>,
}

impl PipelineConfig {
    pub fn new(manifest: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            manifest: manifest.into(),
            sensors: Vec::new(),
            distances: Vec::new(),
            recon: RadarRecon::default(),
            erosion: None,
            output: output.into(),
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.recon.threshold_db <= 0.0) {
            return Err(Error::invalid("threshold_db must be <= 0"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be >= 1"));
        }
        Ok(())
    }

    fn selects(&self, e: &ManifestEntry) -> bool {
        (self.sensors.is_empty() || self.sensors.contains(&e.sensor))
            && (self.distances.is_empty() || self.distances.iter().any(|d| d.centimeters() == e.distance_cm))
    }
}

/// Parses a `key = value` config file. Blank lines and `#` comments are
/// ignored; keys are returned in file order.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Thread count from `NEARFIELD_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `f` on a dedicated pool of `threads` workers (default: rayon's global pool).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads.or_else(threads_from_env) {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Evaluates every selected capture. Reports are sorted by object, sensor
/// and distance regardless of scheduling.
pub fn evaluate_manifest(cfg: &PipelineConfig) -> Result<Vec<MetricReport>> {
    cfg.validate()?;
    let manifest = CaptureManifest::load(&cfg.manifest)?;
    let erosion = match &cfg.erosion {
        Some(p) => ErosionTable::load(p)?,
        None => ErosionTable::default(),
    };
    let entries: Vec<&ManifestEntry> = manifest.captures.iter().filter(|e| cfg.selects(e)).collect();
    if entries.is_empty() {
        return Err(Error::Empty("selected captures"));
    }
    let mut meshes: BTreeMap<&Path, TriMesh> = BTreeMap::new();
    for e in &entries {
        if !meshes.contains_key(e.gt_mesh.as_path()) {
            meshes.insert(&e.gt_mesh, load_mesh(manifest.resolve(&e.gt_mesh))?);
        }
    }
    let mut reports = with_threads(cfg.threads, || {
        entries
            .par_iter()
            .map(|e| {
                log::info!("evaluating {}/{} at {} cm", e.object, e.sensor, e.distance_cm);
                let capture = manifest.load_capture(e, &cfg.recon)?;
                evaluate_capture(&capture, &meshes[e.gt_mesh.as_path()], erosion.kernel(&e.object, &e.sensor))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    reports.sort_by(|a, b| {
        (&a.object, &a.sensor, a.distance.centimeters()).cmp(&(&b.object, &b.sensor, b.distance.centimeters()))
    });
    Ok(reports)
}

fn rounded(reports: &[MetricReport]) -> Vec<MetricReport> {
    let mut out = reports.to_vec();
    for r in &mut out {
        for m in &mut r.metrics {
            for v in [&mut m.mean_cm, &mut m.std_cm, &mut m.median_cm].into_iter().flatten() {
                *v = round9(*v);
            }
        }
    }
    out
}

pub fn reports_to_json(reports: &[MetricReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&rounded(reports))? + "\n")
}

pub fn reports_to_csv(reports: &[MetricReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(["object", "sensor", "distance_cm", "metric", "mean_cm", "std_cm", "median_cm", "count"])
        .map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map(sig9).unwrap_or_default();
    for r in reports {
        for m in &r.metrics {
            w.write_record([
                r.object.clone(),
                r.sensor.clone(),
                r.distance.centimeters().to_string(),
                m.metric.to_string(),
                opt(m.mean_cm),
                opt(m.std_cm),
                opt(m.median_cm),
                m.count.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `results.json` and `results.csv` into `dir`.
pub fn write_results(reports: &[MetricReport], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    write_file(&dir.join("results.json"), reports_to_json(reports)?.as_bytes())?;
    write_file(&dir.join("results.csv"), reports_to_csv(reports)?.as_bytes())
}

pub fn load_reports(path: impl AsRef<Path>) -> Result<Vec<MetricReport>> {
    Ok(serde_json::from_slice(&read_file(path.as_ref())?)?)
}

/// Per-object scatter attributes. Magnitude, incidence angle and relative
/// area come from the first entry of `radar_sensor` for that object (the
/// one with raw signals, if any); the aperture box is the x/y extent of the
/// antenna positions.
pub fn object_analyses(manifest: &CaptureManifest, radar_sensor: &str) -> Result<Vec<ObjectAnalysis>> {
    let table = MaterialTable::builtin();
    let mut by_object: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &manifest.captures {
        by_object.entry(&e.object).or_default().push(e);
    }
    let mut out = Vec::new();
    for (object, entries) in by_object {
        let first = entries[0];
        let radar = entries
            .iter()
            .filter(|e| e.sensor == radar_sensor)
            .max_by_key(|e| (!e.raw_signals.is_empty(), std::cmp::Reverse(e.distance_cm)))
            .copied();
        let mut row = ObjectAnalysis {
            object: object.to_string(),
            material_class: manifest.material_class(first, &table)?.as_str().to_string(),
            outside_fov: manifest.outside_fov(first, &table),
            magnitude: None,
            incidence_median_deg: None,
            rel_area: None,
        };
        if let Some(e) = radar {
            let mesh = align_to_sensor(&load_mesh(manifest.resolve(&e.gt_mesh))?, &load_calibration(manifest.resolve(&e.calibration))?);
            row.incidence_median_deg = incidence_angle_median(&mesh).ok();
            let cubes = manifest.load_raw(e)?;
            if !cubes.is_empty() {
                row.magnitude = Some(signal_magnitude(&cubes)?);
                let array = cubes[0].array();
                let aperture = Aabb2::of_points(array.tx().iter().chain(array.rx()))?;
                let object_box = Aabb2::of_points(mesh.vertices())?;
                row.rel_area = relative_surface_area(&object_box, &aperture).ok();
            }
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{MetricKind, MetricStats};

    #[test]
    fn key_values() {
        let kv = parse_key_values("# comment\nmanifest = a/b.json\n\nthreads=4 # trailing\n").unwrap();
        assert_eq!(kv, vec![("manifest".into(), "a/b.json".into()), ("threads".into(), "4".into())]);
        assert!(matches!(parse_key_values("oops"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn erosion_defaults_to_zero() {
        let t: ErosionTable = serde_json::from_str(r#"{"cardboard": {"radar": 5}}"#).unwrap();
        assert_eq!(t.kernel("cardboard", "radar"), 5);
        assert_eq!(t.kernel("cardboard", "stereo"), 0);
        assert_eq!(t.kernel("sponge", "radar"), 0);
    }

    #[test]
    fn csv_rows_and_rounding() {
        let r = MetricReport {
            object: "o".into(),
            sensor: "s".into(),
            distance: DistanceTag::Cm50,
            erosion_k: 0,
            metrics: vec![
                MetricStats::from_meters(MetricKind::C1, &[0.001, 0.003]),
                MetricStats::from_meters(MetricKind::P2, &[]),
            ],
        };
        let csv = reports_to_csv(std::slice::from_ref(&r)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "object,sensor,distance_cm,metric,mean_cm,std_cm,median_cm,count");
        assert_eq!(lines[1], "o,s,50,C1,0.2,0.1,0.2,2");
        assert_eq!(lines[2], "o,s,50,P2,,,,0");
        let back: Vec<MetricReport> = serde_json::from_str(&reports_to_json(&[r]).unwrap()).unwrap();
        assert_eq!(back[0].mean_cm(MetricKind::C1), Some(0.2));
    }

    #[test]
    fn config_validation() {
        let mut c = PipelineConfig::new("m.json", "out");
        assert!(c.validate().is_ok());
        c.recon.threshold_db = 3.0;
        assert!(c.validate().is_err());
    }
}
