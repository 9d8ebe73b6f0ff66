//! Backprojection image formation, maximum-intensity projection and
//! confidence filtering.
//!
//! For every voxel center `p` the confidence phasor is
//!
//! ```text
//! c(p) = Σ_n Σ_i Σ_j s(f_n, r_i, t_j) · exp(+i·2π·f_n·(|t_j − p| + |p − r_i|)/c)
//! ```
//!
//! i.e. a phase-only matched filter without spreading compensation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DepthImage, ProjectionModel, Transform4, Vec3};
use crate::signal::RawSignalCube;

/// Regular voxel grid; `origin` is the center of voxel (0, 0, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGridSpec {
    pub origin: Vec3,
    pub step: Vec3,
    pub dims: [usize; 3],
}

impl VoxelGridSpec {
    pub fn new(origin: Vec3, step: Vec3, dims: [usize; 3]) -> Result<Self> {
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("grid origin".into()));
        }
        if !step.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::invalid("voxel steps must be positive"));
        }
        if dims.contains(&0) {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        Ok(VoxelGridSpec { origin, step, dims })
    }

    /// Grid of `dims` voxels whose middle voxel center sits at `center`.
    pub fn centered(center: Vec3, step: Vec3, dims: [usize; 3]) -> Result<Self> {
        let half = Vec3::new(
            (dims[0].saturating_sub(1)) as f64 * step.x / 2.0,
            (dims[1].saturating_sub(1)) as f64 * step.y / 2.0,
            (dims[2].saturating_sub(1)) as f64 * step.z / 2.0,
        );
        Self::new(center - half, step, dims)
    }

    /// 301 × 301 × 201 voxel centers at 1 mm pitch around `center`.
    pub fn full_scale(center: Vec3) -> Result<Self> {
        Self::centered(center, Vec3::repeat(1e-3), [301, 301, 201])
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn center(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        self.origin + Vec3::new(ix as f64 * self.step.x, iy as f64 * self.step.y, iz as f64 * self.step.z)
    }

    /// Linear index; z runs fastest so each (x, y) column is contiguous.
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iy * self.dims[0] + ix) * self.dims[2] + iz
    }

    /// Nearest voxel to a point, if inside the grid.
    pub fn locate(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.step[a]).round();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceVolume {
    spec: VoxelGridSpec,
    values: Vec<Complex64>,
}

impl ConfidenceVolume {
    pub fn new(spec: VoxelGridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != spec.voxel_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} voxels",
                values.len(),
                spec.voxel_count()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("confidence value".into()));
        }
        Ok(ConfidenceVolume { spec, values })
    }

    pub fn spec(&self) -> &VoxelGridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> Complex64 {
        self.values[self.spec.index(ix, iy, iz)]
    }

    /// Voxel with the largest |c|; ties resolve to the first in index order.
    pub fn argmax(&self) -> [usize; 3] {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, z) in self.values.iter().enumerate() {
            let m = z.norm();
            if m > best_val {
                best_val = m;
                best = i;
            }
        }
        let nz = self.spec.dims[2];
        let nx = self.spec.dims[0];
        let col = best / nz;
        [col % nx, col / nx, best % nz]
    }
}

/// Backprojects a raw cube onto the voxel grid, parallel over (x, y) columns
/// of the current rayon pool. Per-voxel summation order is fixed, so results
/// do not depend on the thread count.
pub fn backproject(cube: &RawSignalCube, spec: &VoxelGridSpec) -> Result<ConfidenceVolume> {
    let (n_rx, n_tx, n_f) = cube.dims();
    let cfg = cube.config();
    let tx = cube.array().tx();
    let rx = cube.array().rx();

    // [rx][f][tx] so the innermost TX sum is contiguous.
    let mut signal = vec![Complex64::new(0.0, 0.0); n_rx * n_f * n_tx];
    for i in 0..n_rx {
        for j in 0..n_tx {
            for n in 0..n_f {
                signal[(i * n_f + n) * n_tx + j] = cube.get(i, j, n);
            }
        }
    }
    let k0 = 2.0 * PI * cfg.f_min / cfg.c;
    let dk = 2.0 * PI * cfg.step() / cfg.c;

    let [nx, _, nz] = spec.dims;
    let mut values = vec![Complex64::new(0.0, 0.0); spec.voxel_count()];
    values.par_chunks_mut(nz).enumerate().for_each_init(
        || (vec![Complex64::new(0.0, 0.0); n_f * n_tx], vec![Complex64::new(0.0, 0.0); n_rx * n_f]),
        |(tx_phase, rx_phase), (col, out)| {
            let (ix, iy) = (col % nx, col / nx);
            for (iz, slot) in out.iter_mut().enumerate() {
                let p = spec.center(ix, iy, iz);
                for (j, t) in tx.iter().enumerate() {
                    let d = (t - p).norm();
                    let step = Complex64::cis(dk * d);
                    let mut e = Complex64::cis(k0 * d);
                    for n in 0..n_f {
                        tx_phase[n * n_tx + j] = e;
                        e *= step;
                    }
                }
                for (i, r) in rx.iter().enumerate() {
                    let d = (p - r).norm();
                    let step = Complex64::cis(dk * d);
                    let mut e = Complex64::cis(k0 * d);
                    for e_out in &mut rx_phase[i * n_f..(i + 1) * n_f] {
                        *e_out = e;
                        e *= step;
                    }
                }
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n_rx {
                    for n in 0..n_f {
                        let s = &signal[(i * n_f + n) * n_tx..(i * n_f + n + 1) * n_tx];
                        let h = &tx_phase[n * n_tx..(n + 1) * n_tx];
                        let inner: Complex64 = s.iter().zip(h).map(|(a, b)| a * b).sum();
                        acc += inner * rx_phase[i * n_f + n];
                    }
                }
                *slot = acc;
            }
        },
    );
    ConfidenceVolume::new(*spec, values)
}

/// Per-pixel confidence accompanying a projected depth map.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ConfidenceMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch("confidence map size".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("confidence values must be finite and non-negative"));
        }
        Ok(ConfidenceMap { width, height, values })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Divided by the maximum (all zeros stay zero).
    pub fn normalized(&self) -> ConfidenceMap {
        let m = self.max();
        let values = if m > 0.0 {
            self.values.iter().map(|v| v / m).collect()
        } else {
            self.values.clone()
        };
        ConfidenceMap { values, ..*self }
    }

    /// Stores the map in a depth-image container sharing `like`'s geometry.
    pub fn to_image(&self, like: &DepthImage) -> Result<DepthImage> {
        if like.width() != self.width || like.height() != self.height {
            return Err(Error::DimensionMismatch("confidence vs depth geometry".into()));
        }
        like.with_data(self.values.iter().map(|&v| v as f32).collect())
    }

    pub fn from_image(img: &DepthImage) -> Self {
        ConfidenceMap {
            width: img.width(),
            height: img.height(),
            values: img.data().iter().map(|&v| f64::from(v)).collect(),
        }
    }
}

/// Orthographic maximum-intensity projection along z.
///
/// Pixel `(u, v)` is voxel column `(x, y)`; its depth is the world z of the
/// strongest voxel (ties toward smaller z). All-zero columns, and columns
/// whose peak lies at z ≤ 0, are invalid.
pub fn max_projection(vol: &ConfidenceVolume) -> Result<(DepthImage, ConfidenceMap)> {
    let spec = vol.spec();
    let [nx, ny, nz] = spec.dims;
    let mut depth = vec![0.0f32; nx * ny];
    let mut conf = vec![0.0f64; nx * ny];
    for (col, column) in vol.values.chunks_exact(nz).enumerate() {
        let mut best = 0;
        let mut best_val = column[0].norm();
        for (iz, z) in column.iter().enumerate().skip(1) {
            let m = z.norm();
            if m > best_val {
                best = iz;
                best_val = m;
            }
        }
        conf[col] = best_val;
        let z = spec.origin.z + best as f64 * spec.step.z;
        if best_val > 0.0 && z > 0.0 {
            depth[col] = z as f32;
        }
    }
    let projection = ProjectionModel::orthographic_grid(spec.origin.x, spec.origin.y, spec.step.x, spec.step.y)?;
    let image = DepthImage::new(nx, ny, depth, projection, Transform4::identity())?;
    Ok((image, ConfidenceMap::new(nx, ny, conf)?))
}

/// Invalidates pixels whose confidence is below `max · 10^(threshold_db/20)`.
pub fn db_threshold_filter(depth: &DepthImage, confidence: &ConfidenceMap, threshold_db: f64) -> Result<DepthImage> {
    if !(threshold_db <= 0.0) {
        return Err(Error::invalid("threshold must be ≤ 0 dB"));
    }
    if depth.width() != confidence.width || depth.height() != confidence.height {
        return Err(Error::DimensionMismatch("confidence vs depth geometry".into()));
    }
    let max = confidence.max();
    let cutoff = max * 10f64.powf(threshold_db / 20.0);
    let data = depth
        .data()
        .iter()
        .zip(&confidence.values)
        .map(|(&d, &c)| if max > 0.0 && c >= cutoff { d } else { 0.0 })
        .collect();
    depth.with_data(data)
}
