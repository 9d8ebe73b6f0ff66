//! Frequency-stepped CW waveform, point-scatterer forward model, phase/range
//! relations and AMCW phase demodulation.
//!
//! The received phasor for transmitter `t`, receiver `r` and frequency `f` is
//!
//! ```text
//! s(f, r, t) = Σ_k A_k · w_k · exp(−i·2πf·(|t − p_k| + |p_k − r|)/c + i·φ_c)
//! ```
//!
//! with `w_k = 1`, or `1/(|t − p_k|·|p_k − r|)` when spreading loss is enabled.
//! Only the steady-state phasor per frequency step is modeled; TDM timing is not.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::io::{check_payload, join_container, read_file, split_container, write_file};
use crate::model::Vec3;

/// Vacuum speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const ANTENNA_CLEARANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FscwConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub n_f: usize,
    pub phi_c: f64,
    pub c: f64,
}

impl FscwConfig {
    pub fn new(f_min: f64, f_max: f64, n_f: usize) -> Result<Self> {
        let cfg = FscwConfig {
            f_min,
            f_max,
            n_f,
            phi_c: 0.0,
            c: SPEED_OF_LIGHT,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_max > self.f_min && self.f_max.is_finite()) {
            return Err(Error::invalid("frequency band requires f_max > f_min > 0"));
        }
        if self.n_f == 0 {
            return Err(Error::invalid("n_f must be at least 1"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) || !self.phi_c.is_finite() {
            return Err(Error::invalid("propagation speed and phase offset must be finite"));
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> f64 {
        self.f_max - self.f_min
    }

    /// Δf = (f_max − f_min) / N_f.
    pub fn step(&self) -> f64 {
        self.bandwidth() / self.n_f as f64
    }

    /// `f_n = f_min + n·Δf` for `n` in `0..n_f`.
    pub fn frequency(&self, n: usize) -> f64 {
        self.f_min + n as f64 * self.step()
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_f).map(|n| self.frequency(n))
    }
}

/// Transmitter and receiver positions in the sensor frame (boresight +z).
#[derive(Debug, Clone, PartialEq)]
pub struct MimoArray {
    tx: Vec<Vec3>,
    rx: Vec<Vec3>,
}

impl MimoArray {
    pub fn new(tx: Vec<Vec3>, rx: Vec<Vec3>) -> Result<Self> {
        if tx.is_empty() || rx.is_empty() {
            return Err(Error::invalid("array needs at least one TX and one RX"));
        }
        if tx.iter().chain(&rx).any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("antenna position".into()));
        }
        Ok(MimoArray { tx, rx })
    }

    pub fn tx(&self) -> &[Vec3] {
        &self.tx
    }

    pub fn rx(&self) -> &[Vec3] {
        &self.rx
    }
}

/// Square aperture of side `aperture` in the z = 0 plane, centered at the
/// origin: `n_per_edge` transmitters on each vertical edge (x = ±L/2) and
/// `n_per_edge` receivers on each horizontal edge (y = ±L/2), evenly spaced
/// at `(k + ½)·L/n − L/2` along the edge.
pub fn build_square_array(aperture: f64, n_per_edge: usize) -> Result<MimoArray> {
    if !(aperture > 0.0 && aperture.is_finite()) {
        return Err(Error::invalid("aperture must be positive"));
    }
    if n_per_edge == 0 {
        return Err(Error::invalid("n_per_edge must be at least 1"));
    }
    let half = aperture / 2.0;
    let along = |k: usize| (k as f64 + 0.5) * aperture / n_per_edge as f64 - half;
    let mut tx = Vec::with_capacity(2 * n_per_edge);
    let mut rx = Vec::with_capacity(2 * n_per_edge);
    for x in [-half, half] {
        tx.extend((0..n_per_edge).map(|k| Vec3::new(x, along(k), 0.0)));
    }
    for y in [-half, half] {
        rx.extend((0..n_per_edge).map(|k| Vec3::new(along(k), y, 0.0)));
    }
    MimoArray::new(tx, rx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointScatterer {
    pub position: Vec3,
    pub reflectivity: f64,
}

impl PointScatterer {
    pub fn new(position: Vec3, reflectivity: f64) -> Result<Self> {
        if !(reflectivity >= 0.0 && reflectivity.is_finite()) {
            return Err(Error::invalid("reflectivity must be finite and non-negative"));
        }
        if !position.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("scatterer position".into()));
        }
        Ok(PointScatterer { position, reflectivity })
    }
}

/// Demodulated received phasors indexed `[rx][tx][freq]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSignalCube {
    data: Vec<Complex64>,
    config: FscwConfig,
    array: MimoArray,
}

impl RawSignalCube {
    pub fn new(data: Vec<Complex64>, config: FscwConfig, array: MimoArray) -> Result<Self> {
        config.validate()?;
        let expected = array.rx.len() * array.tx.len() * config.n_f;
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "cube has {} values, expected {}×{}×{}",
                data.len(),
                array.rx.len(),
                array.tx.len(),
                config.n_f
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("signal sample".into()));
        }
        Ok(RawSignalCube { data, config, array })
    }

    pub fn zeros(config: FscwConfig, array: MimoArray) -> Result<Self> {
        let n = array.rx.len() * array.tx.len() * config.n_f;
        Self::new(vec![Complex64::new(0.0, 0.0); n], config, array)
    }

    pub fn config(&self) -> &FscwConfig {
        &self.config
    }

    pub fn array(&self) -> &MimoArray {
        &self.array
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// (N_RX, N_TX, N_f)
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.array.rx.len(), self.array.tx.len(), self.config.n_f)
    }

    pub fn index(&self, rx: usize, tx: usize, f: usize) -> usize {
        (rx * self.array.tx.len() + tx) * self.config.n_f + f
    }

    pub fn get(&self, rx: usize, tx: usize, f: usize) -> Complex64 {
        self.data[self.index(rx, tx, f)]
    }

    /// Elementwise map, keeping geometry and waveform.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        Self::new(self.data.iter().map(|&z| f(z)).collect(), self.config, self.array.clone())
    }

    /// Elementwise sum of two cubes with identical geometry.
    pub fn add(&self, other: &RawSignalCube) -> Result<Self> {
        if self.config != other.config || self.array != other.array {
            return Err(Error::DimensionMismatch("cubes differ in waveform or array".into()));
        }
        Self::new(
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
            self.config,
            self.array.clone(),
        )
    }
}

/// Born-approximation point-scatterer simulation of one capture.
pub fn simulate_fscw(
    scatterers: &[PointScatterer],
    array: &MimoArray,
    config: &FscwConfig,
    spreading: bool,
) -> Result<RawSignalCube> {
    config.validate()?;
    if scatterers.is_empty() {
        return Err(Error::Empty("scatterer list"));
    }
    let n_tx = array.tx.len();
    let n_f = config.n_f;
    let freqs: Vec<f64> = config.frequencies().collect();

    let mut data = vec![Complex64::new(0.0, 0.0); array.rx.len() * n_tx * n_f];
    data.par_chunks_mut(n_tx * n_f)
        .zip(array.rx.par_iter())
        .try_for_each(|(row, r)| -> Result<()> {
            for (j, t) in array.tx.iter().enumerate() {
                let out = &mut row[j * n_f..(j + 1) * n_f];
                for s in scatterers {
                    let d_tx = (t - s.position).norm();
                    let d_rx = (s.position - r).norm();
                    let weight = if spreading {
                        if d_tx < ANTENNA_CLEARANCE || d_rx < ANTENNA_CLEARANCE {
                            return Err(Error::invalid("scatterer coincides with an antenna"));
                        }
                        1.0 / (d_tx * d_rx)
                    } else {
                        1.0
                    };
                    let amp = s.reflectivity * weight;
                    let path = d_tx + d_rx;
                    for (acc, &f) in out.iter_mut().zip(&freqs) {
                        let phase = -2.0 * PI * f * path / config.c + config.phi_c;
                        *acc += Complex64::from_polar(amp, phase);
                    }
                }
            }
            Ok(())
        })?;
    RawSignalCube::new(data, *config, array.clone())
}

/// Range from a phase shift, `r = c·Δφ / (2π·f)`.
pub fn phase_to_range(delta_phi: f64, f: f64) -> Result<f64> {
    phase_to_range_with(delta_phi, f, SPEED_OF_LIGHT)
}

pub fn phase_to_range_with(delta_phi: f64, f: f64, c: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::invalid("frequency must be positive"));
    }
    Ok(c * delta_phi / (2.0 * PI * f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmcwConfig {
    pub f_m: f64,
}

impl AmcwConfig {
    pub fn new(f_m: f64) -> Result<Self> {
        if !(f_m > 0.0 && f_m.is_finite()) {
            return Err(Error::invalid("modulation frequency must be positive"));
        }
        Ok(AmcwConfig { f_m })
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f_m
    }

    /// Range for a demodulated phase, wrapped into the unambiguous interval.
    pub fn range(&self, phase: f64) -> f64 {
        let wrapped = phase.rem_euclid(2.0 * PI);
        SPEED_OF_LIGHT * wrapped / (2.0 * PI * self.f_m)
    }
}

/// Four-bucket phase estimate from correlation samples at 0°, 90°, 180°
/// and 270°: `φ = atan2(c270 − c90, c0 − c180)`, in (−π, π].
pub fn amcw_four_bucket(c0: f64, c90: f64, c180: f64, c270: f64) -> Result<f64> {
    let quad = c270 - c90;
    let inphase = c0 - c180;
    if !(quad.is_finite() && inphase.is_finite()) {
        return Err(Error::NonFinite("correlation sample".into()));
    }
    if quad == 0.0 && inphase == 0.0 {
        return Err(Error::NoModulation);
    }
    let phi = quad.atan2(inphase);
    Ok(if phi == -PI { PI } else { phi })
}

/// Mean phasor magnitude of each cube, averaged over cubes.
pub fn signal_magnitude(cubes: &[RawSignalCube]) -> Result<f64> {
    let first = cubes.first().ok_or(Error::Empty("cube list"))?;
    if cubes.iter().any(|c| c.dims() != first.dims()) {
        return Err(Error::DimensionMismatch("cubes differ in dimensions".into()));
    }
    let per_frame: f64 = cubes
        .iter()
        .map(|c| c.data.iter().map(|z| z.norm()).sum::<f64>() / c.data.len() as f64)
        .sum();
    Ok(per_frame / cubes.len() as f64)
}

#[derive(Serialize, Deserialize)]
struct ScattererJson {
    position: [f64; 3],
    reflectivity: f64,
}

/// Scatterer scene as a JSON list of `{"position": [x, y, z], "reflectivity": a}`.
pub fn parse_scatterers(text: &str) -> Result<Vec<PointScatterer>> {
    let raw: Vec<ScattererJson> = serde_json::from_str(text)?;
    raw.into_iter()
        .map(|s| PointScatterer::new(Vec3::from(s.position), s.reflectivity))
        .collect()
}

pub fn load_scatterers(path: impl AsRef<Path>) -> Result<Vec<PointScatterer>> {
    let bytes = read_file(path.as_ref())?;
    parse_scatterers(&String::from_utf8_lossy(&bytes))
}

pub fn save_scatterers(path: impl AsRef<Path>, scene: &[PointScatterer]) -> Result<()> {
    let raw: Vec<ScattererJson> = scene
        .iter()
        .map(|s| ScattererJson {
            position: s.position.into(),
            reflectivity: s.reflectivity,
        })
        .collect();
    write_file(path.as_ref(), &serde_json::to_vec_pretty(&raw)?)
}

pub const RSC_MAGIC: &[u8; 8] = b"MRNRSC01";

#[derive(Debug, Serialize, Deserialize)]
struct RscHeader {
    n_rx: usize,
    n_tx: usize,
    n_f: usize,
    f_min_hz: f64,
    f_max_hz: f64,
    rx_positions: Vec<[f64; 3]>,
    tx_positions: Vec<[f64; 3]>,
    phi_c: f64,
    #[serde(default = "default_c", skip_serializing_if = "is_default_c")]
    c: f64,
}

fn default_c() -> f64 {
    SPEED_OF_LIGHT
}

fn is_default_c(c: &f64) -> bool {
    *c == SPEED_OF_LIGHT
}

/// Serializes a cube; samples are stored as interleaved little-endian f32.
pub fn encode_raw_cube(cube: &RawSignalCube) -> Vec<u8> {
    let pos = |v: &[Vec3]| v.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>();
    let (n_rx, n_tx, n_f) = cube.dims();
    let header = RscHeader {
        n_rx,
        n_tx,
        n_f,
        f_min_hz: cube.config.f_min,
        f_max_hz: cube.config.f_max,
        rx_positions: pos(&cube.array.rx),
        tx_positions: pos(&cube.array.tx),
        phi_c: cube.config.phi_c,
        c: cube.config.c,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let payload: Vec<u8> = cube
        .data
        .iter()
        .flat_map(|z| {
            let mut b = [0u8; 8];
            b[..4].copy_from_slice(&(z.re as f32).to_le_bytes());
            b[4..].copy_from_slice(&(z.im as f32).to_le_bytes());
            b
        })
        .collect();
    join_container(RSC_MAGIC, &json, &payload)
}

pub fn decode_raw_cube(bytes: &[u8]) -> Result<RawSignalCube> {
    let (json, payload) = split_container(bytes, RSC_MAGIC)?;
    let h: RscHeader = serde_json::from_slice(json).map_err(|e| Error::Header(e.to_string()))?;
    if h.rx_positions.len() != h.n_rx || h.tx_positions.len() != h.n_tx {
        return Err(Error::Header("antenna count does not match position list".into()));
    }
    let n = h.n_rx * h.n_tx * h.n_f;
    check_payload(payload, n * 8)?;
    let data = payload
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
            let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
            Complex64::new(re.into(), im.into())
        })
        .collect();
    let to_vec = |v: &[[f64; 3]]| v.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
    let array = MimoArray::new(to_vec(&h.tx_positions), to_vec(&h.rx_positions))?;
    let config = FscwConfig {
        f_min: h.f_min_hz,
        f_max: h.f_max_hz,
        n_f: h.n_f,
        phi_c: h.phi_c,
        c: h.c,
    };
    RawSignalCube::new(data, config, array)
}

pub fn load_raw_cube(path: impl AsRef<Path>) -> Result<RawSignalCube> {
    decode_raw_cube(&read_file(path.as_ref())?)
}

pub fn save_raw_cube(path: impl AsRef<Path>, cube: &RawSignalCube) -> Result<()> {
    write_file(path.as_ref(), &encode_raw_cube(cube))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wrap(phi: f64) -> f64 {
        phi.rem_euclid(2.0 * PI)
    }

    /// Straight-line evaluation over (k, i, j, n) without any hoisting.
    fn simulate_oracle(sc: &[PointScatterer], arr: &MimoArray, cfg: &FscwConfig, spreading: bool) -> Vec<Complex64> {
        let mut out = Vec::new();
        for r in arr.rx() {
            for t in arr.tx() {
                for n in 0..cfg.n_f {
                    let f = cfg.f_min + n as f64 * (cfg.f_max - cfg.f_min) / cfg.n_f as f64;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for s in sc {
                        let a = (t - s.position).norm();
                        let b = (s.position - r).norm();
                        let w = if spreading { 1.0 / (a * b) } else { 1.0 };
                        let ph = -2.0 * PI * f * (a + b) / cfg.c + cfg.phi_c;
                        acc += s.reflectivity * w * Complex64::new(ph.cos(), ph.sin());
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    #[test]
    fn square_array_layout() {
        let arr = build_square_array(0.138, 47).unwrap();
        assert_eq!(arr.tx().len(), 94);
        assert_eq!(arr.rx().len(), 94);
        for p in arr.tx().iter().chain(arr.rx()) {
            assert!(p.x.abs() <= 0.069 + 1e-15 && p.y.abs() <= 0.069 + 1e-15);
            assert!((p.x.abs() - 0.069).abs() < 1e-15 || (p.y.abs() - 0.069).abs() < 1e-15);
            assert_eq!(p.z, 0.0);
        }
        assert!(arr.tx().iter().all(|p| (p.x.abs() - 0.069).abs() < 1e-15));
        assert!(arr.rx().iter().all(|p| (p.y.abs() - 0.069).abs() < 1e-15));
    }

    #[test]
    fn square_array_single_element_per_edge() {
        let arr = build_square_array(0.2, 1).unwrap();
        assert_eq!(arr.tx(), &[Vec3::new(-0.1, 0.0, 0.0), Vec3::new(0.1, 0.0, 0.0)]);
        assert_eq!(arr.rx(), &[Vec3::new(0.0, -0.1, 0.0), Vec3::new(0.0, 0.1, 0.0)]);
        assert!(build_square_array(0.0, 1).is_err());
        assert!(build_square_array(0.1, 0).is_err());
    }

    #[test]
    fn monostatic_phase_closed_form() {
        let arr = MimoArray::new(vec![Vec3::zeros()], vec![Vec3::zeros()]).unwrap();
        let mut cfg = FscwConfig::new(72e9, 82e9, 16).unwrap();
        cfg.phi_c = 0.4;
        let range = 0.31;
        let s = [PointScatterer::new(Vec3::new(0.0, 0.0, range), 1.0).unwrap()];
        let cube = simulate_fscw(&s, &arr, &cfg, false).unwrap();
        for (n, f) in cfg.frequencies().enumerate() {
            let expected = wrap(cfg.phi_c - 2.0 * PI * f * 2.0 * range / cfg.c);
            let got = wrap(cube.get(0, 0, n).arg());
            let diff = (got - expected).abs();
            assert!(diff.min(2.0 * PI - diff) < 1e-9, "n={n}: {got} vs {expected}");
            assert!((cube.get(0, 0, n).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let arr = build_square_array(0.1, 1).unwrap();
        let mut cfg = FscwConfig::new(72e9, 82e9, 4).unwrap();
        cfg.phi_c = 0.25;
        let sc: Vec<_> = (0..3)
            .map(|_| {
                let p = Vec3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(0.2..0.4));
                PointScatterer::new(p, rng.gen_range(0.1..2.0)).unwrap()
            })
            .collect();
        for spreading in [false, true] {
            let cube = simulate_fscw(&sc, &arr, &cfg, spreading).unwrap();
            let oracle = simulate_oracle(&sc, &arr, &cfg, spreading);
            for (a, b) in cube.data().iter().zip(&oracle) {
                assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn linear_in_scatterers() {
        let arr = build_square_array(0.138, 2).unwrap();
        let cfg = FscwConfig::new(72e9, 82e9, 8).unwrap();
        let a = PointScatterer::new(Vec3::new(0.01, 0.0, 0.3), 1.0).unwrap();
        let b = PointScatterer::new(Vec3::new(-0.02, 0.01, 0.32), 0.5).unwrap();
        let both = simulate_fscw(&[a, b], &arr, &cfg, true).unwrap();
        let sum = simulate_fscw(&[a], &arr, &cfg, true)
            .unwrap()
            .add(&simulate_fscw(&[b], &arr, &cfg, true).unwrap())
            .unwrap();
        for (x, y) in both.data().iter().zip(sum.data()) {
            assert!((x - y).norm() <= 1e-12 * y.norm());
        }
    }

    #[test]
    fn swapping_tx_and_rx_keeps_phase() {
        let cfg = FscwConfig::new(72e9, 82e9, 8).unwrap();
        let t = Vec3::new(-0.05, 0.0, 0.0);
        let r = Vec3::new(0.0, 0.05, 0.0);
        let s = [PointScatterer::new(Vec3::new(0.01, 0.02, 0.3), 1.0).unwrap()];
        let a = simulate_fscw(&s, &MimoArray::new(vec![t], vec![r]).unwrap(), &cfg, false).unwrap();
        let b = simulate_fscw(&s, &MimoArray::new(vec![r], vec![t]).unwrap(), &cfg, false).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn spreading_rejects_scatterer_on_antenna() {
        let arr = MimoArray::new(vec![Vec3::zeros()], vec![Vec3::x()]).unwrap();
        let cfg = FscwConfig::new(72e9, 82e9, 2).unwrap();
        let s = [PointScatterer::new(Vec3::zeros(), 1.0).unwrap()];
        assert!(simulate_fscw(&s, &arr, &cfg, true).is_err());
        assert!(simulate_fscw(&s, &arr, &cfg, false).is_ok());
        assert!(simulate_fscw(&[], &arr, &cfg, false).is_err());
    }

    #[test]
    fn phase_to_range_examples() {
        let c = SPEED_OF_LIGHT;
        let lambda = 0.004;
        assert!((phase_to_range(2.0 * PI, c / lambda).unwrap() - lambda).abs() < 1e-15);
        assert_eq!(phase_to_range(0.0, 75e9).unwrap(), 0.0);
        // c / (2 · 75 GHz) = 1.998616386666… mm
        let r = phase_to_range(PI, 75e9).unwrap();
        assert!((r - 1.998_616_386_666_666_7e-3).abs() < 1e-15, "{r}");
        assert!(phase_to_range(1.0, 0.0).is_err());
    }

    #[test]
    fn phase_to_range_periodicity() {
        for &(phi, f) in &[(0.3, 75e9), (-1.0, 30e6), (5.0, 82e9)] {
            let d = phase_to_range(phi + 2.0 * PI, f).unwrap() - phase_to_range(phi, f).unwrap();
            assert!((d - SPEED_OF_LIGHT / f).abs() <= 1e-12 * SPEED_OF_LIGHT / f);
        }
    }

    #[test]
    fn four_bucket_examples() {
        assert_eq!(amcw_four_bucket(1.0, 0.0, -1.0, 0.0).unwrap(), 0.0);
        assert!((amcw_four_bucket(0.0, -1.0, 0.0, 1.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert_eq!(amcw_four_bucket(-1.0, 0.0, 1.0, 0.0).unwrap(), PI);
        assert!(matches!(amcw_four_bucket(0.5, 0.5, 0.5, 0.5), Err(Error::NoModulation)));
    }

    #[test]
    fn four_bucket_recovers_correlation_phase() {
        // Correlation of a delayed echo with the shifted reference: cos(θ + φ0).
        let phi0 = 0.7;
        let s = |deg: f64| (deg.to_radians() + phi0).cos();
        let got = amcw_four_bucket(s(0.0), s(90.0), s(180.0), s(270.0)).unwrap();
        assert!((got - phi0).abs() < 1e-12);
    }

    #[test]
    fn amcw_range_wraps() {
        let cfg = AmcwConfig::new(100e6).unwrap();
        assert!((cfg.period() - 1e-8).abs() < 1e-24);
        let r = cfg.range(-PI / 2.0);
        assert!((r - SPEED_OF_LIGHT * 0.75 / 100e6).abs() < 1e-9);
    }

    #[test]
    fn magnitude_examples() {
        let arr = MimoArray::new(vec![Vec3::zeros()], vec![Vec3::x()]).unwrap();
        let cfg = FscwConfig::new(1e9, 2e9, 2).unwrap();
        let unit = RawSignalCube::new(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)], cfg, arr.clone()).unwrap();
        assert_eq!(signal_magnitude(std::slice::from_ref(&unit)).unwrap(), 1.0);
        let a = 2.5;
        let c = RawSignalCube::new(vec![Complex64::from_polar(a, 0.3), Complex64::from_polar(a, -2.0)], cfg, arr).unwrap();
        assert!((signal_magnitude(&[c]).unwrap() - a).abs() < 1e-15);
        assert!(signal_magnitude(&[]).is_err());
    }

    #[test]
    fn magnitude_matches_scalar_loop_and_ignores_global_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let arr = build_square_array(0.1, 2).unwrap();
        let cfg = FscwConfig::new(72e9, 82e9, 5).unwrap();
        let cubes: Vec<_> = (0..3)
            .map(|_| {
                let data = (0..4 * 4 * 5)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                RawSignalCube::new(data, cfg, arr.clone()).unwrap()
            })
            .collect();
        let mut oracle = 0.0;
        for c in &cubes {
            let mut s = 0.0;
            for z in c.data() {
                s += (z.re * z.re + z.im * z.im).sqrt();
            }
            oracle += s / c.data().len() as f64;
        }
        oracle /= cubes.len() as f64;
        let got = signal_magnitude(&cubes).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
        let rot = Complex64::from_polar(1.0, 1.234);
        let rotated: Vec<_> = cubes.iter().map(|c| c.map(|z| z * rot).unwrap()).collect();
        assert!((signal_magnitude(&rotated).unwrap() - got).abs() <= 1e-12 * got);
    }

    #[test]
    fn rsc_roundtrip() {
        let arr = build_square_array(0.138, 2).unwrap();
        let mut cfg = FscwConfig::new(72e9, 82e9, 3).unwrap();
        cfg.phi_c = 0.5;
        let s = [PointScatterer::new(Vec3::new(0.0, 0.0, 0.3), 1.0).unwrap()];
        let cube = simulate_fscw(&s, &arr, &cfg, false).unwrap();
        let bytes = encode_raw_cube(&cube);
        assert_eq!(&bytes[..8], b"MRNRSC01");
        let back = decode_raw_cube(&bytes).unwrap();
        assert_eq!(back.config(), cube.config());
        assert_eq!(back.array(), cube.array());
        // f32 storage: exact after one quantization.
        assert_eq!(encode_raw_cube(&back), bytes);
        assert_eq!(decode_raw_cube(&encode_raw_cube(&back)).unwrap(), back);
        assert!(matches!(decode_raw_cube(&bytes[..bytes.len() - 3]), Err(Error::TruncatedPayload)));
    }
}
