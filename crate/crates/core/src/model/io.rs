//! On-disk formats.
//!
//! * `.dmap`: `"MRNDMAP1"`, u32 LE header length, JSON header, then W·H
//!   little-endian f32 depth values, row-major.
//! * `.obj`: `v`/`f` subset; polygons are fan-triangulated, other records ignored.
//! * `.pgm`: binary P5, 8-bit; zero is background.
//! * calibration `.json`: 16 row-major reals, either bare or as `{"matrix": [...]}`.
//! * `.xyz`: one `x y z` triple per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{DepthImage, PointCloud, ProjectionKind, ProjectionModel, SegMask, Transform4, TriMesh, Vec3};
use crate::error::{Error, Result};

pub const DMAP_MAGIC: &[u8; 8] = b"MRNDMAP1";

#[derive(Debug, Serialize, Deserialize)]
struct DmapHeader {
    width: usize,
    height: usize,
    projection: ProjectionKind,
    intrinsics: [f64; 9],
    offset: [f64; 3],
    transform: [f64; 16],
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Splits `magic | u32 len | json | payload`, returning (json, payload).
pub(crate) fn split_container<'a>(bytes: &'a [u8], magic: &[u8; 8]) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 8 || &bytes[..8] != magic {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(Error::Header("missing header length".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let rest = &bytes[12..];
    if rest.len() < len {
        return Err(Error::Header("header extends past end of file".into()));
    }
    Ok(rest.split_at(len))
}

pub(crate) fn join_container(magic: &[u8; 8], header: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(payload);
    out
}

pub(crate) fn check_payload(payload: &[u8], expected: usize) -> Result<()> {
    match payload.len() {
        n if n < expected => Err(Error::TruncatedPayload),
        n if n > expected => Err(Error::PayloadSizeMismatch { expected, found: n }),
        _ => Ok(()),
    }
}

pub fn encode_depth_image(img: &DepthImage) -> Vec<u8> {
    let p = img.projection();
    let mut intrinsics = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            intrinsics[r * 3 + c] = p.intrinsics[(r, c)];
        }
    }
    let header = DmapHeader {
        width: img.width(),
        height: img.height(),
        projection: p.kind,
        intrinsics,
        offset: [p.offset.x, p.offset.y, p.offset.z],
        transform: img.transform().to_row_major(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let payload: Vec<u8> = img.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    join_container(DMAP_MAGIC, &json, &payload)
}

pub fn decode_depth_image(bytes: &[u8]) -> Result<DepthImage> {
    let (json, payload) = split_container(bytes, DMAP_MAGIC)?;
    let h: DmapHeader = serde_json::from_slice(json).map_err(|e| Error::Header(e.to_string()))?;
    let n = h
        .width
        .checked_mul(h.height)
        .ok_or_else(|| Error::Header("image too large".into()))?;
    check_payload(payload, n * 4)?;
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let projection = ProjectionModel::new(
        h.projection,
        Matrix3::from_row_slice(&h.intrinsics),
        Vec3::from_row_slice(&h.offset),
    )?;
    let transform = Transform4::from_row_major(&h.transform)?;
    DepthImage::new(h.width, h.height, data, projection, transform)
}

pub fn load_depth_image(path: impl AsRef<Path>) -> Result<DepthImage> {
    decode_depth_image(&read_file(path.as_ref())?)
}

pub fn save_depth_image(path: impl AsRef<Path>, img: &DepthImage) -> Result<()> {
    write_file(path.as_ref(), &encode_depth_image(img))
}

fn parse_obj_index(tok: &str, n_vertices: usize, line: usize) -> Result<usize> {
    let head = tok.split('/').next().unwrap_or("");
    let idx: i64 = head.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad face index {tok:?}"),
    })?;
    let resolved = match idx {
        0 => None,
        i if i > 0 => Some(i as usize - 1),
        i => (n_vertices as i64 + i).try_into().ok(),
    };
    match resolved {
        Some(i) if i < n_vertices => Ok(i),
        _ => Err(Error::Parse {
            line,
            msg: format!("face index {idx} out of range ({n_vertices} vertices)"),
        }),
    }
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => {
                let coords: Vec<f64> = toks
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| Error::Parse {
                        line,
                        msg: format!("bad vertex: {e}"),
                    })?;
                if coords.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        msg: "vertex needs 3 coordinates".into(),
                    });
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = toks
                    .map(|t| parse_obj_index(t, vertices.len(), line))
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::Parse {
                        line,
                        msg: "face needs at least 3 vertices".into(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn format_obj(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
        line: 0,
        msg: "obj is not utf-8".into(),
    })?;
    parse_obj(&text)
}

pub fn save_mesh(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    write_file(path.as_ref(), format_obj(mesh).as_bytes())
}

/// Reads PGM header tokens, skipping `#` comments; returns the offset just
/// past the single whitespace byte that terminates the last token.
fn pgm_header(bytes: &[u8]) -> Result<([usize; 3], usize)> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::BadMagic);
    }
    let mut pos = 2;
    let mut vals = [0usize; 3];
    for val in vals.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Header("pgm header ended early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *val = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Header("bad pgm header field".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => Ok((vals, pos + 1)),
        _ => Err(Error::Header("missing whitespace after pgm header".into())),
    }
}

pub fn decode_mask(bytes: &[u8]) -> Result<SegMask> {
    let ([w, h, maxval], start) = pgm_header(bytes)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Header(format!("unsupported pgm maxval {maxval}")));
    }
    let payload = &bytes[start..];
    check_payload(payload, w * h)?;
    SegMask::new(w, h, payload.iter().map(|&b| b != 0).collect())
}

pub fn encode_mask(mask: &SegMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<SegMask> {
    decode_mask(&read_file(path.as_ref())?)
}

pub fn save_mask(path: impl AsRef<Path>, mask: &SegMask) -> Result<()> {
    write_file(path.as_ref(), &encode_mask(mask))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CalibrationJson {
    Bare(Vec<f64>),
    Wrapped { matrix: Vec<f64> },
}

#[derive(Serialize)]
struct CalibrationOut<'a> {
    matrix: &'a [f64],
}

pub fn parse_calibration(text: &str) -> Result<Transform4> {
    let values = match serde_json::from_str::<CalibrationJson>(text)? {
        CalibrationJson::Bare(v) => v,
        CalibrationJson::Wrapped { matrix } => matrix,
    };
    Transform4::from_row_major(&values)
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<Transform4> {
    let bytes = read_file(path.as_ref())?;
    parse_calibration(std::str::from_utf8(&bytes).map_err(|_| Error::Header("calibration is not utf-8".into()))?)
}

pub fn save_calibration(path: impl AsRef<Path>, t: &Transform4) -> Result<()> {
    let m = t.to_row_major();
    let json = serde_json::to_vec_pretty(&CalibrationOut { matrix: &m })?;
    write_file(path.as_ref(), &json)
}

pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut pts = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let c: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: format!("bad coordinate: {e}"),
            })?;
        if c.len() != 3 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "expected 3 coordinates".into(),
            });
        }
        pts.push(Vec3::new(c[0], c[1], c[2]));
    }
    PointCloud::new(pts)
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let bytes = read_file(path.as_ref())?;
    parse_xyz(&String::from_utf8_lossy(&bytes))
}

pub fn save_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut s = String::new();
    for p in cloud.points() {
        writeln!(s, "{} {} {}", p.x, p.y, p.z).unwrap();
    }
    write_file(path.as_ref(), s.as_bytes())
}
