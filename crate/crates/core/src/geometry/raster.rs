//! Z-buffer rasterization of triangle meshes into depth images.
//!
//! Pixel `(u, v)` is sampled at image coordinate `(u, v)`, the same position
//! that unprojection maps back to 3D, so rendered pixels lie on the surface.
//! Shared edges are resolved with a top-left fill rule.

use nalgebra::Vector4;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DepthImage, ProjectionKind, ProjectionModel, Transform4, TriMesh};

const BAND_ROWS: usize = 16;

#[derive(Debug, Clone, Copy)]
struct ScreenTri {
    uv: [[f64; 2]; 3],
    /// Linear-in-screen attribute: z (orthographic) or 1/z (perspective).
    attr: [f64; 3],
    area: f64,
    u_range: (usize, usize),
    v_range: (usize, usize),
}

/// Edge function of `a → b` at `p`, evaluated with canonically ordered
/// endpoints so that both triangles sharing an edge get exactly opposite signs.
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let f = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    if (a[0], a[1]) <= (b[0], b[1]) {
        f(a, b)
    } else {
        -f(b, a)
    }
}

fn is_top_left(a: [f64; 2], b: [f64; 2]) -> bool {
    let du = b[0] - a[0];
    let dv = b[1] - a[1];
    (dv == 0.0 && du > 0.0) || dv < 0.0
}

fn pixel_range(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let lo = lo.ceil().max(0.0);
    let hi = hi.floor().min(n as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

fn setup(mesh: &TriMesh, model: &ProjectionModel, transform: &Transform4, width: usize, height: usize) -> Vec<ScreenTri> {
    let m = model.matrix() * transform.matrix();
    let perspective = model.kind == ProjectionKind::Perspective;
    let projected: Vec<Option<([f64; 2], f64)>> = mesh
        .vertices()
        .iter()
        .map(|p| {
            let h = m * Vector4::new(p.x, p.y, p.z, 1.0);
            let d = h.z;
            if perspective {
                (d > 0.0).then(|| ([h.x / d, h.y / d], 1.0 / d))
            } else {
                Some(([h.x, h.y], d))
            }
        })
        .collect();

    let mut tris = Vec::with_capacity(mesh.faces().len());
    for f in mesh.faces() {
        // A vertex behind a perspective camera drops the whole triangle.
        let (Some(a), Some(b), Some(c)) = (projected[f[0]], projected[f[1]], projected[f[2]]) else {
            continue;
        };
        let mut verts = [a, b, c];
        let mut area = edge(verts[0].0, verts[1].0, verts[2].0);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            verts.swap(1, 2);
            area = -area;
        }
        let us = verts.map(|v| v.0[0]);
        let vs = verts.map(|v| v.0[1]);
        let (Some(u_range), Some(v_range)) = (
            pixel_range(us.iter().copied().fold(f64::INFINITY, f64::min), us.iter().copied().fold(f64::NEG_INFINITY, f64::max), width),
            pixel_range(vs.iter().copied().fold(f64::INFINITY, f64::min), vs.iter().copied().fold(f64::NEG_INFINITY, f64::max), height),
        ) else {
            continue;
        };
        tris.push(ScreenTri {
            uv: verts.map(|v| v.0),
            attr: verts.map(|v| v.1),
            area,
            u_range,
            v_range,
        });
    }
    tris
}

fn raster_band(tris: &[ScreenTri], perspective: bool, width: usize, row0: usize, band: &mut [f64]) {
    let rows = band.len() / width;
    for t in tris {
        let v_lo = t.v_range.0.max(row0);
        let v_hi = t.v_range.1.min(row0 + rows - 1);
        if v_lo > v_hi {
            continue;
        }
        let [a, b, c] = t.uv;
        let tl = [is_top_left(b, c), is_top_left(c, a), is_top_left(a, b)];
        for v in v_lo..=v_hi {
            for u in t.u_range.0..=t.u_range.1 {
                let p = [u as f64, v as f64];
                let w = [edge(b, c, p), edge(c, a, p), edge(a, b, p)];
                let inside = w.iter().zip(&tl).all(|(&wi, &top_left)| wi > 0.0 || (wi == 0.0 && top_left));
                if !inside {
                    continue;
                }
                let interp = (w[0] * t.attr[0] + w[1] * t.attr[1] + w[2] * t.attr[2]) / t.area;
                let depth = if perspective { 1.0 / interp } else { interp };
                if !(depth > 0.0 && depth.is_finite()) {
                    continue;
                }
                let slot = &mut band[(v - row0) * width + u];
                if *slot == 0.0 || depth < *slot {
                    *slot = depth;
                }
            }
        }
    }
}

/// Renders the nearest surface of `mesh` (already in sensor space) per pixel;
/// uncovered pixels are invalid. Perspective depth is interpolated in 1/z.
pub fn rasterize_mesh_depth(
    mesh: &TriMesh,
    model: &ProjectionModel,
    transform: &Transform4,
    width: usize,
    height: usize,
) -> Result<DepthImage> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("raster dimensions must be positive"));
    }
    let tris = setup(mesh, model, transform, width, height);
    let perspective = model.kind == ProjectionKind::Perspective;
    let mut depth = vec![0.0f64; width * height];
    depth
        .par_chunks_mut(BAND_ROWS * width)
        .enumerate()
        .for_each(|(bi, band)| raster_band(&tris, perspective, width, bi * BAND_ROWS, band));
    DepthImage::new(width, height, depth.into_iter().map(|d| d as f32).collect(), *model, *transform)
}
