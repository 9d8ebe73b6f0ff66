use crate::model::SegMask;

const SOFT_MAX_KERNEL: usize = 20;

/// Erosion of one line by a window of `k` samples covering offsets
/// `-(k/2) ..= k-1-k/2`. Samples outside the line count as background.
fn erode_line(src: &[bool], k: usize, out: &mut [bool]) {
    let n = src.len();
    let before = k / 2;
    // prefix[i] = number of true samples in src[..i]
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &b in src {
        prefix.push(prefix.last().unwrap() + usize::from(b));
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = match (i.checked_sub(before), i + (k - 1 - before)) {
            (Some(lo), hi) if hi < n => prefix[hi + 1] - prefix[lo] == k,
            _ => false,
        };
    }
}

/// Morphological erosion with a `k×k` all-true structuring element anchored
/// at its center (`k/2`). Pixels outside the image are background, so the
/// border is eroded too. `k ≤ 1` returns the mask unchanged.
pub fn erode_mask(mask: &SegMask, k: usize) -> SegMask {
    if k > SOFT_MAX_KERNEL {
        log::warn!("erosion kernel {k} exceeds the usual range 0..={SOFT_MAX_KERNEL}");
    }
    if k <= 1 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    let mut rows = vec![false; w * h];
    for (src, dst) in mask.bits().chunks_exact(w).zip(rows.chunks_exact_mut(w)) {
        erode_line(src, k, dst);
    }
    let mut out = vec![false; w * h];
    let mut col = vec![false; h];
    let mut col_out = vec![false; h];
    for u in 0..w {
        for v in 0..h {
            col[v] = rows[v * w + u];
        }
        erode_line(&col, k, &mut col_out);
        for v in 0..h {
            out[v * w + u] = col_out[v];
        }
    }
    SegMask::new(w, h, out).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition: every pixel under the shifted k×k window is set.
    fn erode_oracle(m: &SegMask, k: usize) -> SegMask {
        if k <= 1 {
            return m.clone();
        }
        let (w, h) = (m.width() as i64, m.height() as i64);
        let before = (k / 2) as i64;
        let mut bits = Vec::new();
        for v in 0..h {
            for u in 0..w {
                let mut all = true;
                for dv in -before..(k as i64 - before) {
                    for du in -before..(k as i64 - before) {
                        let (x, y) = (u + du, v + dv);
                        all &= x >= 0 && y >= 0 && x < w && y < h && m.get(x as usize, y as usize);
                    }
                }
                bits.push(all);
            }
        }
        SegMask::new(m.width(), m.height(), bits).unwrap()
    }

    #[test]
    fn identity_for_small_kernels() {
        let m = SegMask::new(3, 2, vec![true, false, true, true, true, false]).unwrap();
        assert_eq!(erode_mask(&m, 0), m);
        assert_eq!(erode_mask(&m, 1), m);
    }

    #[test]
    fn full_square_shrinks_to_interior() {
        let m = SegMask::filled(5, 5, true).unwrap();
        let e = erode_mask(&m, 3);
        for v in 0..5 {
            for u in 0..5 {
                assert_eq!(e.get(u, v), (1..4).contains(&u) && (1..4).contains(&v));
            }
        }
        assert_eq!(e, erode_oracle(&m, 3));
    }

    #[test]
    fn isolated_pixel_vanishes() {
        let mut bits = vec![false; 25];
        bits[12] = true;
        let m = SegMask::new(5, 5, bits).unwrap();
        assert_eq!(erode_mask(&m, 3).count(), 0);
    }

    #[test]
    fn matches_oracle_on_patterns() {
        let bits: Vec<bool> = (0..13 * 9).map(|i| (i * 7 + i / 5) % 11 < 8).collect();
        let m = SegMask::new(13, 9, bits).unwrap();
        for k in 0..8 {
            assert_eq!(erode_mask(&m, k), erode_oracle(&m, k), "k={k}");
        }
    }
}
