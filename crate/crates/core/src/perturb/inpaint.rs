//! Deterministic region fill by Laplace relaxation: the filled patch is the
//! discrete harmonic extension of the original pixels ringing the region,
//! approximated by Jacobi iteration with a fixed stopping rule so every run
//! produces bit-identical output.

use thiserror::Error;

use crate::model::{Region, Screen};

/// Stop once no channel moved by this much between sweeps.
pub const TOLERANCE: f64 = 0.5;
/// Hard cap on Jacobi sweeps.
pub const MAX_ITERS: usize = 10_000;

#[derive(Debug, Error)]
pub enum InpaintError {
    #[error("region covers the whole screen; no boundary pixels to interpolate from")]
    NoBoundary,
    #[error("region does not fit the screen")]
    BadRegion,
}

/// Replace `region` with the Laplace interpolation of its surrounding pixels.
///
/// Interior pixels are initialized to the mean of the boundary ring (the
/// out-of-region pixels 4-adjacent to the region), then each sweep replaces
/// every interior pixel with the average of its available 4-neighbors:
/// in-region neighbors read the previous sweep, out-of-region neighbors read
/// the untouched source image. Off-screen neighbors are skipped. Sweeps stop
/// when the largest per-channel change drops below [`TOLERANCE`] or after
/// [`MAX_ITERS`].
pub fn laplace_fill(screen: &Screen, region: Region) -> Result<Screen, InpaintError> {
    if !region.fits(screen) {
        return Err(InpaintError::BadRegion);
    }
    let (w, h) = (screen.width, screen.height);
    let (rw, rh) = (region.width() as usize, region.height() as usize);

    // Boundary ring: out-of-region pixels 4-adjacent to interior ones.
    let mut ring_sum = [0f64; 3];
    let mut ring_n = 0usize;
    let mut visit = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            return;
        }
        let (x, y) = (x as u32, y as u32);
        if region.contains(x, y) {
            return;
        }
        let px = screen.get(x, y);
        for c in 0..3 {
            ring_sum[c] += px[c] as f64;
        }
        ring_n += 1;
    };
    for x in region.x0..region.x1 {
        visit(x as i64, region.y0 as i64 - 1);
        visit(x as i64, region.y1 as i64);
    }
    for y in region.y0..region.y1 {
        visit(region.x0 as i64 - 1, y as i64);
        visit(region.x1 as i64, y as i64);
    }
    if ring_n == 0 {
        return Err(InpaintError::NoBoundary);
    }
    let init = [ring_sum[0] / ring_n as f64, ring_sum[1] / ring_n as f64, ring_sum[2] / ring_n as f64];

    let mut cur = vec![init; rw * rh];
    let mut next = vec![[0f64; 3]; rw * rh];

    // Value of a 4-neighbor in screen coordinates, reading interior pixels
    // from the previous sweep and everything else from the source image.
    let sample = |cur: &[[f64; 3]], x: i64, y: i64| -> Option<[f64; 3]> {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            return None;
        }
        let (x, y) = (x as u32, y as u32);
        if region.contains(x, y) {
            Some(cur[(y - region.y0) as usize * rw + (x - region.x0) as usize])
        } else {
            let px = screen.get(x, y);
            Some([px[0] as f64, px[1] as f64, px[2] as f64])
        }
    };

    for _ in 0..MAX_ITERS {
        let mut max_delta = 0f64;
        for ry in 0..rh {
            for rx in 0..rw {
                let sx = region.x0 as i64 + rx as i64;
                let sy = region.y0 as i64 + ry as i64;
                let mut acc = [0f64; 3];
                let mut n = 0usize;
                for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    if let Some(v) = sample(&cur, sx + dx, sy + dy) {
                        for c in 0..3 {
                            acc[c] += v[c];
                        }
                        n += 1;
                    }
                }
                let i = ry * rw + rx;
                for c in 0..3 {
                    let v = acc[c] / n as f64;
                    max_delta = max_delta.max((v - cur[i][c]).abs());
                    next[i][c] = v;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        if max_delta < TOLERANCE {
            break;
        }
    }

    let mut out = screen.clone();
    for ry in 0..rh {
        for rx in 0..rw {
            let v = cur[ry * rw + rx];
            let px = [quantize(v[0]), quantize(v[1]), quantize(v[2])];
            out.set(region.x0 + rx as u32, region.y0 + ry as u32, px);
        }
    }
    Ok(out)
}

fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}
