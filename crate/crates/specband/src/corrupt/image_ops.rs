//! Floating-point image primitives backing the corruption implementations.
//!
//! Everything here operates on planar f64 buffers in [0, 1] and is fully
//! deterministic; randomness is injected by the callers.

use crate::rng::Xoshiro256pp;

/// Mirror index without repeating the edge sample pair boundary
/// (`d c b a | a b c d`), matching the common "reflect" convolution mode.
pub(crate) fn reflect_idx(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    while i < 0 || i >= n {
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - i - 1;
        }
    }
    i as usize
}

pub(crate) fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable convolution with a symmetric 1-D kernel, reflect boundary.
pub(crate) fn convolve_separable(plane: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = kernel.len() / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = reflect_idx(x as isize + k as isize - radius as isize, w);
                acc += kv * plane[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = reflect_idx(y as isize + k as isize - radius as isize, h);
                acc += kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

pub(crate) fn gaussian_blur(plane: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    convolve_separable(plane, w, h, &gaussian_kernel_1d(sigma))
}

/// Bilinear sample with coordinate clamping.
pub(crate) fn bilinear_sample(plane: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let dx = x - x0 as f64;
    let dy = y - y0 as f64;
    let top = plane[y0 * w + x0] * (1.0 - dx) + plane[y0 * w + x1] * dx;
    let bot = plane[y1 * w + x0] * (1.0 - dx) + plane[y1 * w + x1] * dx;
    top * (1.0 - dy) + bot * dy
}

/// Zoom about the image center by `factor >= 1`, keeping the output size.
pub(crate) fn zoom_center(plane: &[f64], w: usize, h: usize, factor: f64) -> Vec<f64> {
    let cx = (w - 1) as f64 / 2.0;
    let cy = (h - 1) as f64 / 2.0;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let sx = cx + (x as f64 - cx) / factor;
            let sy = cy + (y as f64 - cy) / factor;
            out[y * w + x] = bilinear_sample(plane, w, h, sx, sy);
        }
    }
    out
}

/// Area-exact box downsample: each destination cell averages its real
/// source span, weighting boundary pixels by fractional coverage.
pub(crate) fn box_downsample(plane: &[f64], w: usize, h: usize, dw: usize, dh: usize) -> Vec<f64> {
    let span = |i: usize, n_dst: usize, n_src: usize| -> (f64, f64) {
        let a = i as f64 * n_src as f64 / n_dst as f64;
        let b = (i + 1) as f64 * n_src as f64 / n_dst as f64;
        (a, b.min(n_src as f64))
    };
    let coverage = |lo: f64, hi: f64, cell: usize| -> f64 {
        let c0 = cell as f64;
        (hi.min(c0 + 1.0) - lo.max(c0)).max(0.0)
    };
    let mut out = vec![0.0; dw * dh];
    for y in 0..dh {
        let (ya, yb) = span(y, dh, h);
        let sy0 = ya.floor() as usize;
        let sy1 = (yb.ceil() as usize).min(h);
        for x in 0..dw {
            let (xa, xb) = span(x, dw, w);
            let sx0 = xa.floor() as usize;
            let sx1 = (xb.ceil() as usize).min(w);
            let mut acc = 0.0;
            let mut weight = 0.0;
            for sy in sy0..sy1 {
                let wy = coverage(ya, yb, sy);
                if wy <= 0.0 {
                    continue;
                }
                for sx in sx0..sx1 {
                    let wx = coverage(xa, xb, sx);
                    if wx <= 0.0 {
                        continue;
                    }
                    acc += wx * wy * plane[sy * w + sx];
                    weight += wx * wy;
                }
            }
            out[y * dw + x] = acc / weight;
        }
    }
    out
}

/// Upsample from cell centers with bilinear interpolation. Used to blow a
/// pixelated grid back up without the phase error a nearest-neighbor pick
/// would add at non-integer ratios.
pub(crate) fn upsample_from_cells(
    plane: &[f64],
    sw: usize,
    sh: usize,
    dw: usize,
    dh: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; dw * dh];
    for y in 0..dh {
        let v = (y as f64 + 0.5) * sh as f64 / dh as f64 - 0.5;
        for x in 0..dw {
            let u = (x as f64 + 0.5) * sw as f64 / dw as f64 - 0.5;
            out[y * dw + x] = bilinear_sample(plane, sw, sh, u, v);
        }
    }
    out
}

pub(crate) fn rot180(plane: &[f64]) -> Vec<f64> {
    let mut out = plane.to_vec();
    out.reverse();
    out
}

/// RGB in [0,1] to HSV with h in [0,1).
pub(crate) fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

pub(crate) fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6.rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    (r + m, g + m, b + m)
}

/// Diamond-square plasma fractal on a (2^k + 1) grid, normalized to [0, 1].
/// `decay` controls how fast the random wibble shrinks per octave; smaller
/// decay keeps more high-frequency structure.
pub(crate) fn plasma_fractal(size: usize, decay: f64, rng: &mut Xoshiro256pp) -> Vec<f64> {
    debug_assert!((size - 1).is_power_of_two());
    let n = size;
    let mut grid = vec![0.0f64; n * n];
    let mut wibble = 1.0;
    grid[0] = 1.0; // seed corner, as the reference plasma does

    let mut step = n - 1;
    while step > 1 {
        let half = step / 2;
        // diamond step
        for y in (half..n).step_by(step) {
            for x in (half..n).step_by(step) {
                let tl = grid[(y - half) * n + (x - half)];
                let tr = grid[(y - half) * n + (x + half)];
                let bl = grid[(y + half) * n + (x - half)];
                let br = grid[(y + half) * n + (x + half)];
                let avg = (tl + tr + bl + br) / 4.0;
                grid[y * n + x] = avg + wibble * (rng.next_f64() * 2.0 - 1.0);
            }
        }
        // square step
        for y in (0..n).step_by(half) {
            let x_start = if (y / half).is_multiple_of(2) { half } else { 0 };
            for x in (x_start..n).step_by(step) {
                let mut acc = 0.0;
                let mut cnt = 0.0;
                if y >= half {
                    acc += grid[(y - half) * n + x];
                    cnt += 1.0;
                }
                if y + half < n {
                    acc += grid[(y + half) * n + x];
                    cnt += 1.0;
                }
                if x >= half {
                    acc += grid[y * n + (x - half)];
                    cnt += 1.0;
                }
                if x + half < n {
                    acc += grid[y * n + (x + half)];
                    cnt += 1.0;
                }
                grid[y * n + x] = acc / cnt + wibble * (rng.next_f64() * 2.0 - 1.0);
            }
        }
        wibble /= decay;
        step = half;
    }

    let min = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1e-12);
    for v in &mut grid {
        *v = (*v - min) / span;
    }
    grid
}

/// Multi-octave value noise in [0, 1]; the procedural stand-in for frost
/// texture photographs.
pub(crate) fn value_noise(
    w: usize,
    h: usize,
    base_cell: usize,
    octaves: usize,
    rng: &mut Xoshiro256pp,
) -> Vec<f64> {
    let mut out = vec![0.0f64; w * h];
    let mut amplitude = 1.0;
    let mut total = 0.0;
    let mut cell = base_cell.max(2);
    for _ in 0..octaves {
        let gw = w.div_ceil(cell) + 2;
        let gh = h.div_ceil(cell) + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.next_f64()).collect();
        for y in 0..h {
            let fy = y as f64 / cell as f64;
            let y0 = fy.floor() as usize;
            let dy = fy - y0 as f64;
            let sy = dy * dy * (3.0 - 2.0 * dy);
            for x in 0..w {
                let fx = x as f64 / cell as f64;
                let x0 = fx.floor() as usize;
                let dx = fx - x0 as f64;
                let sx = dx * dx * (3.0 - 2.0 * dx);
                let v00 = lattice[y0 * gw + x0];
                let v01 = lattice[y0 * gw + x0 + 1];
                let v10 = lattice[(y0 + 1) * gw + x0];
                let v11 = lattice[(y0 + 1) * gw + x0 + 1];
                let top = v00 * (1.0 - sx) + v01 * sx;
                let bot = v10 * (1.0 - sx) + v11 * sx;
                out[y * w + x] += amplitude * (top * (1.0 - sy) + bot * sy);
            }
        }
        total += amplitude;
        amplitude *= 0.55;
        cell = (cell / 2).max(1);
        if cell == 1 {
            break;
        }
    }
    for v in &mut out {
        *v /= total;
    }
    out
}

// 8x8 orthonormal DCT-II/III used by the internal JPEG quantization cycle.

fn dct_basis() -> [[f64; 8]; 8] {
    let mut b = [[0.0; 8]; 8];
    for (u, row) in b.iter_mut().enumerate() {
        let cu = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (x, val) in row.iter_mut().enumerate() {
            *val = cu * ((2.0 * x as f64 + 1.0) * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    b
}

/// Forward 8x8 DCT (block in row-major order).
pub(crate) fn dct2_8x8(block: &[f64; 64]) -> [f64; 64] {
    let basis = dct_basis();
    let mut tmp = [0.0; 64];
    // rows
    for y in 0..8 {
        for u in 0..8 {
            let mut acc = 0.0;
            for x in 0..8 {
                acc += basis[u][x] * block[y * 8 + x];
            }
            tmp[y * 8 + u] = acc;
        }
    }
    let mut out = [0.0; 64];
    // columns
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for y in 0..8 {
                acc += basis[v][y] * tmp[y * 8 + u];
            }
            out[v * 8 + u] = acc;
        }
    }
    out
}

/// Inverse 8x8 DCT.
pub(crate) fn idct2_8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let basis = dct_basis();
    let mut tmp = [0.0; 64];
    for u in 0..8 {
        for y in 0..8 {
            let mut acc = 0.0;
            for v in 0..8 {
                acc += basis[v][y] * coeffs[v * 8 + u];
            }
            tmp[y * 8 + u] = acc;
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut acc = 0.0;
            for u in 0..8 {
                acc += basis[u][x] * tmp[y * 8 + u];
            }
            out[y * 8 + x] = acc;
        }
    }
    out
}
