//! The fifteen corruption implementations.
//!
//! Each corruption is a pure function of (pixels, severity parameters,
//! seeded RNG). For kinds with shared randomness across channel groups the
//! draw sequence depends only on image dimensions, never on pixel content,
//! so two same-sized images corrupted with the same seed consume identical
//! random streams.

use crate::error::{Error, Result};
use crate::raster::{BitDepth, MultiChannelImage};
use crate::rng::Xoshiro256pp;

use super::image_ops::*;
use super::{
    CorruptionKind, ElasticParams, FogParams, FrostParams, GlassParams, MotionParams, SeverityTable,
    SnowParams, ZoomParams,
};

/// Smallest accepted image side. Below this the scaled kernels degenerate.
pub const MIN_SIDE: usize = 32;

/// Reference resolution the severity tables are calibrated for.
const REFERENCE_SIDE: f64 = 224.0;

/// Apply `kind` at `severity` with the default severity table.
pub fn apply_corruption(
    img: &MultiChannelImage,
    kind: CorruptionKind,
    severity: u8,
    seed: u64,
) -> Result<MultiChannelImage> {
    apply_corruption_with(img, kind, severity, seed, &SeverityTable::default())
}

/// Apply `kind` at `severity` to a 3-channel 8-bit image of any size with
/// both sides >= 32. The output is fully determined by (pixels, kind,
/// severity, seed, table) and lies in [0, 255].
pub fn apply_corruption_with(
    img: &MultiChannelImage,
    kind: CorruptionKind,
    severity: u8,
    seed: u64,
    table: &SeverityTable,
) -> Result<MultiChannelImage> {
    if img.bit_depth() != BitDepth::Eight {
        return Err(Error::InvalidParameter("corruptions expect 8-bit input".into()));
    }
    if img.channel_count() != 3 {
        return Err(Error::InvalidParameter(format!(
            "corruptions expect 3 channels, got {}",
            img.channel_count()
        )));
    }
    if !(1..=5).contains(&severity) {
        return Err(Error::InvalidParameter(format!(
            "severity must be 1..=5, got {severity}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    if w.min(h) < MIN_SIDE {
        return Err(Error::InvalidParameter(format!(
            "image {w}x{h} is below the minimum working size {MIN_SIDE}"
        )));
    }

    let scale = w.min(h) as f64 / REFERENCE_SIDE;
    let s = (severity - 1) as usize;
    let mut rng = Xoshiro256pp::from_seed(seed);
    let mut planes = img.planes_unit_f64();

    match kind {
        CorruptionKind::GaussianNoise => {
            gaussian_noise(&mut planes, table.gaussian_noise_sigma[s], &mut rng)
        }
        CorruptionKind::ShotNoise => shot_noise(&mut planes, table.shot_noise_scale[s], &mut rng),
        CorruptionKind::ImpulseNoise => {
            impulse_noise(&mut planes, table.impulse_noise_amount[s], &mut rng)
        }
        CorruptionKind::DefocusBlur => {
            defocus_blur(&mut planes, w, h, table.defocus_blur_radius[s] * scale)?
        }
        CorruptionKind::GlassBlur => {
            glass_blur(&mut planes, w, h, table.glass_blur[s], scale, &mut rng)
        }
        CorruptionKind::MotionBlur => {
            motion_blur(&mut planes, w, h, table.motion_blur[s], scale, &mut rng)?
        }
        CorruptionKind::ZoomBlur => zoom_blur(&mut planes, w, h, table.zoom_blur[s]),
        CorruptionKind::Snow => snow(&mut planes, w, h, table.snow[s], scale, &mut rng)?,
        CorruptionKind::Frost => frost(&mut planes, w, h, table.frost[s], &mut rng),
        CorruptionKind::Fog => fog(&mut planes, w, h, table.fog[s], &mut rng),
        CorruptionKind::Brightness => brightness(&mut planes, table.brightness_delta[s]),
        CorruptionKind::Contrast => contrast(&mut planes, table.contrast_factor[s]),
        CorruptionKind::ElasticTransform => {
            elastic_transform(&mut planes, w, h, table.elastic[s], scale, &mut rng)
        }
        CorruptionKind::Pixelate => pixelate(&mut planes, w, h, table.pixelate_fraction[s]),
        CorruptionKind::JpegCompression => {
            jpeg_compression(&mut planes, w, h, table.jpeg_quality[s])
        }
    }

    for plane in &mut planes {
        for v in plane.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    MultiChannelImage::from_unit_f64(
        w,
        h,
        BitDepth::Eight,
        img.channel_names().to_vec(),
        &planes,
    )
}

fn gaussian_noise(planes: &mut [Vec<f64>], sigma: f64, rng: &mut Xoshiro256pp) {
    for plane in planes {
        for v in plane.iter_mut() {
            *v += sigma * rng.next_gaussian();
        }
    }
}

fn shot_noise(planes: &mut [Vec<f64>], photon_scale: f64, rng: &mut Xoshiro256pp) {
    for plane in planes {
        for v in plane.iter_mut() {
            *v = rng.next_poisson(v.max(0.0) * photon_scale) as f64 / photon_scale;
        }
    }
}

fn impulse_noise(planes: &mut [Vec<f64>], amount: f64, rng: &mut Xoshiro256pp) {
    for plane in planes {
        for v in plane.iter_mut() {
            if rng.next_f64() < amount {
                *v = if rng.next_f64() < 0.5 { 0.0 } else { 1.0 };
            }
        }
    }
}

/// Anti-aliased disk kernel: cell weight = clamp(radius + 0.5 - dist, 0, 1),
/// so sub-pixel radii still blur. Convolution is row-decomposed over a
/// reflect-padded copy, with running sums for the full-weight interior,
/// keeping it O(n * k) rather than O(n * k^2).
fn defocus_blur(planes: &mut [Vec<f64>], w: usize, h: usize, radius: f64) -> Result<()> {
    let r_cells = (radius + 0.5).ceil() as usize;
    if 2 * r_cells + 1 > w.min(h) {
        return Err(Error::InvalidParameter(format!(
            "defocus kernel {} exceeds image {w}x{h}",
            2 * r_cells + 1
        )));
    }

    // per kernel row: contiguous full-weight run plus fractional fringe taps
    struct Row {
        dy: isize,
        full_lo: isize,
        full_hi: isize, // inclusive; full_lo > full_hi means no full run
        fringe: Vec<(isize, f64)>,
    }
    let mut rows = Vec::new();
    let mut total_weight = 0.0;
    for dy in -(r_cells as isize)..=(r_cells as isize) {
        let mut fringe = Vec::new();
        let mut full_lo = isize::MAX;
        let mut full_hi = isize::MIN;
        for dx in -(r_cells as isize)..=(r_cells as isize) {
            let dist = ((dx * dx + dy * dy) as f64).sqrt();
            let weight = (radius + 0.5 - dist).clamp(0.0, 1.0);
            if weight <= 0.0 {
                continue;
            }
            total_weight += weight;
            if weight >= 1.0 {
                full_lo = full_lo.min(dx);
                full_hi = full_hi.max(dx);
            } else {
                fringe.push((dx, weight));
            }
        }
        if full_lo != isize::MAX || !fringe.is_empty() {
            rows.push(Row { dy, full_lo, full_hi, fringe });
        }
    }

    let pad = r_cells;
    let pw = w + 2 * pad;
    for plane in planes.iter_mut() {
        // reflect-padded copy with per-row prefix sums
        let ph = h + 2 * pad;
        let mut padded = vec![0.0f64; pw * ph];
        for py in 0..ph {
            let sy = reflect_idx(py as isize - pad as isize, h);
            for px in 0..pw {
                let sx = reflect_idx(px as isize - pad as isize, w);
                padded[py * pw + px] = plane[sy * w + sx];
            }
        }
        let mut prefix = vec![0.0f64; (pw + 1) * ph];
        for py in 0..ph {
            let mut acc = 0.0;
            for px in 0..pw {
                acc += padded[py * pw + px];
                prefix[py * (pw + 1) + px + 1] = acc;
            }
        }

        let mut out = vec![0.0f64; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for row in &rows {
                    let py = (y as isize + pad as isize + row.dy) as usize;
                    let base = py * (pw + 1);
                    if row.full_lo <= row.full_hi {
                        let lo = (x as isize + pad as isize + row.full_lo) as usize;
                        let hi = (x as isize + pad as isize + row.full_hi) as usize;
                        acc += prefix[base + hi + 1] - prefix[base + lo];
                    }
                    for &(dx, wt) in &row.fringe {
                        let px = (x as isize + pad as isize + dx) as usize;
                        acc += wt * padded[py * pw + px];
                    }
                }
                out[y * w + x] = acc / total_weight;
            }
        }
        *plane = out;
    }
    Ok(())
}

fn glass_blur(
    planes: &mut [Vec<f64>],
    w: usize,
    h: usize,
    p: GlassParams,
    scale: f64,
    rng: &mut Xoshiro256pp,
) {
    // below the reference resolution the swap deltas would all collapse to
    // one pixel, erasing severity distinctions, so the scale saturates at 1
    let scale = scale.max(1.0);
    let sigma = p.sigma * scale;
    let delta = ((p.max_delta as f64 * scale).round() as usize).max(1);
    for plane in planes.iter_mut() {
        *plane = gaussian_blur(plane, w, h, sigma);
    }
    // local pixel shuffling: same offsets for every channel
    for _ in 0..p.iterations {
        for y in (delta..h - delta).rev() {
            for x in (delta..w - delta).rev() {
                let span = 2 * delta as u64 + 1;
                let dx = rng.bounded(span) as isize - delta as isize;
                let dy = rng.bounded(span) as isize - delta as isize;
                let src = (y as isize + dy) as usize * w + (x as isize + dx) as usize;
                let dst = y * w + x;
                for plane in planes.iter_mut() {
                    plane.swap(src, dst);
                }
            }
        }
    }
    for plane in planes.iter_mut() {
        *plane = gaussian_blur(plane, w, h, sigma);
    }
}

/// Gaussian-weighted taps along a line through the origin.
fn line_taps(length: f64, sigma: f64, angle: f64) -> Vec<(f64, f64, f64)> {
    let half = (length.max(3.0) - 1.0) / 2.0;
    let (dir_x, dir_y) = (angle.cos(), angle.sin());
    let mut taps = Vec::new();
    let mut total = 0.0;
    let steps = (2.0 * half).ceil() as usize + 1;
    for i in 0..steps {
        let t = -half + i as f64 * (2.0 * half) / (steps - 1).max(1) as f64;
        let wt = (-t * t / (2.0 * sigma * sigma)).exp();
        taps.push((t * dir_x, t * dir_y, wt));
        total += wt;
    }
    for tap in &mut taps {
        tap.2 /= total;
    }
    taps
}

fn apply_line_blur(plane: &[f64], w: usize, h: usize, taps: &[(f64, f64, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for &(dx, dy, wt) in taps {
                acc += wt * bilinear_sample(plane, w, h, x as f64 + dx, y as f64 + dy);
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn motion_blur(
    planes: &mut [Vec<f64>],
    w: usize,
    h: usize,
    p: MotionParams,
    scale: f64,
    rng: &mut Xoshiro256pp,
) -> Result<()> {
    // one velocity direction per application, drawn before any pixel work
    let angle = rng.next_f64() * std::f64::consts::PI;
    let scale = scale.max(0.5); // keep severity steps resolvable on small images
    let length = (p.length * scale).max(3.0);
    if length as usize >= w.min(h) {
        return Err(Error::InvalidParameter(format!(
            "motion kernel {length:.0} exceeds image {w}x{h}"
        )));
    }
    let sigma = (p.sigma * scale).max(0.5);
    let taps = line_taps(length, sigma, angle);
    for plane in planes.iter_mut() {
        *plane = apply_line_blur(plane, w, h, &taps);
    }
    Ok(())
}

fn zoom_blur(planes: &mut [Vec<f64>], w: usize, h: usize, p: ZoomParams) {
    let mut factors = Vec::new();
    let mut z = 1.0;
    while z < p.max_zoom - 1e-9 {
        factors.push(z);
        z += p.step;
    }
    for plane in planes.iter_mut() {
        let mut acc = plane.clone();
        for &factor in &factors {
            let zoomed = zoom_center(plane, w, h, factor);
            for (a, v) in acc.iter_mut().zip(&zoomed) {
                *a += v;
            }
        }
        let n = (factors.len() + 1) as f64;
        for a in acc.iter_mut() {
            *a /= n;
        }
        *plane = acc;
    }
}

fn snow(
    planes: &mut [Vec<f64>],
    w: usize,
    h: usize,
    p: SnowParams,
    scale: f64,
    rng: &mut Xoshiro256pp,
) -> Result<()> {
    // flake field: draws depend only on the image size
    let mut field: Vec<f64> = (0..w * h)
        .map(|_| p.field_mean + 0.3 * rng.next_gaussian())
        .collect();
    for v in &mut field {
        if *v < p.threshold {
            *v = 0.0;
        }
    }
    // streak the flakes along one falling direction (shared draw)
    let angle = (60.0 + rng.next_f64() * 60.0).to_radians();
    let length = (p.blur_length * scale).max(3.0);
    if length as usize >= w.min(h) {
        return Err(Error::InvalidParameter(format!(
            "snow streak kernel {length:.0} exceeds image {w}x{h}"
        )));
    }
    let taps = line_taps(length, length / 3.0, angle);
    field = apply_line_blur(&field, w, h, &taps);
    for v in &mut field {
        *v = v.clamp(0.0, 1.0);
    }
    let flipped = rot180(&field);

    // whiten the scene, then lay the flake layer on top
    let n = w * h;
    let gray: Vec<f64> = (0..n)
        .map(|i| (planes[0][i] + planes[1][i] + planes[2][i]) / 3.0)
        .collect();
    for plane in planes.iter_mut() {
        for i in 0..n {
            let whitened = plane[i].max(gray[i] * 1.5 + 0.5);
            plane[i] = p.image_weight * plane[i] + (1.0 - p.image_weight) * whitened;
            plane[i] += field[i] + flipped[i];
        }
    }
    Ok(())
}

fn frost(planes: &mut [Vec<f64>], w: usize, h: usize, p: FrostParams, rng: &mut Xoshiro256pp) {
    // procedural frost texture instead of bundled photographs
    let cell = (w.min(h) / 8).max(4);
    let texture = value_noise(w, h, cell, 4, rng);
    for plane in planes.iter_mut() {
        for (v, &t) in plane.iter_mut().zip(&texture) {
            // emphasis exponent sparsifies the noise into crystal highlights
            *v = p.image_weight * *v + p.frost_weight * t.powf(1.5);
        }
    }
}

fn fog(planes: &mut [Vec<f64>], w: usize, h: usize, p: FogParams, rng: &mut Xoshiro256pp) {
    let size = (w.max(h)).next_power_of_two() + 1;
    let plasma = plasma_fractal(size, p.decay, rng);
    let max_val = planes
        .iter()
        .flat_map(|p| p.iter())
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1e-6);
    for plane in planes.iter_mut() {
        for y in 0..h {
            for x in 0..w {
                let v = &mut plane[y * w + x];
                *v = (*v + p.amount * plasma[y * size + x]) * max_val / (max_val + p.amount);
            }
        }
    }
}

#[allow(clippy::needless_range_loop)] // indexes three planes in lockstep
fn brightness(planes: &mut [Vec<f64>], delta: f64) {
    let n = planes[0].len();
    for i in 0..n {
        let (h, s, v) = rgb_to_hsv(planes[0][i], planes[1][i], planes[2][i]);
        let (r, g, b) = hsv_to_rgb(h, s, (v + delta).clamp(0.0, 1.0));
        planes[0][i] = r;
        planes[1][i] = g;
        planes[2][i] = b;
    }
}

fn contrast(planes: &mut [Vec<f64>], factor: f64) {
    for plane in planes {
        let mean = plane.iter().sum::<f64>() / plane.len() as f64;
        for v in plane.iter_mut() {
            *v = (*v - mean) * factor + mean;
        }
    }
}

fn elastic_transform(
    planes: &mut [Vec<f64>],
    w: usize,
    h: usize,
    p: ElasticParams,
    scale: f64,
    rng: &mut Xoshiro256pp,
) {
    let displacement = (p.displacement * scale).max(0.5);
    let sigma = (p.smoothing * scale).max(1.0);

    let make_field = |rng: &mut Xoshiro256pp| -> Vec<f64> {
        let raw: Vec<f64> = (0..w * h).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let mut smooth = gaussian_blur(&raw, w, h, sigma);
        let peak = smooth.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        for v in &mut smooth {
            *v = *v / peak * displacement;
        }
        smooth
    };
    let dx = make_field(rng);
    let dy = make_field(rng);

    for plane in planes.iter_mut() {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                out[i] = bilinear_sample(plane, w, h, x as f64 + dx[i], y as f64 + dy[i]);
            }
        }
        *plane = out;
    }
}

fn pixelate(planes: &mut [Vec<f64>], w: usize, h: usize, fraction: f64) {
    let dw = ((w as f64 * fraction).round() as usize).max(1);
    let dh = ((h as f64 * fraction).round() as usize).max(1);
    for plane in planes.iter_mut() {
        let down = box_downsample(plane, w, h, dw, dh);
        *plane = upsample_from_cells(&down, dw, dh, w, h);
    }
}

// Standard JPEG Annex K quantization tables.
const JPEG_LUMA_Q: [f64; 64] = [
    16.0, 11.0, 10.0, 16.0, 24.0, 40.0, 51.0, 61.0, //
    12.0, 12.0, 14.0, 19.0, 26.0, 58.0, 60.0, 55.0, //
    14.0, 13.0, 16.0, 24.0, 40.0, 57.0, 69.0, 56.0, //
    14.0, 17.0, 22.0, 29.0, 51.0, 87.0, 80.0, 62.0, //
    18.0, 22.0, 37.0, 56.0, 68.0, 109.0, 103.0, 77.0, //
    24.0, 35.0, 55.0, 64.0, 81.0, 104.0, 113.0, 92.0, //
    49.0, 64.0, 78.0, 87.0, 103.0, 121.0, 120.0, 101.0, //
    72.0, 92.0, 95.0, 98.0, 112.0, 100.0, 103.0, 99.0,
];

const JPEG_CHROMA_Q: [f64; 64] = [
    17.0, 18.0, 24.0, 47.0, 99.0, 99.0, 99.0, 99.0, //
    18.0, 21.0, 26.0, 66.0, 99.0, 99.0, 99.0, 99.0, //
    24.0, 26.0, 56.0, 99.0, 99.0, 99.0, 99.0, 99.0, //
    47.0, 66.0, 99.0, 99.0, 99.0, 99.0, 99.0, 99.0, //
    99.0, 99.0, 99.0, 99.0, 99.0, 99.0, 99.0, 99.0, //
    99.0, 99.0, 99.0, 99.0, 99.0, 99.0, 99.0, 99.0, //
    99.0, 99.0, 99.0, 99.0, 99.0, 99.0, 99.0, 99.0, //
    99.0, 99.0, 99.0, 99.0, 99.0, 99.0, 99.0, 99.0,
];

fn scaled_quant_table(base: &[f64; 64], quality: u8) -> [f64; 64] {
    let q = f64::from(quality.clamp(1, 100));
    let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q };
    let mut out = [0.0; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((b * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0);
    }
    out
}

/// Baseline-JPEG quantization cycle: YCbCr transform, 8x8 DCT, quantize,
/// dequantize, inverse. The lossy part of JPEG without entropy coding, so
/// outputs do not depend on any codec library version.
fn jpeg_compression(planes: &mut [Vec<f64>], w: usize, h: usize, quality: u8) {
    let n = w * h;
    // RGB -> YCbCr in the 0..255 domain
    let mut ycbcr = vec![vec![0.0f64; n]; 3];
    for i in 0..n {
        let r = planes[0][i] * 255.0;
        let g = planes[1][i] * 255.0;
        let b = planes[2][i] * 255.0;
        ycbcr[0][i] = 0.299 * r + 0.587 * g + 0.114 * b;
        ycbcr[1][i] = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
        ycbcr[2][i] = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    }

    let luma_q = scaled_quant_table(&JPEG_LUMA_Q, quality);
    let chroma_q = scaled_quant_table(&JPEG_CHROMA_Q, quality);

    let bw = w.div_ceil(8);
    let bh = h.div_ceil(8);
    for (comp, plane) in ycbcr.iter_mut().enumerate() {
        let qtab = if comp == 0 { &luma_q } else { &chroma_q };
        for by in 0..bh {
            for bx in 0..bw {
                let mut block = [0.0f64; 64];
                for iy in 0..8 {
                    let sy = (by * 8 + iy).min(h - 1); // edge-replicate padding
                    for ix in 0..8 {
                        let sx = (bx * 8 + ix).min(w - 1);
                        block[iy * 8 + ix] = plane[sy * w + sx] - 128.0;
                    }
                }
                let mut coeffs = dct2_8x8(&block);
                for (c, &q) in coeffs.iter_mut().zip(qtab) {
                    *c = (*c / q).round_ties_even() * q;
                }
                let back = idct2_8x8(&coeffs);
                for iy in 0..8 {
                    let sy = by * 8 + iy;
                    if sy >= h {
                        continue;
                    }
                    for ix in 0..8 {
                        let sx = bx * 8 + ix;
                        if sx >= w {
                            continue;
                        }
                        plane[sy * w + sx] = back[iy * 8 + ix] + 128.0;
                    }
                }
            }
        }
    }

    for i in 0..n {
        let y = ycbcr[0][i];
        let cb = ycbcr[1][i] - 128.0;
        let cr = ycbcr[2][i] - 128.0;
        planes[0][i] = (y + 1.402 * cr) / 255.0;
        planes[1][i] = (y - 0.344_136 * cb - 0.714_136 * cr) / 255.0;
        planes[2][i] = (y + 1.772 * cb) / 255.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrupt::psnr;

    fn test_image(seed: u64, side: usize) -> MultiChannelImage {
        // photo-like fixture: smooth gradients plus seeded texture
        let mut rng = Xoshiro256pp::from_seed(seed);
        let mut planes = Vec::new();
        for c in 0..3 {
            let base: Vec<f64> = (0..side * side).map(|_| rng.next_f64()).collect();
            let texture = gaussian_blur(&base, side, side, 2.0);
            let plane: Vec<u16> = (0..side * side)
                .map(|i| {
                    let x = (i % side) as f64 / side as f64;
                    let y = (i / side) as f64 / side as f64;
                    let g = 0.25 + 0.35 * x + 0.2 * y * (c as f64 + 1.0) / 3.0;
                    let v = (g + 0.45 * (texture[i] - 0.5)).clamp(0.05, 0.95);
                    (v * 255.0).round() as u16
                })
                .collect();
            planes.push(plane);
        }
        MultiChannelImage::new(
            side,
            side,
            BitDepth::Eight,
            vec!["R".into(), "G".into(), "B".into()],
            planes,
        )
        .unwrap()
    }

    #[test]
    fn determinism_same_seed_same_bytes() {
        let img = test_image(1, 48);
        for kind in CorruptionKind::ALL {
            let a = apply_corruption(&img, kind, 3, 42).unwrap();
            let b = apply_corruption(&img, kind, 3, 42).unwrap();
            assert_eq!(a, b, "{} not deterministic", kind.name());
        }
    }

    #[test]
    fn different_seeds_differ_for_random_kinds() {
        let img = test_image(2, 48);
        for kind in [
            CorruptionKind::GaussianNoise,
            CorruptionKind::ShotNoise,
            CorruptionKind::ImpulseNoise,
            CorruptionKind::GlassBlur,
            CorruptionKind::MotionBlur,
            CorruptionKind::Snow,
            CorruptionKind::Frost,
            CorruptionKind::Fog,
            CorruptionKind::ElasticTransform,
        ] {
            let a = apply_corruption(&img, kind, 3, 1).unwrap();
            let b = apply_corruption(&img, kind, 3, 2).unwrap();
            assert_ne!(a, b, "{} ignored its seed", kind.name());
        }
    }

    #[test]
    fn output_shape_and_names_preserved() {
        let img = test_image(3, 48);
        for kind in CorruptionKind::ALL {
            let out = apply_corruption(&img, kind, 5, 7).unwrap();
            assert_eq!(out.width(), img.width());
            assert_eq!(out.height(), img.height());
            assert_eq!(out.channel_names(), img.channel_names());
        }
    }

    #[test]
    fn rejects_undersized_images() {
        let img = MultiChannelImage::constant(
            16,
            16,
            BitDepth::Eight,
            vec!["R".into(), "G".into(), "B".into()],
            100,
        )
        .unwrap();
        assert!(apply_corruption(&img, CorruptionKind::Fog, 1, 0).is_err());
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let img = MultiChannelImage::constant(48, 48, BitDepth::Eight, vec!["L".into()], 100).unwrap();
        assert!(apply_corruption(&img, CorruptionKind::Fog, 1, 0).is_err());
    }

    #[test]
    fn brightness_on_gray_matches_value_map() {
        // gray pixels have S=0, so brightness is V + delta; severity 1 on 128
        // gives (128/255 + 0.1)*255 = 153.5, which rounds half-to-even to 154
        let img = MultiChannelImage::constant(
            32,
            32,
            BitDepth::Eight,
            vec!["R".into(), "G".into(), "B".into()],
            128,
        )
        .unwrap();
        let expected: [u16; 5] = [154, 179, 204, 230, 255];
        for severity in 1..=5u8 {
            let out = apply_corruption(&img, CorruptionKind::Brightness, severity, 0).unwrap();
            for plane in out.planes() {
                assert!(
                    plane.iter().all(|&v| v == expected[(severity - 1) as usize]),
                    "severity {severity}: got {} want {}",
                    plane[0],
                    expected[(severity - 1) as usize]
                );
            }
        }
    }

    #[test]
    fn contrast_on_constant_is_identity() {
        let img = MultiChannelImage::constant(
            32,
            32,
            BitDepth::Eight,
            vec!["R".into(), "G".into(), "B".into()],
            77,
        )
        .unwrap();
        let out = apply_corruption(&img, CorruptionKind::Contrast, 5, 0).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn gaussian_noise_severity_5_noisier_than_1() {
        let img = test_image(4, 64);
        let s1 = apply_corruption(&img, CorruptionKind::GaussianNoise, 1, 9).unwrap();
        let s5 = apply_corruption(&img, CorruptionKind::GaussianNoise, 5, 9).unwrap();
        let p1 = psnr(&img, &s1).unwrap();
        let p5 = psnr(&img, &s5).unwrap();
        assert!(p5 < p1, "psnr s5 {p5} should be below s1 {p1}");
    }

    #[test]
    fn jpeg_lower_quality_is_lossier() {
        let img = test_image(5, 64);
        let hi = apply_corruption(&img, CorruptionKind::JpegCompression, 1, 0).unwrap();
        let lo = apply_corruption(&img, CorruptionKind::JpegCompression, 5, 0).unwrap();
        assert!(psnr(&img, &lo).unwrap() < psnr(&img, &hi).unwrap());
    }

    #[test]
    fn pixelate_preserves_constant_regions() {
        let img = MultiChannelImage::constant(
            40,
            40,
            BitDepth::Eight,
            vec!["R".into(), "G".into(), "B".into()],
            200,
        )
        .unwrap();
        let out = apply_corruption(&img, CorruptionKind::Pixelate, 3, 0).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn shared_kinds_draw_content_independent_streams() {
        // same seed, same dimensions, different content: shared-policy kinds
        // must produce outputs that agree wherever the inputs agree.
        // Verified here via the stacked-plane symmetry: a 3-plane stack of
        // one channel equals per-plane application.
        let img = test_image(6, 48);
        let single = img.take_channel(0).unwrap();
        let stack = single.replicate_channel(3).unwrap();
        for kind in CorruptionKind::ALL {
            if kind.default_randomness_policy() != super::super::RandomnessPolicy::Shared {
                continue;
            }
            let out = apply_corruption(&stack, kind, 3, 31).unwrap();
            assert_eq!(
                out.plane(0),
                out.plane(1),
                "{}: stacked identical planes must stay identical",
                kind.name()
            );
            assert_eq!(out.plane(1), out.plane(2), "{}", kind.name());
        }
    }
}
