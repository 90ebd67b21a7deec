//! Radiometric preprocessing: 16-bit multiband scenes to 8-bit
//! analysis-ready imagery.
//!
//! The pipeline is weighted-Brovey pansharpening (optional), 16-to-8-bit
//! rescale, gamma correction, and a per-channel percentile clip + min-max
//! stretch. Every stage is a deterministic monotone map; identical inputs
//! and config produce byte-identical outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BitDepth, ChannelGroup, MultiChannelImage};

/// Order of the gamma and contrast-stretch stages, configurable for
/// ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    #[default]
    GammaThenStretch,
    StretchThenGamma,
}

/// Configuration for [`preprocess_scene`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiometricConfig {
    /// Gamma for display encoding; the exponent applied is `1/gamma`.
    pub gamma: f64,
    /// Fraction of the pixel CDF clipped from the bottom of each channel.
    pub clip_fraction: f64,
    /// Per-band Brovey weights; `None` means uniform `1/bands`.
    pub brovey_weights: Option<Vec<f64>>,
    /// Whether the scene needs pansharpening (RarePlanes-style inputs true,
    /// US3D-style false).
    pub pansharpen: bool,
    pub stage_order: StageOrder,
}

impl Default for RadiometricConfig {
    fn default() -> Self {
        Self {
            gamma: 2.2,
            clip_fraction: 0.01,
            brovey_weights: None,
            pansharpen: false,
            stage_order: StageOrder::GammaThenStretch,
        }
    }
}

impl RadiometricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_nan() || self.gamma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(0.0..0.5).contains(&self.clip_fraction) {
            return Err(Error::InvalidParameter(format!(
                "clip_fraction must lie in [0, 0.5), got {}",
                self.clip_fraction
            )));
        }
        if let Some(w) = &self.brovey_weights {
            validate_weights(w)?;
        }
        Ok(())
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidParameter("empty Brovey weights".into()));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidParameter("Brovey weights must be non-negative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "Brovey weights must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Bilinear upsample of one plane by per-axis integer factors, using the
/// pixel-center convention with edge clamping.
fn upsample_bilinear(
    plane: &[u16],
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(dst_w * dst_h);
    let sx = src_w as f64 / dst_w as f64;
    let sy = src_h as f64 / dst_h as f64;
    for y in 0..dst_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (src_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let dy = fy - y0 as f64;
        for x in 0..dst_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (src_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let dx = fx - x0 as f64;
            let top = f64::from(plane[y0 * src_w + x0]) * (1.0 - dx)
                + f64::from(plane[y0 * src_w + x1]) * dx;
            let bot = f64::from(plane[y1 * src_w + x0]) * (1.0 - dx)
                + f64::from(plane[y1 * src_w + x1]) * dx;
            out.push(top * (1.0 - dy) + bot * dy);
        }
    }
    out
}

/// Weighted Brovey pansharpening to the panchromatic resolution.
///
/// Bands are bilinearly upsampled to the pan grid, then each output sample
/// is `ms_b * pan / sum_b(w_b * ms_b)`, re-quantized to 16 bits. Where the
/// weighted sum is zero the output is zero.
pub fn brovey_pansharpen(
    ms: &MultiChannelImage,
    pan: &MultiChannelImage,
    weights: &[f64],
) -> Result<MultiChannelImage> {
    if ms.bit_depth() != BitDepth::Sixteen || pan.bit_depth() != BitDepth::Sixteen {
        return Err(Error::InvalidParameter("brovey_pansharpen expects 16-bit inputs".into()));
    }
    if pan.channel_count() != 1 {
        return Err(Error::InvalidParameter("pan band must be single-channel".into()));
    }
    if weights.len() != ms.channel_count() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} bands",
            weights.len(),
            ms.channel_count()
        )));
    }
    validate_weights(weights)?;
    if pan.width() < ms.width()
        || pan.height() < ms.height()
        || !pan.width().is_multiple_of(ms.width())
        || !pan.height().is_multiple_of(ms.height())
    {
        return Err(Error::ShapeMismatch(format!(
            "pan {}x{} is not an integer upscale of ms {}x{}",
            pan.width(),
            pan.height(),
            ms.width(),
            ms.height()
        )));
    }

    let (w, h) = (pan.width(), pan.height());
    let upsampled: Vec<Vec<f64>> = (0..ms.channel_count())
        .map(|c| upsample_bilinear(ms.plane(c), ms.width(), ms.height(), w, h))
        .collect();
    let pan_plane = pan.plane(0);

    let mut out_planes = vec![vec![0u16; w * h]; ms.channel_count()];
    for i in 0..w * h {
        let denom: f64 = upsampled
            .iter()
            .zip(weights)
            .map(|(band, &wt)| wt * band[i])
            .sum();
        if denom == 0.0 {
            continue; // all bands zero here: output stays 0
        }
        let ratio = f64::from(pan_plane[i]) / denom;
        for (c, band) in upsampled.iter().enumerate() {
            out_planes[c][i] = (band[i] * ratio).round_ties_even().clamp(0.0, 65535.0) as u16;
        }
    }
    MultiChannelImage::new(
        w,
        h,
        BitDepth::Sixteen,
        ms.channel_names().to_vec(),
        out_planes,
    )
}

/// Rescale 16-bit samples to 8 bits: `round_half_even(v * 255 / 65535)`.
pub fn rescale_16_to_8(img: &MultiChannelImage) -> Result<MultiChannelImage> {
    if img.bit_depth() == BitDepth::Eight {
        return Err(Error::InvalidParameter("input is already 8-bit".into()));
    }
    let planes = img
        .planes()
        .iter()
        .map(|p| {
            p.iter()
                .map(|&v| (f64::from(v) * 255.0 / 65535.0).round_ties_even() as u16)
                .collect()
        })
        .collect();
    MultiChannelImage::new(
        img.width(),
        img.height(),
        BitDepth::Eight,
        img.channel_names().to_vec(),
        planes,
    )
}

/// Gamma-correct 8-bit samples: `round_half_even(255 * (v/255)^(1/gamma))`.
pub fn gamma_correct(img: &MultiChannelImage, gamma: f64) -> Result<MultiChannelImage> {
    if img.bit_depth() != BitDepth::Eight {
        return Err(Error::InvalidParameter("gamma_correct expects 8-bit input".into()));
    }
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let exp = 1.0 / gamma;
    let lut: Vec<u16> = (0..=255u16)
        .map(|v| (255.0 * (f64::from(v) / 255.0).powf(exp)).round_ties_even() as u16)
        .collect();
    Ok(apply_lut(img, |_c| lut.clone()))
}

fn apply_lut(img: &MultiChannelImage, lut_for: impl Fn(usize) -> Vec<u16>) -> MultiChannelImage {
    let planes = (0..img.channel_count())
        .map(|c| {
            let lut = lut_for(c);
            img.plane(c).iter().map(|&v| lut[v as usize]).collect()
        })
        .collect();
    MultiChannelImage::new(
        img.width(),
        img.height(),
        img.bit_depth(),
        img.channel_names().to_vec(),
        planes,
    )
    .expect("LUT preserves shape and range")
}

/// Result of [`percentile_clip_stretch`]: the stretched image plus the
/// names of channels that were constant and collapsed to zero.
#[derive(Debug, Clone)]
pub struct StretchOutcome {
    pub image: MultiChannelImage,
    pub degenerate_channels: Vec<String>,
}

/// Clip the bottom `clip_fraction` of each channel's CDF, then stretch
/// min-max to [0, 255]. Channels are handled independently.
///
/// The low cut is the smallest observed value whose inclusive CDF reaches
/// `clip_fraction`; the high end is the channel max. A constant channel
/// becomes all zeros and is reported as degenerate rather than failing.
pub fn percentile_clip_stretch(
    img: &MultiChannelImage,
    clip_fraction: f64,
) -> Result<StretchOutcome> {
    if img.bit_depth() != BitDepth::Eight {
        return Err(Error::InvalidParameter(
            "percentile_clip_stretch expects 8-bit input".into(),
        ));
    }
    if !(0.0..0.5).contains(&clip_fraction) {
        return Err(Error::InvalidParameter(format!(
            "clip_fraction must lie in [0, 0.5), got {clip_fraction}"
        )));
    }

    let n = (img.width() * img.height()) as f64;
    let mut degenerate = Vec::new();
    let mut planes = Vec::with_capacity(img.channel_count());
    for c in 0..img.channel_count() {
        let mut hist = [0u64; 256];
        for &v in img.plane(c) {
            hist[v as usize] += 1;
        }
        let threshold = clip_fraction * n;
        let mut cumulative = 0u64;
        let mut lo = 255u16;
        for (v, &count) in hist.iter().enumerate() {
            if count == 0 {
                continue;
            }
            cumulative += count;
            if cumulative as f64 >= threshold {
                lo = v as u16;
                break;
            }
        }
        let hi = (0..256).rev().find(|&v| hist[v] > 0).unwrap_or(0) as u16;

        if lo >= hi {
            degenerate.push(img.channel_names()[c].clone());
            planes.push(vec![0u16; img.plane(c).len()]);
            continue;
        }
        let span = f64::from(hi - lo);
        let lut: Vec<u16> = (0..=255u16)
            .map(|v| {
                let clipped = v.max(lo);
                (f64::from(clipped - lo) * 255.0 / span).round_ties_even() as u16
            })
            .collect();
        planes.push(img.plane(c).iter().map(|&v| lut[v as usize]).collect());
    }

    let image = MultiChannelImage::new(
        img.width(),
        img.height(),
        BitDepth::Eight,
        img.channel_names().to_vec(),
        planes,
    )?;
    Ok(StretchOutcome {
        image,
        degenerate_channels: degenerate,
    })
}

/// Output of the full preprocessing pipeline.
#[derive(Debug, Clone)]
pub struct PreprocessOutcome {
    pub image: MultiChannelImage,
    pub degenerate_channels: Vec<String>,
}

/// Run the full scene pipeline: pansharpen (if configured), rescale to
/// 8 bits, gamma, percentile stretch, then project out the requested
/// channel groups (concatenated in order). Empty `out_groups` keeps all
/// channels.
pub fn preprocess_scene(
    ms: &MultiChannelImage,
    pan: Option<&MultiChannelImage>,
    cfg: &RadiometricConfig,
    out_groups: &[ChannelGroup],
) -> Result<PreprocessOutcome> {
    cfg.validate()?;
    if cfg.pansharpen != pan.is_some() {
        return Err(Error::InvalidParameter(
            "pan band must be provided exactly when pansharpening is enabled".into(),
        ));
    }

    let sharpened;
    let current = if let Some(pan) = pan {
        let uniform = vec![1.0 / ms.channel_count() as f64; ms.channel_count()];
        let weights = cfg.brovey_weights.as_deref().unwrap_or(&uniform);
        sharpened = brovey_pansharpen(ms, pan, weights)?;
        &sharpened
    } else {
        ms
    };

    let eight = rescale_16_to_8(current)?;
    let (processed, degenerate) = match cfg.stage_order {
        StageOrder::GammaThenStretch => {
            let g = gamma_correct(&eight, cfg.gamma)?;
            let s = percentile_clip_stretch(&g, cfg.clip_fraction)?;
            (s.image, s.degenerate_channels)
        }
        StageOrder::StretchThenGamma => {
            let s = percentile_clip_stretch(&eight, cfg.clip_fraction)?;
            let g = gamma_correct(&s.image, cfg.gamma)?;
            (g, s.degenerate_channels)
        }
    };

    let image = if out_groups.is_empty() {
        processed
    } else {
        let mut names = Vec::new();
        let mut planes = Vec::new();
        for group in out_groups {
            let sub = processed.extract_group(group)?;
            names.extend(sub.channel_names().iter().cloned());
            planes.extend(sub.planes().iter().cloned());
        }
        MultiChannelImage::new(processed.width(), processed.height(), BitDepth::Eight, names, planes)?
    };

    Ok(PreprocessOutcome {
        image,
        degenerate_channels: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray16(values: Vec<u16>, w: usize, h: usize) -> MultiChannelImage {
        MultiChannelImage::new(w, h, BitDepth::Sixteen, vec!["L".into()], vec![values]).unwrap()
    }

    fn gray8(values: Vec<u16>, w: usize, h: usize) -> MultiChannelImage {
        MultiChannelImage::new(w, h, BitDepth::Eight, vec!["L".into()], vec![values]).unwrap()
    }

    #[test]
    fn brovey_identity_when_pan_equals_bands() {
        // all ms bands equal to c, pan = c, weights sum 1 -> output = c
        let c = 7000u16;
        let ms = MultiChannelImage::constant(
            4,
            4,
            BitDepth::Sixteen,
            vec!["A".into(), "B".into()],
            c,
        )
        .unwrap();
        let pan = MultiChannelImage::constant(4, 4, BitDepth::Sixteen, vec!["P".into()], c).unwrap();
        let out = brovey_pansharpen(&ms, &pan, &[0.5, 0.5]).unwrap();
        for plane in out.planes() {
            assert!(plane.iter().all(|&v| v == c));
        }
    }

    #[test]
    fn brovey_hand_arithmetic() {
        // ms=(100,200), w=(0.5,0.5), pan=180: denominator 150, ratio 1.2 -> (120,240)
        let ms = MultiChannelImage::new(
            1,
            1,
            BitDepth::Sixteen,
            vec!["A".into(), "B".into()],
            vec![vec![100], vec![200]],
        )
        .unwrap();
        let pan = MultiChannelImage::constant(1, 1, BitDepth::Sixteen, vec!["P".into()], 180).unwrap();
        let out = brovey_pansharpen(&ms, &pan, &[0.5, 0.5]).unwrap();
        assert_eq!(out.plane(0), &[120]);
        assert_eq!(out.plane(1), &[240]);
    }

    #[test]
    fn brovey_zero_denominator_gives_zero() {
        let ms = MultiChannelImage::constant(
            2,
            2,
            BitDepth::Sixteen,
            vec!["A".into(), "B".into()],
            0,
        )
        .unwrap();
        let pan =
            MultiChannelImage::constant(2, 2, BitDepth::Sixteen, vec!["P".into()], 40000).unwrap();
        let out = brovey_pansharpen(&ms, &pan, &[0.5, 0.5]).unwrap();
        assert!(out.planes().iter().all(|p| p.iter().all(|&v| v == 0)));
    }

    #[test]
    fn brovey_rejects_non_integer_ratio() {
        let ms = gray16(vec![0; 9], 3, 3);
        let pan = MultiChannelImage::constant(4, 4, BitDepth::Sixteen, vec!["P".into()], 1).unwrap();
        assert!(brovey_pansharpen(&ms, &pan, &[1.0]).is_err());
    }

    #[test]
    fn rescale_endpoints_and_derived_values() {
        let img = gray16(vec![0, 65535, 32768, 257], 2, 2);
        let out = rescale_16_to_8(&img).unwrap();
        // 32768*255/65535 = 127.502 -> 128; 257*255/65535 = 1.0 exactly
        assert_eq!(out.plane(0), &[0, 255, 128, 1]);
    }

    #[test]
    fn rescale_rejects_8bit_input() {
        assert!(rescale_16_to_8(&gray8(vec![0; 4], 2, 2)).is_err());
    }

    #[test]
    fn gamma_fixed_points_and_oracle_values() {
        let img = gray8(vec![0, 255, 128, 64, 200, 1], 3, 2);
        let out = gamma_correct(&img, 2.2).unwrap();
        // high-precision oracle: 128 -> 186.415, 64 -> 136.03, 200 -> 228.34, 1 -> 20.54
        assert_eq!(out.plane(0), &[0, 255, 186, 136, 228, 21]);
    }

    #[test]
    fn gamma_one_is_identity() {
        let img = gray8((0..=255u16).collect(), 16, 16);
        let out = gamma_correct(&img, 1.0).unwrap();
        assert_eq!(out.plane(0), img.plane(0));
    }

    #[test]
    fn gamma_rejects_nonpositive() {
        let img = gray8(vec![0; 4], 2, 2);
        assert!(gamma_correct(&img, 0.0).is_err());
        assert!(gamma_correct(&img, -1.0).is_err());
    }

    #[test]
    fn gamma_is_monotone() {
        let img = gray8((0..=255u16).collect(), 16, 16);
        let out = gamma_correct(&img, 2.2).unwrap();
        for w in out.plane(0).windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn stretch_two_point_channel() {
        let mut values = vec![10u16; 8];
        values.extend(vec![20u16; 8]);
        let img = gray8(values, 4, 4);
        let out = percentile_clip_stretch(&img, 0.01).unwrap();
        assert!(out.degenerate_channels.is_empty());
        let plane = out.image.plane(0);
        assert!(plane[..8].iter().all(|&v| v == 0));
        assert!(plane[8..].iter().all(|&v| v == 255));
    }

    #[test]
    fn stretch_full_range_uniform_is_identity() {
        // channel containing exactly {0..255}, clip 0 -> identity
        let img = gray8((0..=255u16).collect(), 16, 16);
        let out = percentile_clip_stretch(&img, 0.0).unwrap();
        assert_eq!(out.image.plane(0), img.plane(0));
    }

    #[test]
    fn stretch_constant_channel_is_degenerate() {
        let img = gray8(vec![77; 16], 4, 4);
        let out = percentile_clip_stretch(&img, 0.01).unwrap();
        assert_eq!(out.degenerate_channels, vec!["L".to_string()]);
        assert!(out.image.plane(0).iter().all(|&v| v == 0));
    }

    #[test]
    fn stretch_attains_bounds() {
        let img = gray8(vec![30, 40, 50, 90, 120, 121, 122, 123, 200, 220, 10, 10, 60, 61, 62, 63], 4, 4);
        let out = percentile_clip_stretch(&img, 0.05).unwrap();
        let plane = out.image.plane(0);
        assert_eq!(*plane.iter().min().unwrap(), 0);
        assert_eq!(*plane.iter().max().unwrap(), 255);
    }

    #[test]
    fn stretch_clips_bottom_fraction() {
        // 100 pixels, one at value 3, rest spread high; 1% clip removes the low outlier
        let mut values = vec![3u16];
        values.extend((0..99).map(|i| 100 + i as u16));
        let img = gray8(values, 10, 10);
        let out = percentile_clip_stretch(&img, 0.02).unwrap();
        // lo should be 100 (cumulative at 3 is 1 < 2), so the outlier maps to 0
        assert_eq!(out.image.plane(0)[0], 0);
        assert_eq!(out.image.plane(0)[1], 0); // value 100 == lo
        assert_eq!(*out.image.plane(0).last().unwrap(), 255);
    }

    #[test]
    fn preprocess_matches_stage_composition() {
        let values: Vec<u16> = (0..64u32).map(|i| (i * 1000) as u16).collect();
        let ms = MultiChannelImage::new(
            8,
            8,
            BitDepth::Sixteen,
            vec!["R".into(), "G".into()],
            vec![values.clone(), values.iter().map(|&v| v / 2).collect()],
        )
        .unwrap();
        let cfg = RadiometricConfig::default();
        let out = preprocess_scene(&ms, None, &cfg, &[]).unwrap();

        let manual = {
            let eight = rescale_16_to_8(&ms).unwrap();
            let g = gamma_correct(&eight, 2.2).unwrap();
            percentile_clip_stretch(&g, 0.01).unwrap().image
        };
        assert_eq!(out.image, manual);
    }

    #[test]
    fn preprocess_ramp_attains_full_range() {
        let values: Vec<u16> = (0..256u32).map(|i| (i * 257) as u16).collect();
        let ms = MultiChannelImage::new(
            16,
            16,
            BitDepth::Sixteen,
            vec!["R".into(), "G".into(), "B".into(), "NIR".into()],
            vec![values.clone(), values.clone(), values.clone(), values],
        )
        .unwrap();
        let out = preprocess_scene(&ms, None, &RadiometricConfig::default(), &[]).unwrap();
        for plane in out.image.planes() {
            assert_eq!(*plane.iter().min().unwrap(), 0);
            assert_eq!(*plane.iter().max().unwrap(), 255);
        }
    }

    #[test]
    fn pansharpen_noop_when_pan_is_weighted_sum() {
        // pan identical to the weighted band sum makes the Brovey ratio 1,
        // so the pansharpened pipeline equals the plain one.
        let a: Vec<u16> = (0..16u16).map(|i| 2000 + 700 * i).collect();
        let b: Vec<u16> = (0..16u16).map(|i| 30000 - 900 * i).collect();
        let ms = MultiChannelImage::new(
            4,
            4,
            BitDepth::Sixteen,
            vec!["A".into(), "B".into()],
            vec![a.clone(), b.clone()],
        )
        .unwrap();
        let pan_values: Vec<u16> = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| ((f64::from(x) + f64::from(y)) / 2.0).round_ties_even() as u16)
            .collect();
        // use exact weighted sum as f64 via a pan that integer-rounds; allow
        // the ratio to differ by at most the rounding step
        let pan = MultiChannelImage::new(4, 4, BitDepth::Sixteen, vec!["P".into()], vec![pan_values])
            .unwrap();
        let sharpened = brovey_pansharpen(&ms, &pan, &[0.5, 0.5]).unwrap();
        for (out_plane, in_plane) in sharpened.planes().iter().zip(ms.planes()) {
            for (&o, &i) in out_plane.iter().zip(in_plane) {
                assert!((i32::from(o) - i32::from(i)).abs() <= 1, "{o} vs {i}");
            }
        }
    }

    #[test]
    fn preprocess_extracts_groups_in_order() {
        let values: Vec<u16> = (0..16u16).map(|i| i * 4000).collect();
        let ms = MultiChannelImage::new(
            4,
            4,
            BitDepth::Sixteen,
            vec!["R".into(), "G".into(), "B".into(), "NIR".into()],
            vec![values.clone(), values.clone(), values.clone(), values],
        )
        .unwrap();
        let out = preprocess_scene(
            &ms,
            None,
            &RadiometricConfig::default(),
            &[ChannelGroup::nir(), ChannelGroup::rgb()],
        )
        .unwrap();
        assert_eq!(
            out.image.channel_names(),
            ["NIR".to_string(), "R".into(), "G".into(), "B".into()]
        );
    }
}
