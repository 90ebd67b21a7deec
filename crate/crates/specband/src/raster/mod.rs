//! N-channel raster images with planar storage.
//!
//! Images are immutable after construction and all operations are pure, so
//! they can be shared read-only across threads. Samples are unsigned
//! integers at rest; anything needing real arithmetic converts to f64 and
//! re-quantizes with round-half-to-even.

mod io;

pub use io::{load_raster, save_raster, SIDECAR_MANIFEST};

use crate::error::{Error, Result};

/// Sample bit depth of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    /// Largest representable sample value.
    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }

    pub fn bits(self) -> u8 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::InvalidImage(format!(
                "unsupported bit depth {other}, expected 8 or 16"
            ))),
        }
    }
}

/// A named, ordered subset of an image's channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelGroup {
    pub name: String,
    pub members: Vec<String>,
}

impl ChannelGroup {
    pub fn new(name: impl Into<String>, members: Vec<String>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter(
                "channel group must have at least one member".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            members,
        })
    }

    /// The conventional RGB group.
    pub fn rgb() -> Self {
        Self {
            name: "rgb".into(),
            members: vec!["R".into(), "G".into(), "B".into()],
        }
    }

    /// The conventional single-channel NIR group.
    pub fn nir() -> Self {
        Self {
            name: "nir".into(),
            members: vec!["NIR".into()],
        }
    }
}

/// Planar multi-channel raster. Each plane is a row-major `width * height`
/// buffer of samples within the image's bit depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiChannelImage {
    width: usize,
    height: usize,
    bit_depth: BitDepth,
    channel_names: Vec<String>,
    planes: Vec<Vec<u16>>,
}

impl MultiChannelImage {
    /// Build an image, validating every invariant: plane sizes, sample
    /// range, and channel-name uniqueness.
    pub fn new(
        width: usize,
        height: usize,
        bit_depth: BitDepth,
        channel_names: Vec<String>,
        planes: Vec<Vec<u16>>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("zero-sized image".into()));
        }
        if channel_names.len() != planes.len() {
            return Err(Error::InvalidImage(format!(
                "{} channel names for {} planes",
                channel_names.len(),
                planes.len()
            )));
        }
        if planes.is_empty() {
            return Err(Error::InvalidImage("image must have at least one channel".into()));
        }
        for (name, plane) in channel_names.iter().zip(&planes) {
            if plane.len() != width * height {
                return Err(Error::InvalidImage(format!(
                    "plane {name:?} has {} samples, expected {}",
                    plane.len(),
                    width * height
                )));
            }
        }
        let max = bit_depth.max_value();
        if max < u16::MAX {
            for (name, plane) in channel_names.iter().zip(&planes) {
                if plane.iter().any(|&v| v > max) {
                    return Err(Error::InvalidImage(format!(
                        "plane {name:?} has samples above {max}"
                    )));
                }
            }
        }
        for (i, name) in channel_names.iter().enumerate() {
            if channel_names[..i].contains(name) {
                return Err(Error::InvalidImage(format!("duplicate channel name {name:?}")));
            }
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            channel_names,
            planes,
        })
    }

    /// Constant-valued image, mostly for tests and synthetic fixtures.
    pub fn constant(
        width: usize,
        height: usize,
        bit_depth: BitDepth,
        channel_names: Vec<String>,
        value: u16,
    ) -> Result<Self> {
        let planes = vec![vec![value; width * height]; channel_names.len()];
        Self::new(width, height, bit_depth, channel_names, planes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn channel_count(&self) -> usize {
        self.planes.len()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn plane(&self, index: usize) -> &[u16] {
        &self.planes[index]
    }

    pub fn planes(&self) -> &[Vec<u16>] {
        &self.planes
    }

    pub fn sample(&self, channel: usize, x: usize, y: usize) -> u16 {
        self.planes[channel][y * self.width + x]
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channel_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    /// Project onto the group's channels, in the group's order. Samples are
    /// copied unchanged.
    pub fn extract_group(&self, group: &ChannelGroup) -> Result<Self> {
        let mut names = Vec::with_capacity(group.members.len());
        let mut planes = Vec::with_capacity(group.members.len());
        for member in &group.members {
            let idx = self.channel_index(member)?;
            names.push(self.channel_names[idx].clone());
            planes.push(self.planes[idx].clone());
        }
        Self::new(self.width, self.height, self.bit_depth, names, planes)
    }

    /// Stack `copies` identical copies of a single-channel image.
    pub fn replicate_channel(&self, copies: usize) -> Result<Self> {
        if self.channel_count() != 1 {
            return Err(Error::InvalidParameter(format!(
                "replicate_channel requires a 1-channel image, got {}",
                self.channel_count()
            )));
        }
        if copies == 0 {
            return Err(Error::InvalidParameter("copies must be >= 1".into()));
        }
        let base = &self.planes[0];
        let names = (0..copies)
            .map(|i| {
                if copies == 1 {
                    self.channel_names[0].clone()
                } else {
                    format!("{}{}", self.channel_names[0], i)
                }
            })
            .collect();
        let planes = vec![base.clone(); copies];
        Self::new(self.width, self.height, self.bit_depth, names, planes)
    }

    /// Single-channel image equal to the indexed plane.
    pub fn take_channel(&self, index: usize) -> Result<Self> {
        if index >= self.channel_count() {
            return Err(Error::ChannelIndexOutOfRange {
                index,
                count: self.channel_count(),
            });
        }
        Self::new(
            self.width,
            self.height,
            self.bit_depth,
            vec![self.channel_names[index].clone()],
            vec![self.planes[index].clone()],
        )
    }

    /// Rectangular crop; the window must lie inside the image.
    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x + width > self.width || y + height > self.height {
            return Err(Error::InvalidParameter(format!(
                "crop {width}x{height}+{x}+{y} outside image {}x{}",
                self.width, self.height
            )));
        }
        let planes = self
            .planes
            .iter()
            .map(|plane| {
                let mut out = Vec::with_capacity(width * height);
                for row in y..y + height {
                    out.extend_from_slice(&plane[row * self.width + x..row * self.width + x + width]);
                }
                out
            })
            .collect();
        Self::new(width, height, self.bit_depth, self.channel_names.clone(), planes)
    }

    /// Rebuild with new channel names, keeping pixels.
    pub fn with_channel_names(&self, names: Vec<String>) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.bit_depth,
            names,
            self.planes.clone(),
        )
    }

    /// One plane as f64 in [0, 1].
    pub fn plane_unit_f64(&self, index: usize) -> Vec<f64> {
        let max = f64::from(self.bit_depth.max_value());
        self.planes[index].iter().map(|&v| f64::from(v) / max).collect()
    }

    /// All planes as f64 in [0, 1].
    pub fn planes_unit_f64(&self) -> Vec<Vec<f64>> {
        (0..self.channel_count()).map(|i| self.plane_unit_f64(i)).collect()
    }

    /// Quantize unit-range f64 planes back to integer samples with
    /// round-half-to-even, clamping to [0, max].
    pub fn from_unit_f64(
        width: usize,
        height: usize,
        bit_depth: BitDepth,
        channel_names: Vec<String>,
        planes: &[Vec<f64>],
    ) -> Result<Self> {
        let max = f64::from(bit_depth.max_value());
        let quantized = planes
            .iter()
            .map(|p| {
                p.iter()
                    .map(|&v| (v * max).round_ties_even().clamp(0.0, max) as u16)
                    .collect()
            })
            .collect();
        Self::new(width, height, bit_depth, channel_names, quantized)
    }
}

/// Quantize one unit-range value to the given depth with round-half-to-even.
pub fn quantize_unit(v: f64, bit_depth: BitDepth) -> u16 {
    let max = f64::from(bit_depth.max_value());
    (v * max).round_ties_even().clamp(0.0, max) as u16
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgbnir_4x4() -> MultiChannelImage {
        let planes: Vec<Vec<u16>> = (0..4u16)
            .map(|c| (0..16u16).map(|i| c * 100 + i).collect())
            .collect();
        MultiChannelImage::new(
            4,
            4,
            BitDepth::Sixteen,
            vec!["R".into(), "G".into(), "B".into(), "NIR".into()],
            planes,
        )
        .unwrap()
    }

    #[test]
    fn new_rejects_bad_plane_size() {
        let err = MultiChannelImage::new(
            2,
            2,
            BitDepth::Eight,
            vec!["L".into()],
            vec![vec![0; 3]],
        );
        assert!(err.is_err());
    }

    #[test]
    fn new_rejects_out_of_range_samples() {
        let err = MultiChannelImage::new(
            1,
            1,
            BitDepth::Eight,
            vec!["L".into()],
            vec![vec![256]],
        );
        assert!(err.is_err());
    }

    #[test]
    fn new_rejects_duplicate_names() {
        let err = MultiChannelImage::new(
            1,
            1,
            BitDepth::Eight,
            vec!["L".into(), "L".into()],
            vec![vec![0], vec![0]],
        );
        assert!(err.is_err());
    }

    #[test]
    fn extract_all_channels_is_identity() {
        let img = rgbnir_4x4();
        let group = ChannelGroup::new(
            "all",
            vec!["R".into(), "G".into(), "B".into(), "NIR".into()],
        )
        .unwrap();
        assert_eq!(img.extract_group(&group).unwrap(), img);
    }

    #[test]
    fn extract_nir_is_projection() {
        let img = rgbnir_4x4();
        let nir = img.extract_group(&ChannelGroup::nir()).unwrap();
        assert_eq!(nir.channel_count(), 1);
        assert_eq!(nir.plane(0), img.plane(3));
    }

    #[test]
    fn extract_reorders_planes() {
        let img = rgbnir_4x4();
        let br = img
            .extract_group(&ChannelGroup::new("br", vec!["B".into(), "R".into()]).unwrap())
            .unwrap();
        assert_eq!(br.plane(0), img.plane(2));
        assert_eq!(br.plane(1), img.plane(0));
        assert_eq!(br.channel_names(), ["B".to_string(), "R".to_string()]);
    }

    #[test]
    fn extract_unknown_channel_errors() {
        let img = rgbnir_4x4();
        let group = ChannelGroup::new("x", vec!["Q".into()]).unwrap();
        assert!(matches!(
            img.extract_group(&group),
            Err(Error::UnknownChannel(_))
        ));
    }

    #[test]
    fn replicate_one_copy_is_identity_pixels() {
        let img = rgbnir_4x4().take_channel(3).unwrap();
        let rep = img.replicate_channel(1).unwrap();
        assert_eq!(rep.plane(0), img.plane(0));
        assert_eq!(rep.channel_count(), 1);
    }

    #[test]
    fn replicate_three_copies() {
        let nir = rgbnir_4x4().take_channel(3).unwrap();
        let rep = nir.replicate_channel(3).unwrap();
        assert_eq!(rep.channel_count(), 3);
        for i in 0..3 {
            assert_eq!(rep.plane(i), nir.plane(0));
        }
    }

    #[test]
    fn replicate_rejects_multichannel() {
        assert!(rgbnir_4x4().replicate_channel(3).is_err());
    }

    #[test]
    fn take_channel_inverts_replicate() {
        let nir = rgbnir_4x4().take_channel(3).unwrap();
        let rep = nir.replicate_channel(3).unwrap();
        for k in 0..3 {
            assert_eq!(rep.take_channel(k).unwrap().plane(0), nir.plane(0));
        }
    }

    #[test]
    fn take_channel_middle_plane() {
        let img = rgbnir_4x4();
        let g = img.take_channel(1).unwrap();
        // manual indexing check
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(g.sample(0, x, y), img.sample(1, x, y));
            }
        }
    }

    #[test]
    fn take_channel_out_of_range() {
        assert!(rgbnir_4x4().take_channel(4).is_err());
    }

    #[test]
    fn quantize_rounds_half_to_even() {
        // 0.5 in 8-bit units: 127.5 -> 128? no: ties-even rounds 127.5 to 128 (even)
        assert_eq!(quantize_unit(127.5 / 255.0, BitDepth::Eight), 128);
        assert_eq!(quantize_unit(126.5 / 255.0, BitDepth::Eight), 126);
        assert_eq!(quantize_unit(-0.2, BitDepth::Eight), 0);
        assert_eq!(quantize_unit(1.2, BitDepth::Eight), 255);
    }
}
