//! Lossless raster I/O: single PNGs and sidecar-manifest directories.
//!
//! PNG is the sole pixel container. Images whose channel count fits a native
//! PNG layout can be saved to a `.png` path; anything else is saved as a
//! directory of single-channel PNGs plus a `channels.json` sidecar naming
//! the channels and their order.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BitDepth, MultiChannelImage};

/// Name of the sidecar manifest inside a multi-band image directory.
pub const SIDECAR_MANIFEST: &str = "channels.json";

#[derive(Debug, Serialize, Deserialize)]
struct SidecarManifest {
    width: usize,
    height: usize,
    bit_depth: u8,
    channels: Vec<SidecarChannel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarChannel {
    name: String,
    file: String,
}

/// Load an image from a PNG file or a sidecar-manifest directory.
pub fn load_raster(path: impl AsRef<Path>) -> Result<MultiChannelImage> {
    let path = path.as_ref();
    if path.is_dir() {
        return load_sidecar(path);
    }
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    load_png(path)
}

/// Save an image. A `.png` path holds 1-4 channels natively (gray, gray+A,
/// RGB, RGBA); any other path is treated as a sidecar directory.
pub fn save_raster(img: &MultiChannelImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        if img.channel_count() > 4 {
            return Err(Error::InvalidParameter(format!(
                "{} channels do not fit a single PNG; use a directory path",
                img.channel_count()
            )));
        }
        save_png(img, path)
    } else {
        save_sidecar(img, path)
    }
}

fn default_channel_names(color: png::ColorType) -> Vec<String> {
    let names: &[&str] = match color {
        png::ColorType::Grayscale => &["L"],
        png::ColorType::GrayscaleAlpha => &["L", "A"],
        png::ColorType::Rgb => &["R", "G", "B"],
        png::ColorType::Rgba => &["R", "G", "B", "A"],
        png::ColorType::Indexed => &[],
    };
    names.iter().map(|s| s.to_string()).collect()
}

fn load_png(path: &Path) -> Result<MultiChannelImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(file);
    let mut reader = decoder.read_info().map_err(|e| Error::Png {
        path: path.into(),
        detail: e.to_string(),
    })?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png {
        path: path.into(),
        detail: e.to_string(),
    })?;
    let bytes = &buf[..info.buffer_size()];

    let bit_depth = match info.bit_depth {
        png::BitDepth::Eight => BitDepth::Eight,
        png::BitDepth::Sixteen => BitDepth::Sixteen,
        other => {
            return Err(Error::InvalidImage(format!(
                "unsupported PNG bit depth {other:?} in {}",
                path.display()
            )))
        }
    };
    if info.color_type == png::ColorType::Indexed {
        return Err(Error::InvalidImage(format!(
            "indexed PNG not supported: {}",
            path.display()
        )));
    }

    let width = info.width as usize;
    let height = info.height as usize;
    let n_channels = info.color_type.samples();
    let names = default_channel_names(info.color_type);
    let mut planes = vec![Vec::with_capacity(width * height); n_channels];

    match bit_depth {
        BitDepth::Eight => {
            for chunk in bytes.chunks_exact(n_channels) {
                for (c, &v) in chunk.iter().enumerate() {
                    planes[c].push(u16::from(v));
                }
            }
        }
        BitDepth::Sixteen => {
            // PNG stores 16-bit samples big-endian
            for chunk in bytes.chunks_exact(2 * n_channels) {
                for c in 0..n_channels {
                    planes[c].push(u16::from_be_bytes([chunk[2 * c], chunk[2 * c + 1]]));
                }
            }
        }
    }

    MultiChannelImage::new(width, height, bit_depth, names, planes)
}

fn save_png(img: &MultiChannelImage, path: &Path) -> Result<()> {
    let color = match img.channel_count() {
        1 => png::ColorType::Grayscale,
        2 => png::ColorType::GrayscaleAlpha,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        n => {
            return Err(Error::InvalidParameter(format!(
                "cannot encode {n} channels in one PNG"
            )))
        }
    };
    let depth = match img.bit_depth() {
        BitDepth::Eight => png::BitDepth::Eight,
        BitDepth::Sixteen => png::BitDepth::Sixteen,
    };

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        img.width() as u32,
        img.height() as u32,
    );
    encoder.set_color(color);
    encoder.set_depth(depth);
    let mut writer = encoder.write_header().map_err(|e| Error::Png {
        path: path.into(),
        detail: e.to_string(),
    })?;

    let n = img.channel_count();
    let pixels = img.width() * img.height();
    let data: Vec<u8> = match img.bit_depth() {
        BitDepth::Eight => {
            let mut out = Vec::with_capacity(pixels * n);
            for i in 0..pixels {
                for c in 0..n {
                    out.push(img.plane(c)[i] as u8);
                }
            }
            out
        }
        BitDepth::Sixteen => {
            let mut out = Vec::with_capacity(pixels * n * 2);
            for i in 0..pixels {
                for c in 0..n {
                    out.extend_from_slice(&img.plane(c)[i].to_be_bytes());
                }
            }
            out
        }
    };
    writer.write_image_data(&data).map_err(|e| Error::Png {
        path: path.into(),
        detail: e.to_string(),
    })?;
    Ok(())
}

fn load_sidecar(dir: &Path) -> Result<MultiChannelImage> {
    let manifest_path = dir.join(SIDECAR_MANIFEST);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: SidecarManifest =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", manifest_path.display())))?;
    let bit_depth = BitDepth::from_bits(manifest.bit_depth)?;

    let mut names = Vec::with_capacity(manifest.channels.len());
    let mut planes = Vec::with_capacity(manifest.channels.len());
    for ch in &manifest.channels {
        let plane_img = load_png(&dir.join(&ch.file))?;
        if plane_img.channel_count() != 1 {
            return Err(Error::InvalidImage(format!(
                "sidecar plane {} is not single-channel",
                ch.file
            )));
        }
        if plane_img.width() != manifest.width
            || plane_img.height() != manifest.height
            || plane_img.bit_depth() != bit_depth
        {
            return Err(Error::ShapeMismatch(format!(
                "sidecar plane {} is {}x{} ({}-bit), manifest says {}x{} ({}-bit)",
                ch.file,
                plane_img.width(),
                plane_img.height(),
                plane_img.bit_depth().bits(),
                manifest.width,
                manifest.height,
                manifest.bit_depth,
            )));
        }
        names.push(ch.name.clone());
        planes.push(plane_img.planes()[0].clone());
    }
    MultiChannelImage::new(manifest.width, manifest.height, bit_depth, names, planes)
}

fn save_sidecar(img: &MultiChannelImage, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut channels = Vec::with_capacity(img.channel_count());
    for (i, name) in img.channel_names().iter().enumerate() {
        let file = format!("{name}.png");
        save_png(&img.take_channel(i)?, &dir.join(&file))?;
        channels.push(SidecarChannel {
            name: name.clone(),
            file,
        });
    }
    let manifest = SidecarManifest {
        width: img.width(),
        height: img.height(),
        bit_depth: img.bit_depth().bits(),
        channels,
    };
    let manifest_path = dir.join(SIDECAR_MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn png_roundtrip_8bit_gray() {
        let dir = tmpdir();
        let img = MultiChannelImage::new(
            3,
            2,
            BitDepth::Eight,
            vec!["L".into()],
            vec![vec![0, 10, 255, 128, 7, 99]],
        )
        .unwrap();
        let path = dir.path().join("g.png");
        save_raster(&img, &path).unwrap();
        let back = load_raster(&path).unwrap();
        assert_eq!(back.planes(), img.planes());
        assert_eq!(back.bit_depth(), BitDepth::Eight);
    }

    #[test]
    fn png_roundtrip_16bit_rgb() {
        let dir = tmpdir();
        let planes: Vec<Vec<u16>> = (0..3)
            .map(|c| (0..6).map(|i| (c * 20000 + i * 3001) as u16).collect())
            .collect();
        let img =
            MultiChannelImage::new(2, 3, BitDepth::Sixteen, crate::raster::ChannelGroup::rgb().members, planes)
                .unwrap();
        let path = dir.path().join("rgb.png");
        save_raster(&img, &path).unwrap();
        let back = load_raster(&path).unwrap();
        assert_eq!(back.planes(), img.planes());
        assert_eq!(back.bit_depth(), BitDepth::Sixteen);
    }

    #[test]
    fn sidecar_roundtrip_4channel_16bit() {
        let dir = tmpdir();
        let planes: Vec<Vec<u16>> = (0..4)
            .map(|c| (0..16).map(|i| (c * 1000 + i * 17) as u16).collect())
            .collect();
        let img = MultiChannelImage::new(
            4,
            4,
            BitDepth::Sixteen,
            vec!["R".into(), "G".into(), "B".into(), "NIR".into()],
            planes,
        )
        .unwrap();
        let out = dir.path().join("scene");
        save_raster(&img, &out).unwrap();
        assert!(out.join(SIDECAR_MANIFEST).exists());
        assert!(out.join("NIR.png").exists());
        let back = load_raster(&out).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn missing_file_errors() {
        assert!(load_raster("/nonexistent/image.png").is_err());
    }

    #[test]
    fn sidecar_with_mismatched_plane_dims_errors() {
        let dir = tmpdir();
        let out = dir.path().join("scene");
        let img = MultiChannelImage::new(
            2,
            2,
            BitDepth::Eight,
            vec!["A".into(), "B".into(), "C".into(), "D".into(), "E".into()],
            vec![vec![0, 1, 2, 3]; 5],
        )
        .unwrap();
        save_raster(&img, &out).unwrap();
        // replace one plane with a different size
        let bad = MultiChannelImage::new(3, 3, BitDepth::Eight, vec!["L".into()], vec![vec![0; 9]])
            .unwrap();
        save_raster(&bad, out.join("B.png")).unwrap();
        let err = load_raster(&out).unwrap_err();
        assert!(matches!(err, crate::error::Error::ShapeMismatch(_)), "{err}");
    }

    #[test]
    fn loads_independent_encoder_fixture_bit_exact() {
        // gray16_3x2.png was produced by an independent PNG encoder (Pillow)
        // from the values below, including the max 16-bit sample.
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/gray16_3x2.png");
        let img = load_raster(path).unwrap();
        assert_eq!(img.width(), 3);
        assert_eq!(img.height(), 2);
        assert_eq!(img.bit_depth(), BitDepth::Sixteen);
        assert_eq!(img.plane(0), &[0, 1000, 65535, 32768, 257, 4660]);
    }

    #[test]
    fn loads_zero_fixture() {
        let path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/tests/fixtures/gray8_2x2_zeros.png"
        );
        let img = load_raster(path).unwrap();
        assert_eq!(img.channel_count(), 1);
        assert_eq!(img.bit_depth(), BitDepth::Eight);
        assert!(img.plane(0).iter().all(|&v| v == 0));
    }
}
