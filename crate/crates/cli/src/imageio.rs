//! PNG ingestion and emission.

use std::path::{Path, PathBuf};

use ccpl_core::fod::{FodChannel, FodMap};
use ccpl_core::stain::intensity_to_od;
use ccpl_core::{RgbImage, RgbRaster};
use image::{ColorType, ExtendedColorType, ImageBuffer, ImageFormat, ImageReader, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, HarnessError, Result};

pub fn read_rgb_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let decode = |source| HarnessError::Decode {
        path: path.to_path_buf(),
        source,
    };
    let reader = ImageReader::open(path)
        .map_err(io_at(path))?
        .with_guessed_format()
        .map_err(io_at(path))?;
    match reader.format() {
        Some(ImageFormat::Png) => {}
        other => {
            return Err(HarnessError::UnsupportedImage {
                path: path.to_path_buf(),
                found: other.map_or("an unrecognised format".into(), |f| format!("{f:?}")),
            })
        }
    }
    let img = reader.decode().map_err(decode)?;
    if img.color() != ColorType::Rgb8 {
        return Err(HarnessError::UnsupportedImage {
            path: path.to_path_buf(),
            found: format!("a {:?} PNG", img.color()),
        });
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(RgbImage::new(w, h, img.into_bytes())?)
}

pub fn write_rgb_png(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    image::save_buffer_with_format(
        path,
        img.pixels(),
        img.width() as u32,
        img.height() as u32,
        ExtendedColorType::Rgb8,
        ImageFormat::Png,
    )
    .map_err(|source| HarnessError::Decode {
        path: path.to_path_buf(),
        source,
    })
}

/// Sidecar describing how a 16-bit FOD PNG maps back to FOD values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FodSidecar {
    pub channel: FodChannel,
    #[serde(rename = "T")]
    pub threshold: f64,
    pub alpha: f64,
    /// stored = round(fod · scale)
    pub scale: f64,
}

/// Largest power of ten that keeps the brightest possible FOD within 16 bits.
pub fn fod_scale(exponent: f64, i0: f64) -> f64 {
    let max = intensity_to_od(0.0, i0).powf(exponent).max(1e-12);
    let mut scale = 10f64.powi((f64::from(u16::MAX) / max).log10().floor() as i32);
    while scale * max > f64::from(u16::MAX) {
        scale /= 10.0;
    }
    scale
}

pub fn sidecar_path(png: &Path) -> PathBuf {
    let mut s = png.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `fod` as a 16-bit grayscale PNG plus its JSON sidecar.
pub fn write_fod_png(path: impl AsRef<Path>, fod: &FodMap, scale: f64) -> Result<FodSidecar> {
    let path = path.as_ref();
    let data: Vec<u16> = fod
        .values
        .iter()
        .map(|v| (v * scale).round().clamp(0.0, f64::from(u16::MAX)) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(fod.width as u32, fod.height as u32, data)
            .expect("buffer length matches dimensions");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| HarnessError::Decode {
            path: path.to_path_buf(),
            source,
        })?;
    let sidecar = FodSidecar {
        channel: fod.params.channel,
        threshold: fod.params.threshold,
        alpha: fod.params.exponent,
        scale,
    };
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(&sidecar)?).map_err(io_at(side))?;
    Ok(sidecar)
}

/// Non-hidden regular files directly inside `dir`, sorted by name.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_at(dir))? {
        let entry = entry.map_err(io_at(dir))?;
        let Ok(name) = entry.file_name().into_string() else {
            log::warn!("skipping non-UTF-8 file name in {}", dir.display());
            continue;
        };
        if name.starts_with('.') || !entry.path().is_file() {
            continue;
        }
        names.push(name);
    }
    names.sort();
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let img = RgbImage::from_fn(5, 3, |x, y| [x as u8 * 40, y as u8 * 90, 7]);
        write_rgb_png(&p, &img).unwrap();
        assert_eq!(read_rgb_png(&p).unwrap(), img);
    }

    #[test]
    fn rejects_other_layouts_and_formats() {
        let dir = tempfile::tempdir().unwrap();
        let rgba = dir.path().join("rgba.png");
        image::save_buffer(&rgba, &[0u8; 16], 2, 2, ExtendedColorType::Rgba8).unwrap();
        let err = read_rgb_png(&rgba).unwrap_err();
        assert!(matches!(err, HarnessError::UnsupportedImage { .. }), "{err}");

        let jpeg = dir.path().join("photo.jpg");
        std::fs::write(&jpeg, [0xFF, 0xD8, 0xFF, 0xE0, 0, 16, b'J', b'F', b'I', b'F', 0]).unwrap();
        assert!(matches!(
            read_rgb_png(&jpeg).unwrap_err(),
            HarnessError::UnsupportedImage { .. }
        ));

        let garbage = dir.path().join("notes.png");
        std::fs::write(&garbage, "not an image").unwrap();
        assert!(matches!(read_rgb_png(&garbage).unwrap_err(), HarnessError::Decode { .. }));
        assert!(matches!(
            read_rgb_png(dir.path().join("missing.png")).unwrap_err(),
            HarnessError::Io { .. }
        ));
    }

    #[test]
    fn default_fod_scale() {
        // brightest FOD is log10(510)^1.8 ≈ 6.0
        assert_eq!(fod_scale(1.8, 255.0), 10_000.0);
        assert_eq!(fod_scale(1.0, 255.0), 10_000.0);
        assert_eq!(fod_scale(3.0, 255.0), 1_000.0);
    }

    #[test]
    fn fod_png_and_sidecar() {
        use ccpl_core::fod::FodParams;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fod.png");
        let params = FodParams::default_for(FodChannel::D);
        let fod = FodMap::new(2, 1, vec![0.0, 1.23456], params).unwrap();
        let side = write_fod_png(&p, &fod, 10_000.0).unwrap();
        let back = image::open(&p).unwrap().into_luma16();
        assert_eq!(back.into_raw(), vec![0, 12346]);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
        assert_eq!(json["channel"], "D");
        assert_eq!(json["T"], 0.15);
        assert_eq!(json["alpha"], 1.8);
        assert_eq!(json["scale"], 10_000.0);
        assert_eq!(side.scale, 10_000.0);
    }
}
