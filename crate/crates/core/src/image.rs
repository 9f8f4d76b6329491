//! Dense float rasters in [0,1] plus PNG I/O, cropping and augmentation.
//!
//! `ImageRGB` / `ImageGray` are the currency of every other module. Values are
//! f64 so that prior computations and metric oracles keep full precision;
//! quantization only happens at the PNG boundary.

use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

/// 3-channel raster, shape (height, width, 3), channel order R,G,B, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRGB {
    data: Array3<f64>,
}

/// Single-channel raster, shape (height, width), values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    data: Array2<f64>,
}

fn check_range(values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        if !v.is_finite() {
            return Err(CoreError::Data("non-finite raster value".into()));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(CoreError::Data(format!("raster value {v} outside [0,1]")));
        }
    }
    Ok(())
}

impl ImageRGB {
    /// Validates finiteness, range and non-empty dimensions.
    pub fn from_array(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(CoreError::Dimension("empty image".into()));
        }
        if c != 3 {
            return Err(CoreError::Dimension(format!("expected 3 channels, got {c}")));
        }
        check_range(data.iter().copied())?;
        Ok(Self { data })
    }

    /// Clamps every element into [0,1] before wrapping. Non-finite values are an error.
    pub fn from_array_clamped(mut data: Array3<f64>) -> Result<Self> {
        for v in data.iter_mut() {
            if !v.is_finite() {
                return Err(CoreError::Data("non-finite raster value".into()));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Self::from_array(data)
    }

    pub fn constant(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        let mut data = Array3::zeros((height, width, 3));
        for c in 0..3 {
            data.index_axis_mut(Axis(2), c).fill(rgb[c]);
        }
        Self::from_array(data)
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array3<f64> {
        self.data
    }

    /// Per-pixel channel mean.
    pub fn luminance(&self) -> ImageGray {
        let lum = self.data.map_axis(Axis(2), |px| (px[0] + px[1] + px[2]) / 3.0);
        ImageGray { data: lum }
    }

    pub fn crop(&self, top: usize, left: usize, size: usize) -> Result<Self> {
        if top + size > self.height() || left + size > self.width() {
            return Err(CoreError::Dimension(format!(
                "crop {size}x{size} at ({top},{left}) exceeds {}x{}",
                self.height(),
                self.width()
            )));
        }
        let view = self
            .data
            .slice(ndarray::s![top..top + size, left..left + size, ..]);
        Ok(Self { data: view.to_owned() })
    }
}

impl ImageGray {
    pub fn from_array(data: Array2<f64>) -> Result<Self> {
        let (h, w) = data.dim();
        if h == 0 || w == 0 {
            return Err(CoreError::Dimension("empty image".into()));
        }
        check_range(data.iter().copied())?;
        Ok(Self { data })
    }

    pub fn from_array_clamped(mut data: Array2<f64>) -> Result<Self> {
        for v in data.iter_mut() {
            if !v.is_finite() {
                return Err(CoreError::Data("non-finite raster value".into()));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Self::from_array(data)
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::from_array(Array2::from_elem((height, width), value))
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.mean().unwrap_or(0.0)
    }

    /// Replicates the single channel into an RGB raster (debug dumps).
    pub fn to_rgb(&self) -> ImageRGB {
        let (h, w) = self.data.dim();
        let mut out = Array3::zeros((h, w, 3));
        for c in 0..3 {
            out.index_axis_mut(Axis(2), c).assign(&self.data);
        }
        ImageRGB { data: out }
    }
}

/// Decodes an 8-bit PNG into an [0,1] float raster (v / 255 per channel).
pub fn load_image(path: &Path) -> Result<ImageRGB> {
    if !path.exists() {
        return Err(CoreError::NotFound(path.to_path_buf()));
    }
    let decoded = image::open(path).map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = Array3::zeros((h, w, 3));
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..3 {
            data[(y as usize, x as usize, c)] = px[c] as f64 / 255.0;
        }
    }
    ImageRGB::from_array(data)
}

/// Writes an 8-bit PNG; each value is rounded to the nearest of the 256 levels,
/// so a save/load round trip moves any value by at most 1/510.
pub fn save_image(img: &ImageRGB, path: &Path) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                (img.data[(y, x, 0)] * 255.0).round() as u8,
                (img.data[(y, x, 1)] * 255.0).round() as u8,
                (img.data[(y, x, 2)] * 255.0).round() as u8,
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => CoreError::Io(io),
            other => CoreError::Format(format!("{}: {other}", path.display())),
        })
}

/// Draws `count` square crop offsets from `seed` and extracts them.
/// Crops may overlap; the same seed always yields the same list.
pub fn random_overlap_crops(
    img: &ImageRGB,
    crop: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<ImageRGB>> {
    let offsets = crop_offsets(img.height(), img.width(), crop, count, seed)?;
    offsets
        .into_iter()
        .map(|(top, left)| img.crop(top, left, crop))
        .collect()
}

/// Offset list underlying [`random_overlap_crops`]; exposed so paired images
/// can be cropped at identical positions.
pub fn crop_offsets(
    height: usize,
    width: usize,
    crop: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if crop == 0 || count == 0 {
        return Err(CoreError::Parameter("crop and count must be >= 1".into()));
    }
    if crop > height || crop > width {
        return Err(CoreError::Dimension(format!(
            "crop {crop} larger than image {height}x{width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let top = rng.gen_range(0..=height - crop);
        let left = rng.gen_range(0..=width - crop);
        out.push((top, left));
    }
    Ok(out)
}

/// One element of the 8-element dihedral group: quarter turns then optional
/// horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dihedral {
    pub quarter_turns: u8,
    pub flip: bool,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral { quarter_turns: 0, flip: false };

    /// Samples rotation and flip independently and uniformly.
    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dihedral {
            quarter_turns: rng.gen_range(0..4u8),
            flip: rng.gen_bool(0.5),
        }
    }

    pub fn apply_rgb(&self, img: &ImageRGB) -> ImageRGB {
        let mut data = img.data.clone();
        for _ in 0..self.quarter_turns % 4 {
            data = rot90_once(&data);
        }
        if self.flip {
            data = flip_horizontal(&data);
        }
        ImageRGB { data }
    }
}

// Counter-clockwise quarter turn: (r, c) -> (w-1-c, r).
fn rot90_once(data: &Array3<f64>) -> Array3<f64> {
    let (h, w, ch) = data.dim();
    let mut out = Array3::zeros((w, h, ch));
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                out[(w - 1 - c, r, k)] = data[(r, c, k)];
            }
        }
    }
    out
}

fn flip_horizontal(data: &Array3<f64>) -> Array3<f64> {
    let (h, w, ch) = data.dim();
    let mut out = Array3::zeros((h, w, ch));
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                out[(r, w - 1 - c, k)] = data[(r, c, k)];
            }
        }
    }
    out
}

/// Applies one uniformly sampled dihedral transform to `img` and, when given,
/// the pixel-aligned identical transform to `pair`.
pub fn augment(
    img: &ImageRGB,
    pair: Option<&ImageRGB>,
    seed: u64,
) -> Result<(ImageRGB, Option<ImageRGB>)> {
    if let Some(p) = pair {
        if p.height() != img.height() || p.width() != img.width() {
            return Err(CoreError::Dimension(format!(
                "augment pair {}x{} vs {}x{}",
                p.height(),
                p.width(),
                img.height(),
                img.width()
            )));
        }
    }
    let t = Dihedral::sample(seed);
    Ok((t.apply_rgb(img), pair.map(|p| t.apply_rgb(p))))
}
