//! Turning tensors into viewable 8-bit images: per-tensor normalization,
//! whole-layer channel grids and optimized-image montages.

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regopt::OptRunResult;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplayNorm {
    /// Affine `[min, max] -> [0, 255]`.
    #[default]
    MinMax,
    /// `0 -> 128`, `-max|v| -> 0`, `+max|v| -> 255`; for signed diffs.
    Symmetric,
}

impl DisplayNorm {
    /// Gray level used for padding and empty cells.
    pub fn background(self) -> u8 {
        match self {
            DisplayNorm::MinMax => 0,
            DisplayNorm::Symmetric => 128,
        }
    }
}

impl std::str::FromStr for DisplayNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(DisplayNorm::MinMax),
            "symmetric" => Ok(DisplayNorm::Symmetric),
            other => Err(Error::InvalidArgument(format!(
                "unknown display mode `{other}` (minmax|symmetric)"
            ))),
        }
    }
}

fn round_half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Maps every value of `t` to a byte. Constant tensors map to 128.
pub fn normalize_for_display(t: &Tensor, mode: DisplayNorm) -> Result<Vec<u8>> {
    normalize_values(t.data(), mode)
}

fn normalize_values(values: &[f32], mode: DisplayNorm) -> Result<Vec<u8>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("tensor to display (NaN)".into()));
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(f64::from(v)), hi.max(f64::from(v)))
        });
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::NonFinite("tensor to display (infinite)".into()));
    }
    if min == max {
        return Ok(vec![128; values.len()]);
    }
    Ok(match mode {
        DisplayNorm::MinMax => values
            .iter()
            .map(|&v| round_half_up((f64::from(v) - min) / (max - min) * 255.0))
            .collect(),
        DisplayNorm::Symmetric => {
            let m = min.abs().max(max.abs());
            values
                .iter()
                .map(|&v| {
                    let v = f64::from(v) / m;
                    if v < 0.0 {
                        round_half_up(128.0 + 128.0 * v)
                    } else {
                        round_half_up(128.0 + 127.0 * v)
                    }
                })
                .collect()
        }
    })
}

/// Row-major placement of `count` equally sized cells on a near-square grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub cell_h: usize,
    pub cell_w: usize,
    pub pad: usize,
}

impl GridLayout {
    /// `cols = ceil(sqrt(count))`, `rows = ceil(count / cols)`.
    pub fn square(count: usize, cell_h: usize, cell_w: usize, pad: usize) -> Self {
        let mut cols = (count as f64).sqrt().ceil() as usize;
        // Guard against floating error on perfect squares.
        while cols * cols < count {
            cols += 1;
        }
        while cols > 1 && (cols - 1) * (cols - 1) >= count {
            cols -= 1;
        }
        Self::with_cols(count, cols.max(1), cell_h, cell_w, pad)
    }

    pub fn with_cols(count: usize, cols: usize, cell_h: usize, cell_w: usize, pad: usize) -> Self {
        let cols = cols.max(1);
        GridLayout {
            count,
            rows: count.div_ceil(cols).max(1),
            cols,
            cell_h,
            cell_w,
            pad,
        }
    }

    /// `(height, width)` in pixels.
    pub fn size(&self) -> (usize, usize) {
        (
            self.rows * self.cell_h + (self.rows - 1) * self.pad,
            self.cols * self.cell_w + (self.cols - 1) * self.pad,
        )
    }

    /// `(row, col)` of the cell holding item `index`.
    pub fn cell_of(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    /// Top-left pixel `(y, x)` of item `index`.
    pub fn origin(&self, index: usize) -> (usize, usize) {
        let (r, c) = self.cell_of(index);
        (r * (self.cell_h + self.pad), c * (self.cell_w + self.pad))
    }

    /// The item under pixel `(y, x)`; `None` on padding or an unused cell.
    pub fn item_at(&self, y: usize, x: usize) -> Option<usize> {
        let (sy, sx) = (self.cell_h + self.pad, self.cell_w + self.pad);
        let (r, ry) = (y / sy, y % sy);
        let (c, rx) = (x / sx, x % sx);
        if ry >= self.cell_h || rx >= self.cell_w || r >= self.rows || c >= self.cols {
            return None;
        }
        let index = r * self.cols + c;
        (index < self.count).then_some(index)
    }
}

/// Tiles the channels of a `(C, H, W)` activation tensor into one grayscale
/// image, channel `c` at grid cell `(c / cols, c % cols)`. The whole layer
/// shares one normalization so channels stay comparable.
pub fn tile_layer(acts: &Tensor, pad: usize, mode: DisplayNorm) -> Result<(GrayImage, GridLayout)> {
    let (c, h, w) = acts.dims3()?;
    let layout = GridLayout::square(c, h, w, pad);
    let bytes = normalize_for_display(acts, mode)?;
    let (gh, gw) = layout.size();
    let mut img = GrayImage::from_pixel(gw as u32, gh as u32, Luma([mode.background()]));
    for ci in 0..c {
        let (oy, ox) = layout.origin(ci);
        for y in 0..h {
            for x in 0..w {
                let v = bytes[(ci * h + y) * w + x];
                img.put_pixel((ox + x) as u32, (oy + y) as u32, Luma([v]));
            }
        }
    }
    Ok((img, layout))
}

/// A vector layer `(C, 1, 1)` as a one-row strip, each unit `cell` pixels
/// wide and `height` tall.
pub fn heat_strip(acts: &Tensor, cell: usize, height: usize, mode: DisplayNorm) -> Result<GrayImage> {
    let bytes = normalize_for_display(acts, mode)?;
    let cell = cell.max(1);
    Ok(GrayImage::from_fn(
        (bytes.len() * cell) as u32,
        height.max(1) as u32,
        |x, _| Luma([bytes[x as usize / cell]]),
    ))
}

/// Nearest-neighbour upscale.
pub fn enlarge(img: &GrayImage, factor: u32) -> GrayImage {
    let f = factor.max(1);
    GrayImage::from_fn(img.width() * f, img.height() * f, |x, y| *img.get_pixel(x / f, y / f))
}

/// `(C, H, W)` tensor with the mean added back, clamped to `[0, 255]`, as
/// RGB (single-channel images are replicated to gray).
pub fn to_rgb(image: &Tensor, mean: &Tensor) -> Result<RgbImage> {
    let (c, h, w) = image.dims3()?;
    if c != 1 && c != 3 {
        return Err(Error::Unsupported(format!("rendering {c}-channel images")));
    }
    let full = image.zip_map(mean, |a, m| (a + m).clamp(0.0, 255.0))?;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |ci: usize| full.at(if c == 1 { 0 } else { ci }, y as usize, x as usize).round() as u8;
        Rgb([px(0), px(1), px(2)])
    }))
}

/// Row-major montage of optimized images, mean re-added.
pub fn montage(results: &[OptRunResult], cols: usize, mean: &Tensor, pad: usize) -> Result<RgbImage> {
    let first = results
        .first()
        .ok_or_else(|| Error::Empty("montage of no results".into()))?;
    let shape = first.final_image.shape().to_vec();
    for r in results {
        if r.final_image.shape() != shape.as_slice() {
            return Err(Error::shape("montage image", shape.clone(), r.final_image.shape()));
        }
    }
    let images = results
        .iter()
        .map(|r| to_rgb(&r.final_image, mean))
        .collect::<Result<Vec<_>>>()?;
    Ok(montage_images(&images, cols, pad))
}

/// Lays out equally sized RGB images on a `cols`-wide grid, black background.
pub fn montage_images(images: &[RgbImage], cols: usize, pad: usize) -> RgbImage {
    let (h, w) = images
        .first()
        .map_or((1, 1), |i| (i.height() as usize, i.width() as usize));
    let layout = GridLayout::with_cols(images.len(), cols.min(images.len().max(1)), h, w, pad);
    let (gh, gw) = layout.size();
    let mut out = RgbImage::new(gw as u32, gh as u32);
    for (i, img) in images.iter().enumerate() {
        let (oy, ox) = layout.origin(i);
        image::imageops::replace(&mut out, img, ox as i64, oy as i64);
    }
    out
}

/// PNG encoding of a grayscale image.
pub fn png_bytes_gray(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}

/// PNG encoding of an RGB image.
pub fn png_bytes_rgb(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}
