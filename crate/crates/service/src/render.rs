use convis::vizdata::{
    enlarge, heat_strip, normalize_for_display, png_bytes_gray, png_bytes_rgb, tile_layer, DisplayNorm, GridLayout,
};
use convis::Tensor;
use image::{GrayImage, Rgb, RgbImage};
use serde::Serialize;

use crate::error::Result;

/// Smallest side, in pixels, of enlarged single-map renderings.
pub const PANEL_SIDE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChannelSummary {
    pub mean: f32,
    pub max: f32,
}

pub fn channel_summaries(t: &Tensor) -> Vec<ChannelSummary> {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    t.data()
        .chunks(h * w)
        .take(c)
        .map(|plane| ChannelSummary {
            mean: (plane.iter().map(|&v| f64::from(v)).sum::<f64>() / plane.len() as f64) as f32,
            max: plane.iter().copied().fold(f32::NEG_INFINITY, f32::max),
        })
        .collect()
}

/// Channel grid for spatial layers, a one-row heat strip for vectors.
pub fn layer_png(t: &Tensor, pad: usize, mode: DisplayNorm) -> Result<(Vec<u8>, Option<GridLayout>)> {
    let (c, h, w) = t.dims3()?;
    if h == 1 && w == 1 {
        let cell = (1024 / c).clamp(1, 16);
        Ok((png_bytes_gray(&heat_strip(t, cell, 32, mode)?)?, None))
    } else {
        let (img, layout) = tile_layer(t, pad, mode)?;
        Ok((png_bytes_gray(&img)?, Some(layout)))
    }
}

fn factor(h: usize, w: usize) -> u32 {
    PANEL_SIDE.div_ceil(h.max(w)).max(1) as u32
}

/// One channel map, min-max normalized and enlarged.
pub fn channel_png(t: &Tensor, channel: usize) -> Result<Vec<u8>> {
    let plane = t.channel(channel)?;
    let (_, h, w) = plane.dims3()?;
    let bytes = normalize_for_display(&plane, DisplayNorm::MinMax)?;
    let img = GrayImage::from_raw(w as u32, h as u32, bytes).expect("plane size");
    Ok(png_bytes_gray(&enlarge(&img, factor(h, w)))?)
}

/// Input-shaped signed diff, zero at mid-gray, all channels on one scale.
pub fn diff_png(t: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = t.dims3()?;
    let bytes = normalize_for_display(t, DisplayNorm::Symmetric)?;
    let plane = h * w;
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        let px = |ci: usize| bytes[if c >= 3 { ci } else { 0 } * plane + i];
        Rgb([px(0), px(1), px(2)])
    });
    let f = factor(h, w);
    let big = image::imageops::resize(&img, w as u32 * f, h as u32 * f, image::imageops::FilterType::Nearest);
    Ok(png_bytes_rgb(&big)?)
}
