//! Separable Gaussian blur with mirror boundaries.

use super::Tensor;
use crate::error::{Error, Result};

/// Normalized 1-D Gaussian sampled at integer offsets `-radius..=radius`,
/// truncated at `radius = ceil(3 sigma)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    sigma: f64,
    radius: usize,
    weights: Vec<f32>,
}

impl BlurKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "blur sigma must be finite and >= 0, got {sigma}"
            )));
        }
        if sigma == 0.0 {
            return Ok(BlurKernel {
                sigma,
                radius: 0,
                weights: vec![1.0],
            });
        }
        let radius = (3.0 * sigma).ceil() as usize;
        let raw: Vec<f64> = (-(radius as i64)..=radius as i64)
            .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(BlurKernel {
            sigma,
            radius,
            weights: raw.iter().map(|w| (w / total) as f32).collect(),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }
}

/// Mirror an out-of-range index back into `0..n` without repeating the edge
/// sample (`-1 -> 1`, `n -> n - 2`).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn blur_lines(
    src: &[f32],
    dst: &mut [f32],
    lines: usize,
    len: usize,
    stride: usize,
    line_step: usize,
    kernel: &BlurKernel,
) {
    let r = kernel.radius as isize;
    for line in 0..lines {
        let base = line * line_step;
        for i in 0..len {
            let mut acc = 0.0f32;
            for (t, &wt) in kernel.weights.iter().enumerate() {
                let j = reflect(i as isize + t as isize - r, len);
                acc += wt * src[base + j * stride];
            }
            dst[base + i * stride] = acc;
        }
    }
}

/// Blurs every channel of a `(C, H, W)` tensor independently. `sigma == 0`
/// returns the input unchanged.
pub fn gaussian_blur(input: &Tensor, sigma: f64) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    let kernel = BlurKernel::new(sigma)?;
    if kernel.radius == 0 {
        return Ok(input.clone());
    }
    let mut tmp = vec![0.0f32; input.len()];
    let mut out = vec![0.0f32; input.len()];
    // Rows: c*h lines of length w, contiguous.
    blur_lines(input.data(), &mut tmp, c * h, w, 1, w, &kernel);
    // Columns: each channel has w lines of length h with stride w.
    for ci in 0..c {
        let off = ci * h * w;
        blur_lines(
            &tmp[off..off + h * w],
            &mut out[off..off + h * w],
            w,
            h,
            w,
            1,
            &kernel,
        );
    }
    Tensor::new(input.shape().to_vec(), out)
}
