//! The four image-space regularization operators. Each maps an image to a
//! slightly more regularized version of itself, and each is the identity
//! when its strength is 0.

use crate::error::{Error, Result};
use crate::tensor::{gaussian_blur, percentile_threshold, Tensor};

use super::RegParams;

/// `x <- (1 - theta_decay) x`.
pub fn reg_l2_decay(x: &Tensor, theta_decay: f64) -> Tensor {
    if theta_decay == 0.0 {
        return x.clone();
    }
    x.scale((1.0 - theta_decay) as f32)
}

/// Gaussian blur with `theta_b_width`, applied only on steps that are a
/// multiple of `theta_b_every` (never when it is 0).
pub fn reg_blur(x: &Tensor, params: &RegParams, step_index: usize) -> Result<Tensor> {
    let every = params.theta_b_every as usize;
    if every == 0 || !step_index.is_multiple_of(every) || params.theta_b_width == 0.0 {
        return Ok(x.clone());
    }
    gaussian_blur(x, params.theta_b_width)
}

/// Zeroes all channels of every spatial location whose value in `scores`
/// is at or below the `pct` percentile of all scores.
fn zero_locations(x: &Tensor, scores: &[f32], pct: f64) -> Result<Tensor> {
    let threshold = percentile_threshold(scores, pct)?;
    let (_, h, w) = x.dims3()?;
    let plane = h * w;
    let mut out = x.clone();
    for (p, &s) in scores.iter().enumerate() {
        if s <= threshold {
            out.data_mut()[p..].iter_mut().step_by(plane).for_each(|v| *v = 0.0);
        }
    }
    Ok(out)
}

/// Per-location L2 norm over channels.
pub fn pixel_norms(x: &Tensor) -> Result<Vec<f32>> {
    let (c, h, w) = x.dims3()?;
    let plane = h * w;
    let d = x.data();
    Ok((0..plane)
        .map(|p| (0..c).map(|ci| d[ci * plane + p].powi(2)).sum::<f32>().sqrt())
        .collect())
}

/// Per-location `|sum_c x * grad|`.
pub fn pixel_contributions(x: &Tensor, grad: &Tensor) -> Result<Vec<f32>> {
    let (c, h, w) = x.dims3()?;
    if grad.shape() != x.shape() {
        return Err(Error::shape("contribution gradient", x.shape(), grad.shape()));
    }
    let plane = h * w;
    let (xd, gd) = (x.data(), grad.data());
    Ok((0..plane)
        .map(|p| {
            (0..c)
                .map(|ci| xd[ci * plane + p] * gd[ci * plane + p])
                .sum::<f32>()
                .abs()
        })
        .collect())
}

/// Zeroes pixels with small norm. `theta_n_pct == 0` is a no-op.
pub fn reg_clip_norm(x: &Tensor, theta_n_pct: f64) -> Result<Tensor> {
    if theta_n_pct == 0.0 {
        return Ok(x.clone());
    }
    zero_locations(x, &pixel_norms(x)?, theta_n_pct)
}

/// Zeroes pixels with small linearized contribution to the activation.
/// `theta_c_pct == 0` is a no-op.
pub fn reg_clip_contribution(x: &Tensor, grad: &Tensor, theta_c_pct: f64) -> Result<Tensor> {
    let contributions = pixel_contributions(x, grad)?;
    if theta_c_pct == 0.0 {
        return Ok(x.clone());
    }
    zero_locations(x, &contributions, theta_c_pct)
}

/// Fraction of spatial locations where every channel is exactly zero.
pub fn zeroed_fraction(x: &Tensor) -> Result<f64> {
    let norms = pixel_norms(x)?;
    Ok(norms.iter().filter(|&&n| n == 0.0).count() as f64 / norms.len() as f64)
}
