//! Cross-channel local response normalization.
//!
//! `b_c = a_c / (k + alpha/n * sum_{c' in window(c)} a_{c'}^2)^beta`, with a
//! window of `n` channels centered on `c` and truncated at the edges.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    pub size: usize,
    pub k: f32,
    pub alpha: f32,
    pub beta: f32,
}

impl LrnParams {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "lrn size must be odd and >= 1, got {}",
                self.size
            )));
        }
        if !(self.k > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lrn k must be > 0, got {}",
                self.k
            )));
        }
        Ok(())
    }

    fn window(&self, c: usize, channels: usize) -> std::ops::Range<usize> {
        let half = self.size / 2;
        c.saturating_sub(half)..(c + half + 1).min(channels)
    }
}

/// Per-element denominators base `k + alpha/n * sum a^2`, laid out like the input.
fn scales(input: &Tensor, p: &LrnParams) -> Result<Vec<f32>> {
    let (c, h, w) = input.dims3()?;
    let plane = h * w;
    let a = input.data();
    let coeff = p.alpha / p.size as f32;
    let mut out = vec![0.0f32; a.len()];
    for ci in 0..c {
        for j in p.window(ci, c) {
            for i in 0..plane {
                let v = a[j * plane + i];
                out[ci * plane + i] += v * v;
            }
        }
    }
    out.iter_mut().for_each(|s| *s = p.k + coeff * *s);
    Ok(out)
}

pub fn lrn(input: &Tensor, params: &LrnParams) -> Result<Tensor> {
    params.validate()?;
    let s = scales(input, params)?;
    let data = input
        .data()
        .iter()
        .zip(&s)
        .map(|(&a, &s)| a * s.powf(-params.beta))
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Exact input diff of [`lrn`]:
/// `da_j = g_j s_j^-beta - (2 alpha beta / n) a_j sum_{c : j in window(c)} g_c a_c s_c^(-beta-1)`.
pub fn lrn_backward(input: &Tensor, out_diff: &Tensor, params: &LrnParams) -> Result<Tensor> {
    params.validate()?;
    out_diff.expect_shape(input.shape(), "lrn backward diff")?;
    let (c, h, w) = input.dims3()?;
    let plane = h * w;
    let s = scales(input, params)?;
    let a = input.data();
    let g = out_diff.data();
    // t_c = g_c a_c s_c^(-beta-1)
    let t: Vec<f32> = (0..a.len())
        .map(|i| g[i] * a[i] * s[i].powf(-params.beta - 1.0))
        .collect();
    let coeff = 2.0 * params.alpha * params.beta / params.size as f32;
    let mut dx = vec![0.0f32; a.len()];
    for cj in 0..c {
        // The window is symmetric: j in window(c) iff c in window(j).
        for ci in params.window(cj, c) {
            for i in 0..plane {
                dx[cj * plane + i] -= t[ci * plane + i];
            }
        }
        for i in 0..plane {
            let idx = cj * plane + i;
            dx[idx] = g[idx] * s[idx].powf(-params.beta) + coeff * a[idx] * dx[idx];
        }
    }
    Tensor::new(input.shape().to_vec(), dx)
}
