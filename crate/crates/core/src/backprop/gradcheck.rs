//! Central-difference verification of [`backward`](super::backward).
//!
//! The differences are taken with a separate `f64` evaluator that shares no
//! kernels with the `f32` forward pass. It also records the piecewise-linear
//! "pattern" of the network (every ReLU sign and every max-pool winner); a
//! pixel whose `±ε` perturbation changes that pattern sits on a kink, and is
//! reported as non-differentiable instead of being scored.

use serde::{Deserialize, Serialize};

use super::{backward, BackwardMode};
use crate::error::{Error, Result};
use crate::net::{forward, LayerKind, Network, Site, UnitRef};
use crate::tensor::Tensor;

/// Pixels where both derivatives are below this magnitude are not scored.
pub const SMALL_GRADIENT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub unit: UnitRef,
    pub epsilon: f64,
    /// `max_j |g_j - d_j| / max(|g_j|, |d_j|)` over scored pixels.
    pub max_rel_error: f64,
    /// Flat input index where `max_rel_error` occurred.
    pub worst_index: Option<usize>,
    /// Pixels that were scored.
    pub checked: usize,
    /// Pixels skipped because both derivatives were below [`SMALL_GRADIENT`].
    pub skipped_small: usize,
    /// Pixels whose perturbation crossed a ReLU or max-pool kink.
    pub non_differentiable: Vec<usize>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares the gradient-mode backward pass against central differences
/// `(a(x + εe_j) - a(x - εe_j)) / 2ε` at every input element `j`.
pub fn finite_diff_check(
    net: &Network,
    x: &Tensor,
    unit: &UnitRef,
    epsilon: f64,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    let acts = forward(net, x)?;
    let analytic = backward(net, &acts, unit, BackwardMode::Gradient)?;

    let base: Vec<f64> = x.data().iter().map(|&v| f64::from(v)).collect();
    let (_, base_pattern) = reference_eval(net, &base, unit)?;

    let mut report = GradCheckReport {
        unit: unit.clone(),
        epsilon,
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        skipped_small: 0,
        non_differentiable: Vec::new(),
    };
    let mut probe = base.clone();
    for j in 0..base.len() {
        probe[j] = base[j] + epsilon;
        let (plus, plus_pattern) = reference_eval(net, &probe, unit)?;
        probe[j] = base[j] - epsilon;
        let (minus, minus_pattern) = reference_eval(net, &probe, unit)?;
        probe[j] = base[j];

        if plus_pattern != base_pattern || minus_pattern != base_pattern {
            report.non_differentiable.push(j);
            continue;
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let g = f64::from(analytic.data()[j]);
        let scale = g.abs().max(numeric.abs());
        if scale < SMALL_GRADIENT {
            report.skipped_small += 1;
            continue;
        }
        report.checked += 1;
        let rel = (g - numeric).abs() / scale;
        if rel > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst_index = Some(j);
        }
    }
    Ok(report)
}

/// Straight-line `f64` evaluation of `unit`, plus the kink pattern of every
/// layer up to it.
fn reference_eval(net: &Network, x: &[f64], unit: &UnitRef) -> Result<(f64, Vec<u32>)> {
    let top = net.layer_index(&unit.layer)?;
    let mut pattern = Vec::new();
    let [mut c, mut h, mut w] = net.input_shape();
    let mut a = x.to_vec();
    for i in 0..=top {
        let layer = &net.layers()[i];
        let [oc, oh, ow] = net.output_shape(i);
        a = match layer.kind {
            LayerKind::Conv {
                kernel, stride, pad, ..
            } => {
                let p = net.params(i).unwrap();
                let wt = p.weights.data();
                let mut out = vec![0.0f64; oc * oh * ow];
                for o in 0..oc {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = f64::from(p.bias[o]);
                            for ci in 0..c {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let iy = (oy * stride + ky) as isize - pad as isize;
                                        let ix = (ox * stride + kx) as isize - pad as isize;
                                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                            continue;
                                        }
                                        let wv = wt[((o * c + ci) * kernel + ky) * kernel + kx];
                                        acc += f64::from(wv)
                                            * a[(ci * h + iy as usize) * w + ix as usize];
                                    }
                                }
                            }
                            out[(o * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                out
            }
            LayerKind::Relu => a
                .iter()
                .map(|&v| {
                    pattern.push(u32::from(v > 0.0));
                    v.max(0.0)
                })
                .collect(),
            LayerKind::Maxpool { kernel, stride } => {
                let mut out = Vec::with_capacity(oc * oh * ow);
                for ci in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            let mut arg = 0u32;
                            for dy in 0..kernel {
                                for dx in 0..kernel {
                                    let v = a[(ci * h + oy * stride + dy) * w + ox * stride + dx];
                                    if v > best {
                                        best = v;
                                        arg = (dy * kernel + dx) as u32;
                                    }
                                }
                            }
                            pattern.push(arg);
                            out.push(best);
                        }
                    }
                }
                out
            }
            LayerKind::Lrn {
                size,
                k,
                alpha,
                beta,
            } => {
                let plane = h * w;
                let half = size / 2;
                let mut out = vec![0.0f64; a.len()];
                for ci in 0..c {
                    for p in 0..plane {
                        let lo = ci.saturating_sub(half);
                        let hi = (ci + half).min(c - 1);
                        let sq: f64 = (lo..=hi).map(|cj| a[cj * plane + p].powi(2)).sum();
                        let denom = f64::from(k) + f64::from(alpha) / size as f64 * sq;
                        out[ci * plane + p] = a[ci * plane + p] * denom.powf(-f64::from(beta));
                    }
                }
                out
            }
            LayerKind::Fullyconnected { outputs } => {
                let p = net.params(i).unwrap();
                p.weights
                    .data()
                    .chunks_exact(a.len())
                    .zip(&p.bias)
                    .take(outputs)
                    .map(|(row, &b)| {
                        row.iter().zip(&a).map(|(&wv, &v)| f64::from(wv) * v).sum::<f64>()
                            + f64::from(b)
                    })
                    .collect()
            }
            LayerKind::Softmax => {
                return Err(Error::Unsupported("finite differences through softmax".into()))
            }
        };
        [c, h, w] = [oc, oh, ow];
    }
    let plane = h * w;
    let value = match unit.position(&[c, h, w])? {
        Some((y, xx)) => a[unit.channel * plane + y * w + xx],
        None => {
            debug_assert_eq!(unit.site, Site::Mean);
            a[unit.channel * plane..(unit.channel + 1) * plane].iter().sum::<f64>() / plane as f64
        }
    };
    Ok((value, pattern))
}
