//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use convis::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 3], scale: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..=scale)).collect()).unwrap()
}

/// Six nested loops over output channel, output position, input channel
/// and kernel offset, in f64, with explicit zero padding.
pub fn naive_conv(x: &Tensor, w: &Tensor, b: &[f32], stride: usize, pad: usize) -> Tensor {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oc, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0f32; oc * oh * ow];
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = f64::from(b[o]);
                for ci in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            let xv = x.data()[(ci * h + iy as usize) * wd + ix as usize];
                            let wv = w.data()[((o * c + ci) * kh + ky) * kw + kx];
                            acc += f64::from(xv) * f64::from(wv);
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc as f32;
            }
        }
    }
    Tensor::new([oc, oh, ow], out).unwrap()
}

/// Max over each window by scanning; returns values and flat input argmax
/// (first maximum in row-major window order).
pub fn naive_pool(x: &Tensor, k: usize, stride: usize) -> (Tensor, Vec<usize>) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = ((h - k) / stride + 1, (w - k) / stride + 1);
    let mut vals = Vec::new();
    let mut arg = Vec::new();
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (f32::NEG_INFINITY, 0);
                for ky in 0..k {
                    for kx in 0..k {
                        let i = (ci * h + oy * stride + ky) * w + ox * stride + kx;
                        if x.data()[i] > best.0 {
                            best = (x.data()[i], i);
                        }
                    }
                }
                vals.push(best.0);
                arg.push(best.1);
            }
        }
    }
    (Tensor::new([c, oh, ow], vals).unwrap(), arg)
}

/// `b = a / (k + alpha/n * sum_{window} a^2)^beta` element by element.
pub fn naive_lrn(x: &Tensor, n: usize, k: f64, alpha: f64, beta: f64) -> Tensor {
    let v: Vec<f64> = x.data().iter().map(|&a| f64::from(a)).collect();
    let out = naive_lrn_f64(&v, x.shape(), n, k, alpha, beta);
    Tensor::new(x.shape().to_vec(), out.iter().map(|&b| b as f32).collect()).unwrap()
}

pub fn naive_lrn_f64(x: &[f64], shape: &[usize], n: usize, k: f64, alpha: f64, beta: f64) -> Vec<f64> {
    let (c, plane) = (shape[0], shape[1] * shape[2]);
    let half = n / 2;
    (0..x.len())
        .map(|i| {
            let (ci, p) = (i / plane, i % plane);
            let lo = ci.saturating_sub(half);
            let hi = (ci + half).min(c - 1);
            let s: f64 = (lo..=hi).map(|j| x[j * plane + p].powi(2)).sum();
            x[i] / (k + alpha / n as f64 * s).powf(beta)
        })
        .collect()
}

fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n as isize {
            i = 2 * (n as isize - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Direct 2-D Gaussian correlation with a dense (2r+1)^2 kernel built as
/// the outer product of the normalized 1-D taps, mirror boundary.
pub fn dense_blur(x: &Tensor, sigma: f64) -> Tensor {
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / s).collect();
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    Tensor::from_fn((c, h, w), |ci, y, xx| {
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let yy = mirror(y as isize + dy, h);
                let xq = mirror(xx as isize + dx, w);
                acc += taps[(dy + r) as usize] * taps[(dx + r) as usize] * f64::from(x.at(ci, yy, xq));
            }
        }
        acc as f32
    })
    .unwrap()
}

/// Nearest-rank percentile by sorting.
pub fn sorted_percentile(v: &[f32], pct: f64) -> f32 {
    if pct == 0.0 {
        return f32::NEG_INFINITY;
    }
    let mut s = v.to_vec();
    s.sort_by(f32::total_cmp);
    let rank = ((pct / 100.0) * s.len() as f64).ceil() as usize;
    s[rank.clamp(1, s.len()) - 1]
}
