use std::f64::consts::PI;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::net::{LayerParams, Network, NetworkSpec};
use crate::tensor::Tensor;

/// Input shape of [`gabor_bank_net`].
pub const GABOR_INPUT: [usize; 3] = [1, 32, 32];
/// Channels of the low-frequency filters.
pub const GABOR_LOW: Range<usize> = 0..5;
/// Channels of the high-frequency filters.
pub const GABOR_HIGH: Range<usize> = 5..10;

const KERNEL: usize = 7;
const LOW_WAVELENGTH: f64 = 8.0;
const HIGH_WAVELENGTH: f64 = 2.2;
const ENVELOPE_SIGMA: f64 = 2.0;

/// An even (cosine) Gabor patch, made zero-mean and scaled to unit L2 norm.
pub fn gabor_kernel(size: usize, wavelength: f64, theta: f64, sigma: f64) -> Vec<f32> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut k: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64 - c, (i % size) as f64 - c);
            let u = x * theta.cos() + y * theta.sin();
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp() * (2.0 * PI * u / wavelength).cos()
        })
        .collect();
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    k.iter().map(|v| (v / norm) as f32).collect()
}

/// A one-layer conv + ReLU net over grayscale 32x32 input whose ten 7x7
/// filters are Gabor patches: five orientations at a long wavelength
/// (channels [`GABOR_LOW`]) and the same five at a short one
/// ([`GABOR_HIGH`]). All filters have zero mean and unit norm.
pub fn gabor_bank_net() -> Network {
    let [c, h, w] = GABOR_INPUT;
    let spec = NetworkSpec::parse(&format!(
        "name = \"gabor-bank\"\ninput = [{c}, {h}, {w}]\n\
         [[layer]]\nname = \"conv1\"\nkind = \"conv\"\nfilters = 10\nkernel = {KERNEL}\n\
         [[layer]]\nname = \"relu1\"\nkind = \"relu\"\n"
    ))
    .expect("gabor spec parses");
    let weights: Vec<f32> = [LOW_WAVELENGTH, HIGH_WAVELENGTH]
        .iter()
        .flat_map(|&wl| (0..5).flat_map(move |o| gabor_kernel(KERNEL, wl, o as f64 * PI / 5.0, ENVELOPE_SIGMA)))
        .collect();
    let conv = LayerParams {
        weights: Tensor::new([10, 1, KERNEL, KERNEL], weights).expect("bank shape"),
        bias: vec![0.0; 10],
    };
    let mean = Tensor::zeros(GABOR_INPUT).expect("mean shape");
    Network::new(spec, vec![Some(conv), None], mean).expect("gabor bank is consistent")
}

/// Noise with a `1/f` amplitude spectrum and random phases, independently
/// per channel, scaled to zero mean and standard deviation `std`.
pub fn pink_noise(shape: [usize; 3], std: f64, seed: u64) -> Result<Tensor> {
    let [c, h, w] = shape;
    if h < 2 || w < 2 {
        return Err(Error::InvalidArgument(format!("1/f noise needs at least 2x2, got {h}x{w}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h));
    let mut out = Vec::with_capacity(c * h * w);
    for _ in 0..c {
        let mut buf: Vec<Complex<f64>> = (0..h * w)
            .map(|i| {
                let (ky, kx) = (signed_freq(i / w, h), signed_freq(i % w, w));
                let f = (ky * ky + kx * kx).sqrt();
                let phase = rng.random_range(0.0..2.0 * PI);
                if f == 0.0 {
                    Complex::new(0.0, 0.0)
                } else {
                    Complex::from_polar(1.0 / f, phase)
                }
            })
            .collect();
        for row in buf.chunks_mut(w) {
            row_fft.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h {
                col[y] = buf[y * w + x];
            }
            col_fft.process(&mut col);
            for y in 0..h {
                buf[y * w + x] = col[y];
            }
        }
        let re: Vec<f64> = buf.iter().map(|z| z.re).collect();
        let mean = re.iter().sum::<f64>() / re.len() as f64;
        let sd = (re.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / re.len() as f64).sqrt();
        out.extend(re.iter().map(|v| ((v - mean) / sd * std) as f32));
    }
    Tensor::new(shape, out)
}

/// Frequency of DFT bin `i` of `n`, in cycles per image, signed.
fn signed_freq(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}
