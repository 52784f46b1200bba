use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SHAPE_CLASSES: [&str; 3] = ["hbar", "vbar", "square"];

const SIDE: usize = 8;
const BAR: usize = 3;
const FG: (f32, f32) = (105.0, 125.0);
const BG: (f32, f32) = (90.0, 100.0);
const NOISE: f32 = 3.0;

/// One labelled 3x8x8 image with raw pixel values in `0..=255`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeSample {
    pub id: String,
    pub label: usize,
    pub image: Tensor,
}

/// `per_class` images of each class, interleaved by class, from `seed`.
///
/// A low-contrast shape of random color and placement on a slightly
/// darker noisy background: a 3-pixel horizontal bar, a 3-pixel vertical bar, or a
/// filled 4x4 / 5x5 square. Shapes are coarse so that they survive the
/// pixel-scale blur used by the ascent presets.
pub fn shapes_dataset(per_class: usize, seed: u64) -> Vec<ShapeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * SHAPE_CLASSES.len());
    for i in 0..per_class {
        for (label, name) in SHAPE_CLASSES.iter().enumerate() {
            let mask = shape_mask(&mut rng, label);
            let fg: [f32; 3] = std::array::from_fn(|_| rng.random_range(FG.0..=FG.1));
            let bg: [f32; 3] = std::array::from_fn(|_| rng.random_range(BG.0..=BG.1));
            let noise: Vec<f32> = (0..3 * SIDE * SIDE).map(|_| rng.random_range(-NOISE..=NOISE)).collect();
            let image = Tensor::from_fn((3, SIDE, SIDE), |c, y, x| {
                let base = if mask[y][x] { fg[c] } else { bg[c] };
                (base + noise[(c * SIDE + y) * SIDE + x]).clamp(0.0, 255.0).round()
            })
            .expect("fixed shape");
            out.push(ShapeSample {
                id: format!("{name}-{i:03}"),
                label,
                image,
            });
        }
    }
    out
}

fn shape_mask(rng: &mut ChaCha8Rng, label: usize) -> [[bool; SIDE]; SIDE] {
    let mut m = [[false; SIDE]; SIDE];
    match label {
        0 | 1 => {
            let len = rng.random_range(5..=SIDE);
            let start = rng.random_range(0..=SIDE - len);
            let at = rng.random_range(0..=SIDE - BAR);
            for t in 0..BAR {
                for s in start..start + len {
                    if label == 0 {
                        m[at + t][s] = true;
                    } else {
                        m[s][at + t] = true;
                    }
                }
            }
        }
        _ => {
            let side = rng.random_range(4..=5);
            let (y0, x0) = (rng.random_range(0..=SIDE - side), rng.random_range(0..=SIDE - side));
            for row in m.iter_mut().skip(y0).take(side) {
                for cell in row.iter_mut().skip(x0).take(side) {
                    *cell = true;
                }
            }
        }
    }
    m
}

/// Per-pixel mean of the images.
pub fn mean_image<'a>(images: impl IntoIterator<Item = &'a Tensor>) -> Result<Tensor> {
    let mut iter = images.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Empty("mean image of no images".into()))?;
    let mut sum: Vec<f64> = first.data().iter().map(|&v| f64::from(v)).collect();
    let mut n = 1usize;
    for t in iter {
        t.expect_shape(first.shape(), "image for mean")?;
        for (s, &v) in sum.iter_mut().zip(t.data()) {
            *s += f64::from(v);
        }
        n += 1;
    }
    Tensor::new(first.shape(), sum.into_iter().map(|s| (s / n as f64) as f32).collect())
}
