//! 2-D convolution (cross-correlation, no filter flip) via im2col + sgemm.

use super::Tensor;
use crate::error::{Error, Result};

/// Output extent of a strided, padded window sweep. The window must tile
/// the padded input exactly.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::InvalidArgument(
            "kernel and stride must be >= 1".into(),
        ));
    }
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::InvalidArgument(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    if !(padded - kernel).is_multiple_of(stride) {
        return Err(Error::InvalidArgument(format!(
            "non-integer output size: ({input} + 2*{pad} - {kernel}) / {stride}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

struct Geometry {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    k_h: usize,
    k_w: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn new(input: &[usize], filters: &[usize], stride: usize, pad: usize) -> Result<Geometry> {
        let [in_c, in_h, in_w] = input[..] else {
            return Err(Error::InvalidShape {
                shape: input.to_vec(),
                reason: "conv input must be (C, H, W)".into(),
            });
        };
        let [_, f_c, k_h, k_w] = filters[..] else {
            return Err(Error::InvalidShape {
                shape: filters.to_vec(),
                reason: "filters must be (outC, inC, kH, kW)".into(),
            });
        };
        if f_c != in_c {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "conv2d input channels vs filter input channels (input {input:?}, filters {filters:?})"
                ),
                expected: vec![f_c],
                actual: vec![in_c],
            });
        }
        Ok(Geometry {
            in_c,
            in_h,
            in_w,
            k_h,
            k_w,
            out_h: conv_output_size(in_h, k_h, stride, pad)?,
            out_w: conv_output_size(in_w, k_w, stride, pad)?,
            stride,
            pad,
        })
    }

    fn patch(&self) -> usize {
        self.in_c * self.k_h * self.k_w
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Calls `f(col_row, position, input_index)` for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        for c in 0..self.in_c {
            for ky in 0..self.k_h {
                for kx in 0..self.k_w {
                    let row = (c * self.k_h + ky) * self.k_w + kx;
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            let src = (c * self.in_h + iy as usize) * self.in_w + ix as usize;
                            f(row, oy * self.out_w + ox, src);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, input: &[f32]) -> Vec<f32> {
        let n = self.positions();
        let mut cols = vec![0.0f32; self.patch() * n];
        self.for_each_tap(|row, pos, src| cols[row * n + pos] = input[src]);
        cols
    }
}

/// `c = a * b` where `a` is m×k and `b` is k×n, each addressed by
/// (row stride, column stride). `c` is dense row-major m×n.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_strides: (usize, usize),
    b: &[f32],
    b_strides: (usize, usize),
    c: &mut [f32],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: every index touched by sgemm is within the slices given the
    // stated dimensions and strides, which the callers derive from the
    // same geometry that sized the buffers.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Cross-correlates `filters` `(outC, inC, kH, kW)` over `input` `(C, H, W)`.
pub fn conv2d(
    input: &Tensor,
    filters: &Tensor,
    bias: &[f32],
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = Geometry::new(input.shape(), filters.shape(), stride, pad)?;
    let out_c = filters.shape()[0];
    if bias.len() != out_c {
        return Err(Error::shape("conv2d bias", [out_c], [bias.len()]));
    }
    let (k, n) = (g.patch(), g.positions());
    let cols = g.im2col(input.data());
    let mut out = vec![0.0f32; out_c * n];
    gemm(out_c, k, n, filters.data(), (k, 1), &cols, (n, 1), &mut out);
    for (row, &b) in out.chunks_exact_mut(n).zip(bias) {
        row.iter_mut().for_each(|v| *v += b);
    }
    Tensor::new([out_c, g.out_h, g.out_w], out)
}

/// Input diff of a convolution: correlation of the output diff with the
/// transposed filters, scattered back through the im2col mapping.
pub fn conv2d_backward_input(
    out_diff: &Tensor,
    filters: &Tensor,
    input_shape: &[usize],
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = Geometry::new(input_shape, filters.shape(), stride, pad)?;
    let out_c = filters.shape()[0];
    out_diff.expect_shape(&[out_c, g.out_h, g.out_w], "conv2d backward diff")?;
    let (k, n) = (g.patch(), g.positions());
    let mut dcols = vec![0.0f32; k * n];
    gemm(k, out_c, n, filters.data(), (1, k), out_diff.data(), (n, 1), &mut dcols);
    let mut dx = vec![0.0f32; g.in_c * g.in_h * g.in_w];
    g.for_each_tap(|row, pos, src| dx[src] += dcols[row * n + pos]);
    Tensor::new(input_shape.to_vec(), dx)
}

/// Filter and bias gradients of a convolution given its forward input and
/// output diff.
pub fn conv2d_backward_params(
    input: &Tensor,
    out_diff: &Tensor,
    filter_shape: &[usize],
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Vec<f32>)> {
    let g = Geometry::new(input.shape(), filter_shape, stride, pad)?;
    let out_c = filter_shape[0];
    out_diff.expect_shape(&[out_c, g.out_h, g.out_w], "conv2d backward diff")?;
    let (k, n) = (g.patch(), g.positions());
    let cols = g.im2col(input.data());
    let mut dw = vec![0.0f32; out_c * k];
    gemm(out_c, n, k, out_diff.data(), (n, 1), &cols, (1, n), &mut dw);
    let db = out_diff
        .data()
        .chunks_exact(n)
        .map(|row| row.iter().sum())
        .collect();
    Ok((Tensor::new(filter_shape.to_vec(), dw)?, db))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tap() {
        let x = Tensor::new([1, 1, 1], vec![2.0]).unwrap();
        let f = Tensor::new([1, 1, 1, 1], vec![3.0]).unwrap();
        let y = conv2d(&x, &f, &[1.0], 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn identity_filter() {
        let x = Tensor::from_fn((1, 4, 5), |_, y, x| (y * 5 + x) as f32 - 3.5).unwrap();
        let f = Tensor::new([1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d(&x, &f, &[0.0], 1, 0).unwrap(), x);
    }

    #[test]
    fn output_size_rules() {
        assert_eq!(conv_output_size(227, 11, 4, 0).unwrap(), 55);
        assert_eq!(conv_output_size(5, 3, 2, 1).unwrap(), 3);
        assert!(conv_output_size(6, 3, 2, 0).is_err());
        assert!(conv_output_size(2, 5, 1, 1).is_err());
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let x = Tensor::zeros([2, 4, 4]).unwrap();
        let f = Tensor::zeros([1, 3, 3, 3]).unwrap();
        let msg = conv2d(&x, &f, &[0.0], 1, 0).unwrap_err().to_string();
        assert!(msg.contains("[2, 4, 4]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
    }

    #[test]
    fn bias_length_checked() {
        let x = Tensor::zeros([1, 3, 3]).unwrap();
        let f = Tensor::zeros([2, 1, 3, 3]).unwrap();
        assert!(conv2d(&x, &f, &[0.0], 1, 0).is_err());
    }
}
