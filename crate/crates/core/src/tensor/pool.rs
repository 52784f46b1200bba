use super::Tensor;
use crate::error::{Error, Result};

/// Per-window argmax locations recorded by [`maxpool`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwitchMap {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    kernel: usize,
    stride: usize,
    /// Flat input index of the winning element, one per output element.
    argmax: Vec<usize>,
}

impl SwitchMap {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }

    /// Winning position within the window of output `(c, oy, ox)`, as
    /// `(row, col)` offsets from the window's top-left corner.
    pub fn window_offset(&self, c: usize, oy: usize, ox: usize) -> (usize, usize) {
        let (oh, ow) = (self.output_shape[1], self.output_shape[2]);
        let (ih, iw) = (self.input_shape[1], self.input_shape[2]);
        let flat = self.argmax[(c * oh + oy) * ow + ox];
        let within = flat - c * ih * iw;
        (within / iw - oy * self.stride, within % iw - ox * self.stride)
    }
}

/// Floor-mode output extent of an unpadded pooling sweep.
pub fn pool_output_size(input: usize, kernel: usize, stride: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "pool kernel and stride must be >= 1".into(),
        ));
    }
    if input < kernel {
        return Err(Error::InvalidArgument(format!(
            "pool window {kernel} larger than input extent {input}"
        )));
    }
    Ok((input - kernel) / stride + 1)
}

/// Max over each `k × k` window. Ties go to the first maximum in row-major
/// scan order.
pub fn maxpool(input: &Tensor, k: usize, stride: usize) -> Result<(Tensor, SwitchMap)> {
    let (c, h, w) = input.dims3()?;
    let oh = pool_output_size(h, k, stride)?;
    let ow = pool_output_size(w, k, stride)?;
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = (ci * h + oy * stride) * w + ox * stride;
                let mut best = src[best_idx];
                for dy in 0..k {
                    let row = (ci * h + oy * stride + dy) * w + ox * stride;
                    for dx in 0..k {
                        let v = src[row + dx];
                        if v > best {
                            best = v;
                            best_idx = row + dx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    let output = Tensor::new([c, oh, ow], out)?;
    let switches = SwitchMap {
        input_shape: vec![c, h, w],
        output_shape: vec![c, oh, ow],
        kernel: k,
        stride,
        argmax,
    };
    Ok((output, switches))
}

/// Routes each output diff to the input element that won its window.
pub fn maxpool_backward(out_diff: &Tensor, switches: &SwitchMap) -> Result<Tensor> {
    out_diff.expect_shape(&switches.output_shape, "maxpool backward diff")?;
    let mut dx = Tensor::zeros(switches.input_shape.clone())?;
    let dst = dx.data_mut();
    for (&idx, &d) in switches.argmax.iter().zip(out_diff.data()) {
        dst[idx] += d;
    }
    Ok(dx)
}
