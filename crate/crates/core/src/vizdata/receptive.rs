use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{LayerKind, Network};

/// Inclusive pixel rectangle in input coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Rect {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..=self.bottom).contains(&y) && (self.left..=self.right).contains(&x)
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }
}

/// The theoretical receptive field of position `(row, col)` in the output of
/// `layer`: every input pixel that can influence it, clipped to the image.
pub fn receptive_field(net: &Network, layer: &str, row: usize, col: usize) -> Result<Rect> {
    let top = net.layer_index(layer)?;
    let [_, h, w] = net.output_shape(top);
    if row >= h || col >= w {
        return Err(Error::InvalidArgument(format!(
            "position ({row}, {col}) outside the {h}x{w} output of `{layer}`"
        )));
    }
    // Signed spans so padding can extend past the image before clipping.
    let (mut y0, mut y1, mut x0, mut x1) = (row as i64, row as i64, col as i64, col as i64);
    for i in (0..=top).rev() {
        let [_, ih, iw] = net.layer_input_shape(i);
        match net.layers()[i].kind {
            LayerKind::Conv {
                kernel, stride, pad, ..
            } => {
                let (k, s, p) = (kernel as i64, stride as i64, pad as i64);
                (y0, y1) = (y0 * s - p, y1 * s - p + k - 1);
                (x0, x1) = (x0 * s - p, x1 * s - p + k - 1);
            }
            LayerKind::Maxpool { kernel, stride } => {
                let (k, s) = (kernel as i64, stride as i64);
                (y0, y1) = (y0 * s, y1 * s + k - 1);
                (x0, x1) = (x0 * s, x1 * s + k - 1);
            }
            LayerKind::Fullyconnected { .. } => {
                (y0, y1, x0, x1) = (0, ih as i64 - 1, 0, iw as i64 - 1);
            }
            LayerKind::Relu | LayerKind::Lrn { .. } | LayerKind::Softmax => {}
        }
        y0 = y0.max(0);
        x0 = x0.max(0);
        y1 = y1.min(ih as i64 - 1);
        x1 = x1.min(iw as i64 - 1);
    }
    Ok(Rect {
        top: y0 as usize,
        left: x0 as usize,
        bottom: y1 as usize,
        right: x1 as usize,
    })
}
