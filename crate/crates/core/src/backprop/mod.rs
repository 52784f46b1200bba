//! Backward passes from a single unit to the input image.
//!
//! [`BackwardMode::Gradient`] computes the exact derivative `∂a_i/∂x`.
//! [`BackwardMode::Deconv`] is the deconvnet pass: identical routing through
//! conv, fully-connected and pooling layers (via the forward switches), but
//! every ReLU rectifies the incoming diff instead of gating by the forward
//! sign, and LRN passes diffs through unchanged.

mod gradcheck;

pub use gradcheck::{finite_diff_check, GradCheckReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ActivationMap, LayerKind, LayerParams, Network, UnitRef};
use crate::tensor::{conv2d_backward_input, conv2d_backward_params, lrn_backward, maxpool_backward, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackwardMode {
    #[default]
    Gradient,
    Deconv,
}

impl std::str::FromStr for BackwardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" | "backprop" => Ok(BackwardMode::Gradient),
            "deconv" => Ok(BackwardMode::Deconv),
            other => Err(Error::InvalidArgument(format!(
                "unknown backward mode `{other}` (gradient|deconv)"
            ))),
        }
    }
}

/// Input-shaped diff of `unit` with respect to the network input.
pub fn backward(
    net: &Network,
    acts: &ActivationMap,
    unit: &UnitRef,
    mode: BackwardMode,
) -> Result<Tensor> {
    acts.check_matches(net)?;
    let top = net.layer_index(&unit.layer)?;
    let seed = unit.seed_diff(&net.output_shape(top))?;
    propagate(net, acts, top, seed, mode, false).map(|(dx, _)| dx)
}

/// Backward pass from an arbitrary diff on the output of layer `top`.
pub fn backward_from(
    net: &Network,
    acts: &ActivationMap,
    top: usize,
    seed: Tensor,
    mode: BackwardMode,
) -> Result<Tensor> {
    acts.check_matches(net)?;
    propagate(net, acts, top, seed, mode, false).map(|(dx, _)| dx)
}

/// Gradient-mode pass that also returns parameter gradients for every conv
/// and fully-connected layer at or below `top` (`None` elsewhere).
pub fn parameter_gradients(
    net: &Network,
    acts: &ActivationMap,
    top: usize,
    seed: Tensor,
) -> Result<(Tensor, Vec<Option<LayerParams>>)> {
    acts.check_matches(net)?;
    propagate(net, acts, top, seed, BackwardMode::Gradient, true)
}

fn propagate(
    net: &Network,
    acts: &ActivationMap,
    top: usize,
    seed: Tensor,
    mode: BackwardMode,
    want_params: bool,
) -> Result<(Tensor, Vec<Option<LayerParams>>)> {
    if top >= net.layers().len() {
        return Err(Error::InvalidArgument(format!("layer index {top} out of range")));
    }
    seed.expect_shape(&net.output_shape(top), "backward seed")?;
    let mut grads: Vec<Option<LayerParams>> = vec![None; net.layers().len()];
    let mut diff = seed;
    for i in (0..=top).rev() {
        let layer = &net.layers()[i];
        let input = acts.layer_input(i);
        diff = match layer.kind {
            LayerKind::Conv { stride, pad, .. } => {
                let p = net.params(i).expect("conv params");
                if want_params {
                    let (weights, bias) =
                        conv2d_backward_params(input, &diff, p.weights.shape(), stride, pad)?;
                    grads[i] = Some(LayerParams { weights, bias });
                }
                conv2d_backward_input(&diff, &p.weights, input.shape(), stride, pad)?
            }
            LayerKind::Relu => match mode {
                BackwardMode::Gradient => diff.zip_map(input, |d, a| if a > 0.0 { d } else { 0.0 })?,
                BackwardMode::Deconv => diff.map(|d| d.max(0.0)),
            },
            LayerKind::Maxpool { .. } => {
                let switches = acts.switches(i).ok_or_else(|| {
                    Error::InvalidArgument(format!("no switches stored for `{}`", layer.name))
                })?;
                maxpool_backward(&diff, switches)?
            }
            LayerKind::Lrn { .. } => match mode {
                BackwardMode::Gradient => {
                    lrn_backward(input, &diff, &layer.kind.lrn_params().unwrap())?
                }
                BackwardMode::Deconv => diff,
            },
            LayerKind::Fullyconnected { .. } => {
                let p = net.params(i).expect("fc params");
                let n_in = input.len();
                if want_params {
                    let x = input.data();
                    let dw: Vec<f32> = diff
                        .data()
                        .iter()
                        .flat_map(|&d| x.iter().map(move |&v| d * v))
                        .collect();
                    grads[i] = Some(LayerParams {
                        weights: Tensor::new(p.weights.shape().to_vec(), dw)?,
                        bias: diff.data().to_vec(),
                    });
                }
                let mut dx = vec![0.0f32; n_in];
                for (row, &d) in p.weights.data().chunks_exact(n_in).zip(diff.data()) {
                    if d != 0.0 {
                        dx.iter_mut().zip(row).for_each(|(acc, &w)| *acc += d * w);
                    }
                }
                Tensor::new(input.shape().to_vec(), dx)?
            }
            LayerKind::Softmax => {
                return Err(Error::Unsupported(format!(
                    "backward through softmax layer `{}`; use the pre-softmax layer",
                    layer.name
                )))
            }
        };
    }
    Ok((diff, grads))
}
