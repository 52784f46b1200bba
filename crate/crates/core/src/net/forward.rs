use super::spec::LayerKind;
use super::Network;
use crate::error::{Error, Result};
use crate::tensor::{conv2d, lrn, maxpool, SwitchMap, Tensor};

/// Every layer's output for one input, plus the pooling switches.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMap {
    names: Vec<String>,
    input: Tensor,
    outputs: Vec<Tensor>,
    switches: Vec<Option<SwitchMap>>,
}

impl ActivationMap {
    /// The (mean-subtracted) input the map was computed from.
    pub fn input(&self) -> &Tensor {
        &self.input
    }

    pub fn get(&self, layer: &str) -> Result<&Tensor> {
        self.index_of(layer).map(|i| &self.outputs[i])
    }

    pub fn output(&self, i: usize) -> &Tensor {
        &self.outputs[i]
    }

    /// What layer `i` consumed: the input for layer 0, else layer `i - 1`'s output.
    pub fn layer_input(&self, i: usize) -> &Tensor {
        if i == 0 {
            &self.input
        } else {
            &self.outputs[i - 1]
        }
    }

    pub fn switches(&self, i: usize) -> Option<&SwitchMap> {
        self.switches[i].as_ref()
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn index_of(&self, layer: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == layer)
            .ok_or_else(|| Error::UnknownLayer(layer.to_owned()))
    }

    /// Fails unless this map was produced by a forward pass of `net`.
    pub fn check_matches(&self, net: &Network) -> Result<()> {
        let layers = net.layers();
        if layers.len() != self.outputs.len()
            || layers.iter().zip(&self.names).any(|(l, n)| &l.name != n)
        {
            return Err(Error::InvalidArgument(
                "activation map was not produced by this network".into(),
            ));
        }
        for (i, out) in self.outputs.iter().enumerate() {
            out.expect_shape(&net.output_shape(i), "activation map entry")?;
        }
        self.input.expect_shape(&net.input_shape(), "activation map input")
    }
}

fn softmax(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.dims3()?;
    let plane = h * w;
    let src = x.data();
    let mut out = vec![0.0f32; src.len()];
    for i in 0..plane {
        let max = (0..c).map(|ci| src[ci * plane + i]).fold(f32::NEG_INFINITY, f32::max);
        let mut total = 0.0f32;
        for ci in 0..c {
            let e = (src[ci * plane + i] - max).exp();
            out[ci * plane + i] = e;
            total += e;
        }
        for ci in 0..c {
            out[ci * plane + i] /= total;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub(crate) fn fully_connected(input: &Tensor, weights: &Tensor, bias: &[f32]) -> Result<Tensor> {
    let inputs = input.len();
    weights.expect_shape(&[bias.len(), inputs], "fully-connected weights")?;
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(inputs)
        .zip(bias)
        .map(|(row, &b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>() + b)
        .collect();
    Tensor::new([bias.len(), 1, 1], out)
}

/// Runs `x` (already mean-subtracted) through every layer.
pub fn forward(net: &Network, x: &Tensor) -> Result<ActivationMap> {
    x.expect_shape(&net.input_shape(), "network input")?;
    let layers = net.layers();
    let mut outputs: Vec<Tensor> = Vec::with_capacity(layers.len());
    let mut switches = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let input = if i == 0 { x } else { &outputs[i - 1] };
        let mut switch = None;
        let out = match layer.kind {
            LayerKind::Conv { stride, pad, .. } => {
                let p = net.params(i).expect("validated conv params");
                conv2d(input, &p.weights, &p.bias, stride, pad)?
            }
            LayerKind::Relu => input.map(|v| v.max(0.0)),
            LayerKind::Maxpool { kernel, stride } => {
                let (out, s) = maxpool(input, kernel, stride)?;
                switch = Some(s);
                out
            }
            LayerKind::Lrn { .. } => lrn(input, &layer.kind.lrn_params().unwrap())?,
            LayerKind::Fullyconnected { .. } => {
                let p = net.params(i).expect("validated fc params");
                fully_connected(input, &p.weights, &p.bias)?
            }
            LayerKind::Softmax => softmax(input)?,
        };
        outputs.push(out);
        switches.push(switch);
    }
    Ok(ActivationMap {
        names: layers.iter().map(|l| l.name.clone()).collect(),
        input: x.clone(),
        outputs,
        switches,
    })
}
