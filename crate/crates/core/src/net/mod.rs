//! Network description, parameters, forward execution and the weight file.

mod format;
mod forward;
mod spec;
mod unit;

pub use format::{decode_network, encode_network, load_network, save_network, MAGIC};
pub use forward::{forward, ActivationMap};
pub use spec::{LayerKind, LayerSpec, MeanSource, MeanSpec, NetworkSpec};
pub use unit::{unit_activation, Site, UnitRef};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights and biases of one conv or fully-connected layer.
///
/// Conv weights are `(outC, inC, kH, kW)`; fully-connected weights are
/// `(outputs, inputs)` where inputs is the flattened `(C, H, W)` of the
/// layer below.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Vec<f32>,
}

/// A parsed spec with its parameters and mean image: ready to run.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<[usize; 3]>,
    params: Vec<Option<LayerParams>>,
    mean: Tensor,
}

impl Network {
    /// Assembles a network, checking every parameter shape against the spec.
    pub fn new(spec: NetworkSpec, params: Vec<Option<LayerParams>>, mean: Tensor) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.output_shapes()?;
        if params.len() != spec.layers.len() {
            return Err(Error::Spec(format!(
                "{} parameter slots for {} layers",
                params.len(),
                spec.layers.len()
            )));
        }
        for (i, (layer, p)) in spec.layers.iter().zip(&params).enumerate() {
            let input = if i == 0 { spec.input } else { shapes[i - 1] };
            match (NetworkSpec::param_shape(&layer.kind, input), p) {
                (None, None) => {}
                (Some((w, b)), Some(p)) => {
                    p.weights
                        .expect_shape(&w, &format!("weights of layer `{}`", layer.name))?;
                    if p.bias.len() != b {
                        return Err(Error::shape(
                            format!("bias of layer `{}`", layer.name),
                            [b],
                            [p.bias.len()],
                        ));
                    }
                }
                (Some(_), None) => {
                    return Err(Error::Spec(format!("layer `{}` is missing parameters", layer.name)))
                }
                (None, Some(_)) => {
                    return Err(Error::Spec(format!(
                        "layer `{}` of kind {} takes no parameters",
                        layer.name,
                        layer.kind.name()
                    )))
                }
            }
        }
        mean.expect_shape(&spec.input, "mean image")?;
        Ok(Network {
            spec,
            shapes,
            params,
            mean,
        })
    }

    /// Zero-initialized parameters.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        Self::init_with(spec, |_, _| 0.0)
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases, drawn from
    /// a seeded ChaCha stream in layer order.
    pub fn random(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(spec, |fan_in, _| {
            let std = (2.0 / fan_in as f64).sqrt() as f32;
            Normal::new(0.0, std).expect("finite std").sample(&mut rng)
        })
    }

    fn init_with(spec: NetworkSpec, mut draw: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.output_shapes()?;
        let params = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let input = if i == 0 { spec.input } else { shapes[i - 1] };
                NetworkSpec::param_shape(&layer.kind, input)
                    .map(|(w, b)| {
                        let fan_in = w[1..].iter().product::<usize>();
                        let n = w.iter().product::<usize>();
                        let data = (0..n).map(|j| draw(fan_in, j)).collect();
                        Ok(LayerParams {
                            weights: Tensor::new(w, data)?,
                            bias: vec![0.0; b],
                        })
                    })
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = default_mean(&spec)?;
        Network::new(spec, params, mean)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.spec.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.spec.input
    }

    /// Output shape of layer `i`.
    pub fn output_shape(&self, i: usize) -> [usize; 3] {
        self.shapes[i]
    }

    /// Shape consumed by layer `i`.
    pub fn layer_input_shape(&self, i: usize) -> [usize; 3] {
        if i == 0 {
            self.spec.input
        } else {
            self.shapes[i - 1]
        }
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.spec.layer_index(name)
    }

    pub fn params(&self, i: usize) -> Option<&LayerParams> {
        self.params[i].as_ref()
    }

    pub fn params_mut(&mut self, i: usize) -> Option<&mut LayerParams> {
        self.params[i].as_mut()
    }

    pub fn mean(&self) -> &Tensor {
        &self.mean
    }

    /// Replaces the mean image; the spec switches to an embedded mean.
    pub fn with_mean(mut self, mean: Tensor) -> Result<Self> {
        mean.expect_shape(&self.spec.input, "mean image")?;
        self.mean = mean;
        self.spec.mean = MeanSpec::Named(MeanSource::Embedded);
        Ok(self)
    }

    /// Copy of the network with every layer of the given kinds dropped.
    /// Shapes are preserved since only shape-preserving kinds may be removed.
    pub fn without_kinds(&self, kinds: &[&str]) -> Result<Network> {
        let mut spec = self.spec.clone();
        let mut params = Vec::new();
        spec.layers = Vec::new();
        for (layer, p) in self.spec.layers.iter().zip(&self.params) {
            if kinds.contains(&layer.kind.name()) {
                if !matches!(layer.kind, LayerKind::Relu | LayerKind::Lrn { .. } | LayerKind::Softmax) {
                    return Err(Error::Unsupported(format!(
                        "removing shape-changing layer kind {}",
                        layer.kind.name()
                    )));
                }
                continue;
            }
            let mut l = layer.clone();
            l.input = None;
            spec.layers.push(l);
            params.push(p.clone());
        }
        Network::new(spec, params, self.mean.clone())
    }

    /// Total parameter count, in `f32` values.
    pub fn parameter_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.weights.len() + p.bias.len())
            .sum()
    }
}

pub(crate) fn default_mean(spec: &NetworkSpec) -> Result<Tensor> {
    let [c, h, w] = spec.input;
    match &spec.mean {
        MeanSpec::PerChannel(values) => Tensor::from_fn((c, h, w), |ci, _, _| values[ci]),
        MeanSpec::Named(_) => Tensor::zeros([c, h, w]),
    }
}
