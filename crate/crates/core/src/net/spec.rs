//! The human-readable network description (TOML).
//!
//! ```toml
//! name = "tiny"
//! input = [3, 8, 8]
//! mean = "zero"          # or "embedded", or per-channel [r, g, b]
//!
//! [[layer]]
//! name = "conv1"
//! kind = "conv"
//! filters = 8
//! kernel = 3
//! stride = 1
//! pad = 1
//!
//! [[layer]]
//! name = "relu1"
//! kind = "relu"
//! ```
//!
//! Layers run in file order; each consumes the previous layer's output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{conv_output_size, pool_output_size, LrnParams};

const KINDS: [&str; 6] = ["conv", "relu", "maxpool", "lrn", "fullyconnected", "softmax"];

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerKind {
    Conv {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    Relu,
    Maxpool {
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    Lrn {
        size: usize,
        k: f32,
        alpha: f32,
        beta: f32,
    },
    Fullyconnected {
        outputs: usize,
    },
    Softmax,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::Relu => "relu",
            LayerKind::Maxpool { .. } => "maxpool",
            LayerKind::Lrn { .. } => "lrn",
            LayerKind::Fullyconnected { .. } => "fullyconnected",
            LayerKind::Softmax => "softmax",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Conv { .. } | LayerKind::Fullyconnected { .. })
    }

    pub(crate) fn lrn_params(&self) -> Option<LrnParams> {
        match *self {
            LayerKind::Lrn {
                size,
                k,
                alpha,
                beta,
            } => Some(LrnParams {
                size,
                k,
                alpha,
                beta,
            }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    /// Name of the layer this one consumes. Only the immediately preceding
    /// layer (or `"data"` for the first) is accepted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            input: None,
            kind,
        }
    }
}

/// Where the per-pixel mean image comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanSpec {
    /// `"zero"` or `"embedded"` (stored after the layer parameters).
    Named(MeanSource),
    /// A constant per channel, broadcast over the image.
    PerChannel(Vec<f32>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanSource {
    Zero,
    Embedded,
}

impl Default for MeanSpec {
    fn default() -> Self {
        MeanSpec::Named(MeanSource::Zero)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default)]
    pub name: String,
    pub input: [usize; 3],
    #[serde(default)]
    pub mean: MeanSpec,
    #[serde(rename = "layer")]
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Parses and validates a spec document.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Spec(e.to_string()))?;
        // Check kinds first so an unknown kind is reported by layer name
        // rather than as a generic variant error.
        if let Some(toml::Value::Array(layers)) = raw.get("layer") {
            for (i, layer) in layers.iter().enumerate() {
                let name = layer
                    .get("name")
                    .and_then(|v| v.as_str())
                    .map_or_else(|| format!("#{i}"), str::to_owned);
                match layer.get("kind").and_then(|v| v.as_str()) {
                    Some(kind) if KINDS.contains(&kind) => {}
                    Some(kind) => {
                        return Err(Error::UnknownLayerKind {
                            layer: name,
                            kind: kind.to_owned(),
                        })
                    }
                    None => return Err(Error::Spec(format!("layer {name} has no kind"))),
                }
            }
        }
        let spec: NetworkSpec =
            toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("network spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Spec("network has no layers".into()));
        }
        if self.input.contains(&0) {
            return Err(Error::Spec(format!("input shape {:?} has a zero dimension", self.input)));
        }
        let mut seen = std::collections::HashSet::new();
        let mut previous = "data";
        for layer in &self.layers {
            if layer.name.is_empty() || layer.name == "data" {
                return Err(Error::Spec(format!("invalid layer name `{}`", layer.name)));
            }
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::Spec(format!("duplicate layer name `{}`", layer.name)));
            }
            if let Some(input) = &layer.input {
                if input != previous {
                    return Err(Error::Spec(format!(
                        "layer `{}` reads `{input}` but only the single-path predecessor `{previous}` is supported",
                        layer.name
                    )));
                }
            }
            if let Some(p) = layer.kind.lrn_params() {
                p.validate()?;
            }
            previous = &layer.name;
        }
        if let MeanSpec::PerChannel(values) = &self.mean {
            if values.len() != self.input[0] {
                return Err(Error::Spec(format!(
                    "mean has {} channel values for {} input channels",
                    values.len(),
                    self.input[0]
                )));
            }
        }
        self.output_shapes().map(|_| ())
    }

    /// Output shape `(C, H, W)` of every layer, in order.
    pub fn output_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut shape = self.input;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let [c, h, w] = shape;
            let at = |e: Error| Error::Spec(format!("layer `{}`: {e}", layer.name));
            shape = match layer.kind {
                LayerKind::Conv {
                    filters,
                    kernel,
                    stride,
                    pad,
                } => {
                    if filters == 0 {
                        return Err(Error::Spec(format!("layer `{}` has zero filters", layer.name)));
                    }
                    [
                        filters,
                        conv_output_size(h, kernel, stride, pad).map_err(at)?,
                        conv_output_size(w, kernel, stride, pad).map_err(at)?,
                    ]
                }
                LayerKind::Maxpool { kernel, stride } => [
                    c,
                    pool_output_size(h, kernel, stride).map_err(at)?,
                    pool_output_size(w, kernel, stride).map_err(at)?,
                ],
                LayerKind::Fullyconnected { outputs } => {
                    if outputs == 0 {
                        return Err(Error::Spec(format!("layer `{}` has zero outputs", layer.name)));
                    }
                    [outputs, 1, 1]
                }
                LayerKind::Softmax if i + 1 != self.layers.len() => {
                    return Err(Error::Spec(format!(
                        "softmax layer `{}` must be the last layer",
                        layer.name
                    )))
                }
                LayerKind::Relu | LayerKind::Lrn { .. } | LayerKind::Softmax => shape,
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_owned()))
    }

    /// Parameter tensor shapes `(weights, bias length)` for a layer, given
    /// the shape it consumes.
    pub(crate) fn param_shape(kind: &LayerKind, input: [usize; 3]) -> Option<(Vec<usize>, usize)> {
        match *kind {
            LayerKind::Conv {
                filters, kernel, ..
            } => Some((vec![filters, input[0], kernel, kernel], filters)),
            LayerKind::Fullyconnected { outputs } => {
                Some((vec![outputs, input.iter().product()], outputs))
            }
            _ => None,
        }
    }

    /// Shape consumed by layer `i`.
    pub fn input_shape_of(&self, i: usize) -> Result<[usize; 3]> {
        if i == 0 {
            return Ok(self.input);
        }
        Ok(self.output_shapes()?[i - 1])
    }

    /// Number of `f32` values a weight blob must hold for the layers.
    pub fn parameter_count(&self) -> Result<usize> {
        let shapes = self.output_shapes()?;
        Ok(self
            .layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                let input = if i == 0 { self.input } else { shapes[i - 1] };
                Self::param_shape(&l.kind, input)
            })
            .map(|(w, b)| w.iter().product::<usize>() + b)
            .sum())
    }
}
