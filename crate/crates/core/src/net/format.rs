//! Binary network file.
//!
//! ```text
//! offset  size   field
//! 0       8      magic "CONVNET1"
//! 8       4      spec length L, u32 little-endian
//! 12      L      spec document, UTF-8 TOML
//! 12+L    4*P    parameters, f32 little-endian: for each conv / fully-
//!                connected layer in spec order, its weights in row-major
//!                (outC, inC, kH, kW) or (outputs, inputs) order, then its
//!                biases
//! ...     4*M    mean image (C, H, W), only when mean = "embedded"
//! end-4   4      CRC-32 (IEEE) of every preceding byte, u32 little-endian
//! ```
//!
//! Convolution weights are applied as cross-correlation (no flip).

use std::path::Path;

use super::spec::{MeanSource, MeanSpec, NetworkSpec};
use super::{default_mean, LayerParams, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CONVNET1";

const HEADER: usize = 8 + 4;
const TRAILER: usize = 4;

fn take(values: &[f32], at: &mut usize, n: usize, layer: &str) -> Result<Vec<f32>> {
    let available = values.len() - *at;
    if available < n {
        return Err(Error::BlobSize {
            layer: layer.to_owned(),
            needed: n,
            available,
        });
    }
    let out = values[*at..*at + n].to_vec();
    *at += n;
    Ok(out)
}

impl Network {
    /// Builds a network from a spec and a flat parameter list laid out as in
    /// the weight file (layer params, then the mean when embedded).
    pub fn from_values(spec: NetworkSpec, values: &[f32]) -> Result<Network> {
        spec.validate()?;
        let shapes = spec.output_shapes()?;
        let mut at = 0;
        let mut params = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let input = if i == 0 { spec.input } else { shapes[i - 1] };
            params.push(match NetworkSpec::param_shape(&layer.kind, input) {
                Some((w, b)) => {
                    let n = w.iter().product();
                    let weights = take(values, &mut at, n, &layer.name)?;
                    let bias = take(values, &mut at, b, &layer.name)?;
                    Some(LayerParams {
                        weights: Tensor::new(w, weights)?,
                        bias,
                    })
                }
                None => None,
            });
        }
        let mean = match spec.mean {
            MeanSpec::Named(MeanSource::Embedded) => {
                let n = spec.input.iter().product();
                Tensor::new(spec.input, take(values, &mut at, n, "mean image")?)?
            }
            _ => default_mean(&spec)?,
        };
        if at != values.len() {
            return Err(Error::Format(format!(
                "{} trailing parameter values after the last layer",
                values.len() - at
            )));
        }
        Network::new(spec, params, mean)
    }

    /// Flat parameter list in weight-file order.
    pub fn to_values(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for p in self.params.iter().flatten() {
            out.extend_from_slice(p.weights.data());
            out.extend_from_slice(&p.bias);
        }
        if self.spec.mean == MeanSpec::Named(MeanSource::Embedded) {
            out.extend_from_slice(self.mean.data());
        }
        out
    }
}

pub fn encode_network(net: &Network) -> Vec<u8> {
    let text = net.spec().to_text();
    let values = net.to_values();
    let mut out = Vec::with_capacity(HEADER + text.len() + 4 * values.len() + TRAILER);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Parses a network file. Size bookkeeping is checked before the checksum
/// so a short blob reports the layer that ran out of values.
pub fn decode_network(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < HEADER + TRAILER || &bytes[..8] != MAGIC {
        return Err(Error::Format("missing CONVNET1 magic".into()));
    }
    let spec_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let spec_end = HEADER
        .checked_add(spec_len)
        .filter(|&end| end + TRAILER <= bytes.len())
        .ok_or_else(|| Error::Format(format!("spec length {spec_len} exceeds file size")))?;
    let text = std::str::from_utf8(&bytes[HEADER..spec_end])
        .map_err(|e| Error::Format(format!("spec is not UTF-8: {e}")))?;
    let spec = NetworkSpec::parse(text)?;

    let payload_end = bytes.len() - TRAILER;
    let blob = &bytes[spec_end..payload_end];
    if !blob.len().is_multiple_of(4) {
        return Err(Error::Format(format!(
            "parameter section is {} bytes, not a whole number of f32 values",
            blob.len()
        )));
    }
    let values: Vec<f32> = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let net = Network::from_values(spec, &values)?;

    let stored = u32::from_le_bytes(bytes[payload_end..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..payload_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    Ok(net)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_network(&bytes)
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_network(net)).map_err(|e| Error::io(path, e))
}
