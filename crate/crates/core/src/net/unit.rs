use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::forward::ActivationMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which scalar of a channel map a unit refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Site {
    /// The element at `(H / 2, W / 2)`.
    #[default]
    Center,
    At { row: usize, col: usize },
    /// Mean over all spatial positions of the channel.
    Mean,
}

/// Address of one scalar activation: layer, channel and spatial site.
///
/// Text form: `conv5:151` (center), `conv5:151@6,6`, `conv5:151:mean`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UnitRef {
    pub layer: String,
    pub channel: usize,
    pub site: Site,
}

impl UnitRef {
    pub fn new(layer: impl Into<String>, channel: usize) -> Self {
        UnitRef {
            layer: layer.into(),
            channel,
            site: Site::Center,
        }
    }

    pub fn at(layer: impl Into<String>, channel: usize, row: usize, col: usize) -> Self {
        UnitRef {
            layer: layer.into(),
            channel,
            site: Site::At { row, col },
        }
    }

    pub fn mean(layer: impl Into<String>, channel: usize) -> Self {
        UnitRef {
            layer: layer.into(),
            channel,
            site: Site::Mean,
        }
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidUnit {
            unit: self.to_string(),
            reason: reason.into(),
        }
    }

    /// Concrete position inside a `(C, H, W)` layer output; `None` for a
    /// spatial mean.
    pub fn position(&self, shape: &[usize]) -> Result<Option<(usize, usize)>> {
        let [c, h, w] = shape[..] else {
            return Err(self.invalid(format!("layer shape {shape:?} is not rank 3")));
        };
        if self.channel >= c {
            return Err(self.invalid(format!("channel out of range for {c} channels")));
        }
        match self.site {
            Site::Center => Ok(Some((h / 2, w / 2))),
            Site::At { row, col } if row < h && col < w => Ok(Some((row, col))),
            Site::At { .. } => Err(self.invalid(format!("position outside the {h}x{w} map"))),
            Site::Mean => Ok(None),
        }
    }

    /// The upstream diff that selects this unit: 1 at its position, or
    /// `1 / (H W)` over the whole channel for a mean objective.
    pub fn seed_diff(&self, shape: &[usize]) -> Result<Tensor> {
        let pos = self.position(shape)?;
        let (h, w) = (shape[1], shape[2]);
        let mut seed = Tensor::zeros(shape.to_vec())?;
        let plane = h * w;
        let data = seed.data_mut();
        match pos {
            Some((y, x)) => data[self.channel * plane + y * w + x] = 1.0,
            None => data[self.channel * plane..(self.channel + 1) * plane]
                .iter_mut()
                .for_each(|v| *v = 1.0 / plane as f32),
        }
        Ok(seed)
    }

    /// Reads this unit's scalar out of a layer output.
    pub fn read(&self, output: &Tensor) -> Result<f32> {
        let pos = self.position(output.shape())?;
        let (h, w) = (output.shape()[1], output.shape()[2]);
        Ok(match pos {
            Some((y, x)) => output.at(self.channel, y, x),
            None => {
                let plane = h * w;
                let s: f64 = output.data()[self.channel * plane..(self.channel + 1) * plane]
                    .iter()
                    .map(|&v| f64::from(v))
                    .sum();
                (s / plane as f64) as f32
            }
        })
    }
}

/// The scalar `a_i` for `unit` in a computed activation map.
pub fn unit_activation(acts: &ActivationMap, unit: &UnitRef) -> Result<f32> {
    unit.read(acts.get(&unit.layer)?)
}

impl fmt::Display for UnitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer, self.channel)?;
        match self.site {
            Site::Center => Ok(()),
            Site::At { row, col } => write!(f, "@{row},{col}"),
            Site::Mean => write!(f, ":mean"),
        }
    }
}

impl FromStr for UnitRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidUnit {
            unit: s.to_owned(),
            reason: format!("{why}; expected LAYER:CHANNEL[@ROW,COL|:mean]"),
        };
        let (layer, rest) = s.split_once(':').ok_or_else(|| bad("missing `:`"))?;
        if layer.is_empty() {
            return Err(bad("empty layer name"));
        }
        let (channel, site) = if let Some(ch) = rest.strip_suffix(":mean") {
            (ch, Site::Mean)
        } else if let Some((ch, pos)) = rest.split_once('@') {
            let (r, c) = pos.split_once(',').ok_or_else(|| bad("position needs ROW,COL"))?;
            let row = r.trim().parse().map_err(|_| bad("bad row"))?;
            let col = c.trim().parse().map_err(|_| bad("bad column"))?;
            (ch, Site::At { row, col })
        } else {
            (rest, Site::Center)
        };
        Ok(UnitRef {
            layer: layer.to_owned(),
            channel: channel.trim().parse().map_err(|_| bad("bad channel"))?,
            site,
        })
    }
}

impl Serialize for UnitRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UnitRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
