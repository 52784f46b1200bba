//! Dataset mining: top-K activating images per unit and per-channel
//! activation statistics.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{forward, LayerKind, Network, UnitRef};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKHit {
    pub image_id: String,
    pub activation: f32,
    /// Position of the channel's maximum in this image, where a deconv of
    /// the hit starts.
    pub argmax: (usize, usize),
}

/// The highest-activating images for one unit, sorted descending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKEntry {
    pub unit: UnitRef,
    pub k: usize,
    pub hits: Vec<TopKHit>,
}

/// Descending activation, then ascending image id.
fn rank(a: &TopKHit, b: &TopKHit) -> Ordering {
    b.activation
        .total_cmp(&a.activation)
        .then_with(|| a.image_id.cmp(&b.image_id))
}

impl TopKEntry {
    fn empty(unit: UnitRef, k: usize) -> Self {
        TopKEntry {
            unit,
            k,
            hits: Vec::new(),
        }
    }

    fn push(&mut self, hit: TopKHit) {
        let at = self.hits.partition_point(|h| rank(h, &hit) == Ordering::Less);
        if at < self.k {
            self.hits.insert(at, hit);
            self.hits.truncate(self.k);
        }
    }

    /// Merges two sorted K-lists for the same unit.
    pub fn merge(mut self, other: TopKEntry) -> TopKEntry {
        for hit in other.hits {
            self.push(hit);
        }
        self
    }
}

fn channel_argmax(output: &Tensor, channel: usize) -> (usize, usize) {
    let (_, h, w) = (output.shape()[0], output.shape()[1], output.shape()[2]);
    let plane = &output.data()[channel * h * w..(channel + 1) * h * w];
    let mut best = 0;
    for (i, &v) in plane.iter().enumerate() {
        if v > plane[best] {
            best = i;
        }
    }
    (best / w, best % w)
}

/// Scans preprocessed `(id, tensor)` items and keeps, per unit, the `k`
/// images with the highest unit activation. Ties go to the smaller id, so
/// the result does not depend on iteration order.
pub fn topk_scan<I>(net: &Network, images: I, units: &[UnitRef], k: usize) -> Result<Vec<TopKEntry>>
where
    I: IntoIterator<Item = (String, Tensor)>,
    I::IntoIter: Send,
{
    if k == 0 {
        return Err(Error::InvalidArgument("top-k needs k >= 1".into()));
    }
    let layers = units
        .iter()
        .map(|u| {
            let i = net.layer_index(&u.layer)?;
            u.position(&net.output_shape(i))?;
            Ok(i)
        })
        .collect::<Result<Vec<_>>>()?;
    let fresh = || units.iter().map(|u| TopKEntry::empty(u.clone(), k)).collect::<Vec<_>>();

    let (count, lists) = images
        .into_iter()
        .par_bridge()
        .map(|(id, x)| -> Result<(usize, Vec<TopKEntry>)> {
            let acts = forward(net, &x)?;
            let mut lists = fresh();
            for ((list, unit), &li) in lists.iter_mut().zip(units).zip(&layers) {
                let out = acts.output(li);
                list.push(TopKHit {
                    image_id: id.clone(),
                    activation: unit.read(out)?,
                    argmax: channel_argmax(out, unit.channel),
                });
            }
            Ok((1, lists))
        })
        .try_reduce(
            || (0, fresh()),
            |(na, a), (nb, b)| Ok((na + nb, a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect())),
        )?;
    if count == 0 {
        return Err(Error::Empty("top-k scan over an empty dataset".into()));
    }
    Ok(lists)
}

/// Writes top-K lists as CSV: `unit,rank,image_id,activation,argmax_row,argmax_col`.
pub fn write_topk(path: impl AsRef<Path>, lists: &[TopKEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["unit", "rank", "image_id", "activation", "argmax_row", "argmax_col"])?;
    for list in lists {
        for (r, hit) in list.hits.iter().enumerate() {
            w.write_record([
                list.unit.to_string(),
                r.to_string(),
                hit.image_id.clone(),
                hit.activation.to_string(),
                hit.argmax.0.to_string(),
                hit.argmax.1.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

#[derive(Deserialize)]
struct TopKRow {
    unit: String,
    rank: usize,
    image_id: String,
    activation: f32,
    argmax_row: usize,
    argmax_col: usize,
}

/// Reads lists written by [`write_topk`]. `k` of each list is its length.
pub fn read_topk(path: impl AsRef<Path>) -> Result<Vec<TopKEntry>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut lists: Vec<TopKEntry> = Vec::new();
    for row in reader.deserialize() {
        let row: TopKRow = row?;
        let unit: UnitRef = row.unit.parse()?;
        let hit = TopKHit {
            image_id: row.image_id,
            activation: row.activation,
            argmax: (row.argmax_row, row.argmax_col),
        };
        match lists.iter_mut().find(|l| l.unit == unit) {
            Some(list) if list.hits.len() == row.rank => list.hits.push(hit),
            Some(_) => return Err(Error::Format(format!("top-k rows for {unit} out of order"))),
            None if row.rank == 0 => lists.push(TopKEntry {
                unit,
                k: 0,
                hits: vec![hit],
            }),
            None => return Err(Error::Format(format!("top-k list for {unit} missing rank 0"))),
        }
    }
    for l in &mut lists {
        l.k = l.hits.len();
    }
    Ok(lists)
}

/// Mean rectified activation per channel of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub layer: String,
    pub images: usize,
    pub means: Vec<f64>,
}

impl ChannelStats {
    /// `channel\tmean` rows under a header.
    pub fn write_table(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# layer {} over {} images", self.layer, self.images)?;
        writeln!(out, "channel\tmean")?;
        for (c, m) in self.means.iter().enumerate() {
            writeln!(out, "{c}\t{m:.6}")?;
        }
        Ok(())
    }
}

/// Resolves the rectified layer for statistics: a ReLU layer itself, or the
/// ReLU directly after a named conv / fully-connected layer.
pub fn rectified_layer(net: &Network, layer: &str) -> Result<usize> {
    let i = net.layer_index(layer)?;
    if net.layers()[i].kind == LayerKind::Relu {
        return Ok(i);
    }
    match net.layers().get(i + 1) {
        Some(next) if next.kind == LayerKind::Relu => Ok(i + 1),
        _ => Err(Error::InvalidArgument(format!(
            "layer `{layer}` is not rectified; statistics need a ReLU output"
        ))),
    }
}

/// Per-channel mean of the rectified output of `layer`, averaged over all
/// images and all spatial positions.
pub fn channel_stats<I>(net: &Network, images: I, layer: &str) -> Result<ChannelStats>
where
    I: IntoIterator<Item = Tensor>,
    I::IntoIter: Send,
{
    let li = rectified_layer(net, layer)?;
    let [c, h, w] = net.output_shape(li);
    let plane = h * w;
    let (count, sums) = images
        .into_iter()
        .par_bridge()
        .map(|x| -> Result<(usize, Vec<f64>)> {
            let acts = forward(net, &x)?;
            let out = acts.output(li).data();
            Ok((
                1,
                (0..c)
                    .map(|ci| out[ci * plane..(ci + 1) * plane].iter().map(|&v| f64::from(v)).sum())
                    .collect(),
            ))
        })
        .try_reduce(
            || (0, vec![0.0; c]),
            |(na, a), (nb, b)| Ok((na + nb, a.iter().zip(&b).map(|(x, y)| x + y).collect())),
        )?;
    if count == 0 {
        return Err(Error::Empty("channel statistics over an empty dataset".into()));
    }
    Ok(ChannelStats {
        layer: net.layers()[li].name.clone(),
        images: count,
        means: sums.iter().map(|s| s / (count * plane) as f64).collect(),
    })
}
