use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backprop::parameter_gradients;
use crate::error::{Error, Result};
use crate::net::{forward, Network};
use crate::tensor::Tensor;

/// Minibatch Adam on softmax cross-entropy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    /// L2 penalty `weight_decay/2 * |w|^2` on weights (not biases).
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch: 16,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch.
    pub epoch_loss: Vec<f64>,
    pub accuracy: f64,
}

fn softmax(logits: &[f32]) -> Vec<f64> {
    let m = logits.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = logits.iter().map(|&v| f64::from(v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `(input, label)` pairs whose `class_layer` argmax is the label.
pub fn accuracy(net: &Network, data: &[(Tensor, usize)], class_layer: &str) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("accuracy over no examples".into()));
    }
    let li = net.layer_index(class_layer)?;
    let hits = data
        .par_iter()
        .map(|(x, label)| Ok(usize::from(argmax(forward(net, x)?.output(li).data()) == *label)))
        .sum::<Result<usize>>()?;
    Ok(hits as f64 / data.len() as f64)
}

/// Fits every conv / fully-connected parameter of `net` so that the
/// `class_layer` output, read as logits, predicts the labels. Inputs are
/// expected mean-subtracted.
pub fn train_classifier(
    mut net: Network,
    data: &[(Tensor, usize)],
    class_layer: &str,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    if data.is_empty() || cfg.batch == 0 {
        return Err(Error::InvalidArgument("training needs data and batch >= 1".into()));
    }
    let top = net.layer_index(class_layer)?;
    let classes = net.output_shape(top).iter().product::<usize>();
    if let Some((_, l)) = data.iter().find(|(_, l)| *l >= classes) {
        return Err(Error::InvalidArgument(format!("label {l} with {classes} classes")));
    }
    let n_params = net.parameter_count();
    let (mut m, mut v) = (vec![0.0f64; n_params], vec![0.0f64; n_params]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut t = 0i32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch) {
            let (loss, grad) = batch
                .par_iter()
                .map(|&i| -> Result<(f64, Vec<f64>)> {
                    let (x, label) = &data[i];
                    let acts = forward(&net, x)?;
                    let p = softmax(acts.output(top).data());
                    let seed: Vec<f32> = p
                        .iter()
                        .enumerate()
                        .map(|(k, &pk)| (pk - f64::from(u8::from(k == *label))) as f32)
                        .collect();
                    let seed = Tensor::new(net.output_shape(top), seed)?;
                    let (_, grads) = parameter_gradients(&net, &acts, top, seed)?;
                    let mut flat = Vec::with_capacity(n_params);
                    for (slot, g) in (0..net.layers().len()).map(|i| (net.params(i), &grads[i])) {
                        match (slot, g) {
                            (Some(_), Some(g)) => {
                                flat.extend(g.weights.data().iter().map(|&v| f64::from(v)));
                                flat.extend(g.bias.iter().map(|&v| f64::from(v)));
                            }
                            (Some(p), None) => flat.extend(std::iter::repeat_n(0.0, p.weights.len() + p.bias.len())),
                            _ => {}
                        }
                    }
                    Ok((-p[*label].max(1e-12).ln(), flat))
                })
                .try_reduce(
                    || (0.0, vec![0.0; n_params]),
                    |(la, mut ga), (lb, gb)| {
                        ga.iter_mut().zip(&gb).for_each(|(a, b)| *a += b);
                        Ok((la + lb, ga))
                    },
                )?;
            total += loss;
            t += 1;
            let scale = 1.0 / batch.len() as f64;
            let lr = cfg.learning_rate * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t));
            let mut k = 0;
            for i in 0..net.layers().len() {
                let Some(p) = net.params_mut(i) else { continue };
                let n_weights = p.weights.len();
                for (j, w) in p.weights.data_mut().iter_mut().chain(p.bias.iter_mut()).enumerate() {
                    let decay = if j < n_weights { cfg.weight_decay * f64::from(*w) } else { 0.0 };
                    let g = grad[k] * scale + decay;
                    m[k] = b1 * m[k] + (1.0 - b1) * g;
                    v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                    *w -= (lr * m[k] / (v[k].sqrt() + eps)) as f32;
                    k += 1;
                }
            }
        }
        epoch_loss.push(total / data.len() as f64);
    }
    let accuracy = accuracy(&net, data, class_layer)?;
    Ok((net, TrainReport { epoch_loss, accuracy }))
}
