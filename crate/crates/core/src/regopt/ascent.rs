use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::regularizers::{reg_blur, reg_clip_contribution, reg_clip_norm, reg_l2_decay};
use super::{GradNorm, RegParams};
use crate::backprop::{backward, BackwardMode};
use crate::error::{Error, Result};
use crate::net::{forward, unit_activation, Network, UnitRef};
use crate::tensor::Tensor;

/// Outcome of one regularized ascent run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptRunResult {
    /// The synthesized image `x*`, in mean-subtracted input units.
    pub final_image: Tensor,
    /// `a_i` before each step's update; one entry per step.
    pub activation_trace: Vec<f32>,
    /// `a_i(x*)`.
    pub final_activation: f32,
    pub params: RegParams,
    pub unit: UnitRef,
}

/// One update `x <- r(x + eta * g)`.
///
/// Regularizers run in the order decay, scheduled blur, norm clip,
/// contribution clip; the contribution clip reuses this step's gradient.
/// Returns the new image and `a_i` at the incoming `x`.
pub fn ascent_step(
    net: &Network,
    x: &Tensor,
    unit: &UnitRef,
    params: &RegParams,
    step_index: usize,
) -> Result<(Tensor, f32)> {
    let acts = forward(net, x)?;
    let activation = unit_activation(&acts, unit)?;
    let mut grad = backward(net, &acts, unit, BackwardMode::Gradient)?;
    let scale = match params.grad_norm {
        GradNorm::MaxAbs => grad.max_abs(),
        GradNorm::Rms => (grad.l2_norm() / (grad.len() as f64).sqrt()) as f32,
        GradNorm::Raw => 1.0,
    };
    if scale > 0.0 && scale != 1.0 {
        grad = grad.scale(1.0 / scale);
    }
    let stepped = x.add_scaled(&grad, params.eta as f32)?;
    let decayed = reg_l2_decay(&stepped, params.theta_decay);
    let blurred = reg_blur(&decayed, params, step_index)?;
    let clipped = reg_clip_norm(&blurred, params.theta_n_pct)?;
    let next = reg_clip_contribution(&clipped, &grad, params.theta_c_pct)?;
    Ok((next, activation))
}

/// Zero-mean Gaussian initial image with std `init_sigma`, from `seed`.
pub fn initial_image(shape: [usize; 3], init_sigma: f64, seed: u64) -> Result<Tensor> {
    if init_sigma == 0.0 {
        return Tensor::zeros(shape);
    }
    let normal = Normal::new(0.0f32, init_sigma as f32)
        .map_err(|e| Error::InvalidArgument(format!("init_sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| normal.sample(&mut rng)).collect())
}

/// Runs `params.steps` ascent steps from a seeded random image.
pub fn run_optimization(net: &Network, unit: &UnitRef, params: &RegParams) -> Result<OptRunResult> {
    run_optimization_with(net, unit, params, |_, _| {})
}

/// [`run_optimization`] calling `progress(step, activation)` after every step.
pub fn run_optimization_with(
    net: &Network,
    unit: &UnitRef,
    params: &RegParams,
    mut progress: impl FnMut(usize, f32),
) -> Result<OptRunResult> {
    params.validate()?;
    // Fail fast on a bad unit before spending any steps.
    let layer = net.layer_index(&unit.layer)?;
    unit.position(&net.output_shape(layer))?;

    let mut x = initial_image(net.input_shape(), params.init_sigma, params.seed)?;
    let mut trace = Vec::with_capacity(params.steps);
    for step in 0..params.steps {
        let (next, a) = ascent_step(net, &x, unit, params, step)?;
        trace.push(a);
        x = next;
        progress(step, a);
    }
    let final_activation = unit_activation(&forward(net, &x)?, unit)?;
    Ok(OptRunResult {
        final_image: x,
        activation_trace: trace,
        final_activation,
        params: params.clone(),
        unit: unit.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetworkSpec;

    fn linear(weights: &[f32]) -> Network {
        let spec = NetworkSpec::parse(&format!(
            "input = [1, 1, {}]\n[[layer]]\nname = \"fc\"\nkind = \"fullyconnected\"\noutputs = 1\n",
            weights.len()
        ))
        .unwrap();
        let mut v = weights.to_vec();
        v.push(0.5);
        Network::from_values(spec, &v).unwrap()
    }

    #[test]
    fn raw_step_on_linear_unit() {
        let net = linear(&[1.0, -2.0, 0.5]);
        let params = RegParams {
            eta: 0.25,
            grad_norm: GradNorm::Raw,
            ..RegParams::default()
        };
        let unit = UnitRef::new("fc", 0);
        let x = Tensor::new([1, 1, 3], vec![0.0, 1.0, 2.0]).unwrap();
        let (x1, a0) = ascent_step(&net, &x, &unit, &params, 0).unwrap();
        let (_, a1) = ascent_step(&net, &x1, &unit, &params, 1).unwrap();
        // ||w||^2 = 5.25
        assert!((a1 - a0 - 0.25 * 5.25).abs() < 1e-6);
    }

    #[test]
    fn pure_decay_shrinks_geometrically() {
        let net = linear(&[0.0, 0.0]);
        let params = RegParams {
            theta_decay: 0.5,
            eta: 1e-30,
            ..RegParams::default()
        };
        let unit = UnitRef::new("fc", 0);
        let mut x = Tensor::new([1, 1, 2], vec![8.0, -4.0]).unwrap();
        for s in 0..3 {
            x = ascent_step(&net, &x, &unit, &params, s).unwrap().0;
        }
        assert_eq!(x.data(), &[1.0, -0.5]);
    }

    #[test]
    fn deterministic_and_seeded() {
        let net = linear(&[1.0, 2.0, 3.0, 4.0]);
        let unit = UnitRef::new("fc", 0);
        let p = RegParams {
            steps: 5,
            seed: 3,
            ..RegParams::preset(super::super::Preset::One)
        };
        let a = run_optimization(&net, &unit, &p).unwrap();
        let b = run_optimization(&net, &unit, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.activation_trace.len(), 5);
        let c = run_optimization(&net, &unit, &RegParams { seed: 4, ..p }).unwrap();
        assert_ne!(a.final_image, c.final_image);
    }

    #[test]
    fn zero_net_zero_init_stays_zero() {
        let net = linear(&[0.0, 0.0, 0.0]);
        let p = RegParams {
            steps: 10,
            init_sigma: 0.0,
            ..RegParams::default()
        };
        let r = run_optimization(&net, &UnitRef::new("fc", 0), &p).unwrap();
        assert!(r.final_image.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_unit_fails_fast() {
        let net = linear(&[1.0]);
        let p = RegParams::default();
        assert!(run_optimization(&net, &UnitRef::new("fc", 1), &p).is_err());
        assert!(run_optimization(&net, &UnitRef::new("conv", 0), &p).is_err());
    }
}
