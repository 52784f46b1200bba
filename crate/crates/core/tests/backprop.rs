mod common;

use convis::backprop::backward_from;
use convis::fixtures;
use convis::net::LayerKind;
use convis::vizdata::receptive_field;
use convis::{backward, finite_diff_check, forward, unit_activation, BackwardMode, Network, NetworkSpec, Tensor, UnitRef};
use rand::Rng;

fn linear_fc(w: &[f32]) -> Network {
    let spec = NetworkSpec::parse(&format!(
        "input = [1, 1, {}]\n[[layer]]\nname = \"fc\"\nkind = \"fullyconnected\"\noutputs = 1\n",
        w.len()
    ))
    .unwrap();
    let mut v = w.to_vec();
    v.push(-0.5);
    Network::from_values(spec, &v).unwrap()
}

#[test]
fn linear_unit_gradient_is_the_weights() {
    let w = [0.5, -1.25, 2.0, 0.0];
    let net = linear_fc(&w);
    let x = Tensor::new([1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let acts = forward(&net, &x).unwrap();
    for mode in [BackwardMode::Gradient, BackwardMode::Deconv] {
        assert_eq!(backward(&net, &acts, &UnitRef::new("fc", 0), mode).unwrap().data(), &w);
    }
    let report = finite_diff_check(&net, &x, &UnitRef::new("fc", 0), 0.5).unwrap();
    assert!(report.max_rel_error < 1e-6);
}

const CONV_RELU: &str = r#"
input = [1, 1, 2]
[[layer]]
name = "fc"
kind = "fullyconnected"
outputs = 2
[[layer]]
name = "relu"
kind = "relu"
[[layer]]
name = "out"
kind = "fullyconnected"
outputs = 1
"#;

#[test]
fn relu_gating_and_deconv_rectification() {
    // fc: h0 = x0 + x1, h1 = x0 - x1; out = h0 - h1.
    let net = Network::from_values(
        NetworkSpec::parse(CONV_RELU).unwrap(),
        &[1.0, 1.0, 1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 0.0],
    )
    .unwrap();
    let x = Tensor::new([1, 1, 2], vec![2.0, 1.0]).unwrap();
    let acts = forward(&net, &x).unwrap();
    // Both hidden units active: gradient is (1,1) - (1,-1) = (0, 2).
    let g = backward(&net, &acts, &UnitRef::new("out", 0), BackwardMode::Gradient).unwrap();
    assert_eq!(g.data(), &[0.0, 2.0]);
    // Deconv drops the negative diff into h1 even though h1 > 0.
    let d = backward(&net, &acts, &UnitRef::new("out", 0), BackwardMode::Deconv).unwrap();
    assert_eq!(d.data(), &[1.0, 1.0]);

    // A unit gated off in the forward pass has zero gradient.
    let x = Tensor::new([1, 1, 2], vec![-2.0, -1.0]).unwrap();
    let acts = forward(&net, &x).unwrap();
    let g = backward(&net, &acts, &UnitRef::new("relu", 0), BackwardMode::Gradient).unwrap();
    assert!(g.data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_seed_gives_zero_diff() {
    let net = fixtures::fixture_net();
    let x = common::random_tensor(&mut common::rng(1), [3, 8, 8], 50.0);
    let acts = forward(&net, &x).unwrap();
    let top = net.layer_index("fc3").unwrap();
    for mode in [BackwardMode::Gradient, BackwardMode::Deconv] {
        let d = backward_from(&net, &acts, top, Tensor::zeros([3, 1, 1]).unwrap(), mode).unwrap();
        assert!(d.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn gradient_is_transpose_on_linear_net() {
    let spec = NetworkSpec::parse(
        r#"
input = [2, 7, 7]
[[layer]]
name = "conv1"
kind = "conv"
filters = 3
kernel = 3
stride = 2
pad = 1
[[layer]]
name = "conv2"
kind = "conv"
filters = 4
kernel = 2
[[layer]]
name = "fc"
kind = "fullyconnected"
outputs = 5
"#,
    )
    .unwrap();
    let net = Network::random(spec, 9).unwrap();
    let mut rng = common::rng(9);
    for _ in 0..20 {
        let x = common::random_tensor(&mut rng, [2, 7, 7], 1.0);
        let v = common::random_tensor(&mut rng, [2, 7, 7], 1.0);
        let unit = UnitRef::new("fc", rng.random_range(0..5));
        let g = backward(&net, &forward(&net, &x).unwrap(), &unit, BackwardMode::Gradient).unwrap();
        let a = |t: &Tensor| f64::from(unit_activation(&forward(&net, t).unwrap(), &unit).unwrap());
        // Exact for a linear map: a(x + v) - a(x).
        let directional = a(&x.add_scaled(&v, 1.0).unwrap()) - a(&x);
        let inner = g.dot(&v).unwrap();
        assert!((inner - directional).abs() <= 1e-4 * directional.abs().max(1.0), "{inner} vs {directional}");
    }
}

#[test]
fn modes_agree_without_relu_and_lrn() {
    let net = fixtures::fixture_net().without_kinds(&["relu", "lrn"]).unwrap();
    assert!(net
        .layers()
        .iter()
        .all(|l| !matches!(l.kind, LayerKind::Relu | LayerKind::Lrn { .. })));
    let mut rng = common::rng(2);
    for _ in 0..20 {
        let x = common::random_tensor(&mut rng, [3, 8, 8], 80.0);
        let acts = forward(&net, &x).unwrap();
        for unit in ["conv1:3@2,5", "pool1:1", "conv2:9@0,3", "fc3:2"] {
            let unit: UnitRef = unit.parse().unwrap();
            let g = backward(&net, &acts, &unit, BackwardMode::Gradient).unwrap();
            let d = backward(&net, &acts, &unit, BackwardMode::Deconv).unwrap();
            assert_eq!(g, d, "{unit}");
        }
    }
}

#[test]
fn deconv_stays_inside_receptive_field() {
    let net = fixtures::fixture_net();
    let x = fixtures::fixture_dataset()[4].image.sub(net.mean()).unwrap();
    let acts = forward(&net, &x).unwrap();
    for (layer, (y, xx)) in [("relu1", (0, 0)), ("relu1", (7, 3)), ("pool1", (1, 2)), ("relu2", (3, 0)), ("relu2", (0, 3))] {
        let c = net.output_shape(net.layer_index(layer).unwrap())[0];
        let rf = receptive_field(&net, layer, y, xx).unwrap();
        for ch in 0..c {
            let d = backward(&net, &acts, &UnitRef::at(layer, ch, y, xx), BackwardMode::Deconv).unwrap();
            for ci in 0..3 {
                for iy in 0..8 {
                    for ix in 0..8 {
                        if d.at(ci, iy, ix) != 0.0 {
                            assert!(rf.contains(iy, ix), "{layer}:{ch}@{y},{xx} leaks to ({iy},{ix}) outside {rf:?}");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn gradcheck_on_small_random_net() {
    let spec = NetworkSpec::parse(
        r#"
input = [3, 8, 8]
[[layer]]
name = "conv"
kind = "conv"
filters = 4
kernel = 3
[[layer]]
name = "relu"
kind = "relu"
[[layer]]
name = "fc"
kind = "fullyconnected"
outputs = 3
"#,
    )
    .unwrap();
    let net = Network::random(spec, 5).unwrap();
    let mut rng = common::rng(5);
    for i in 0..5 {
        let x = common::random_tensor(&mut rng, [3, 8, 8], 10.0);
        let r = finite_diff_check(&net, &x, &UnitRef::new("fc", i % 3), 1e-2).unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
        assert!(r.checked > 0);
    }
}

#[test]
fn pool_tie_is_flagged_not_failed() {
    let spec = NetworkSpec::parse(
        "input = [1, 2, 2]\n[[layer]]\nname = \"pool\"\nkind = \"maxpool\"\nkernel = 2\nstride = 2\n",
    )
    .unwrap();
    let net = Network::zeros(spec).unwrap();
    let x = Tensor::new([1, 2, 2], vec![1.0, 1.0, 0.0, -1.0]).unwrap();
    let r = finite_diff_check(&net, &x, &UnitRef::new("pool", 0), 1e-3).unwrap();
    assert!(r.non_differentiable.contains(&0) && r.non_differentiable.contains(&1), "{r:?}");
    assert!(r.passes(1e-3));
}

#[test]
fn softmax_and_mismatched_acts_are_errors() {
    let net = fixtures::fixture_net();
    let x = Tensor::zeros([3, 8, 8]).unwrap();
    let acts = forward(&net, &x).unwrap();
    assert!(backward(&net, &acts, &UnitRef::new("prob", 0), BackwardMode::Gradient).is_err());
    let other = fixtures::gabor_bank_net();
    assert!(backward(&other, &acts, &UnitRef::new("conv1", 0), BackwardMode::Gradient).is_err());
    assert!(backward(&net, &acts, &UnitRef::new("conv2", 16), BackwardMode::Gradient).is_err());
}
