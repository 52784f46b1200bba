mod common;

use convis::fixtures;
use convis::regopt::regularizers::zeroed_fraction;
use convis::regopt::{
    hyperparam_random_search, reg_blur, reg_clip_contribution, reg_clip_norm, reg_l2_decay, regularization_sweep,
    sample_params, Regularizer, SearchRanges,
};
use convis::{run_optimization, Network, NetworkSpec, Preset, RegParams, Tensor, UnitRef};

fn t(shape: [usize; 3], v: &[f32]) -> Tensor {
    Tensor::new(shape, v.to_vec()).unwrap()
}

#[test]
fn regularizer_examples() {
    assert_eq!(reg_l2_decay(&t([1, 1, 2], &[2.0, -4.0]), 0.5).data(), &[1.0, -2.0]);
    let x = common::random_tensor(&mut common::rng(1), [3, 5, 5], 10.0);
    let ratio = reg_l2_decay(&x, 0.3).l2_norm() / x.l2_norm();
    assert!((ratio - 0.7).abs() < 1e-6);

    assert_eq!(reg_clip_norm(&t([1, 1, 2], &[3.0, 1.0]), 50.0).unwrap().data(), &[3.0, 0.0]);
    let x2 = t([1, 1, 2], &[1.0, 2.0]);
    let g2 = t([1, 1, 2], &[3.0, -1.0]);
    assert_eq!(reg_clip_contribution(&x2, &g2, 50.0).unwrap().data(), &[1.0, 0.0]);
    assert!(reg_clip_contribution(&x2, &t([1, 1, 3], &[0.0; 3]), 50.0).is_err());
    // A zero gradient ties every contribution at 0.
    let zeroed = reg_clip_contribution(&x, &Tensor::zeros([3, 5, 5]).unwrap(), 10.0).unwrap();
    assert!(zeroed.data().iter().all(|&v| v == 0.0));
    // pct = 100 zeroes everything.
    assert_eq!(zeroed_fraction(&reg_clip_norm(&x, 100.0).unwrap()).unwrap(), 1.0);
}

#[test]
fn table_clip_rates_on_random_images() {
    let mut rng = common::rng(2);
    for _ in 0..20 {
        let x = common::random_tensor(&mut rng, [3, 16, 16], 50.0);
        let g = common::random_tensor(&mut rng, [3, 16, 16], 1.0);
        assert!(zeroed_fraction(&reg_clip_norm(&x, 50.0).unwrap()).unwrap() >= 0.5);
        assert!(zeroed_fraction(&reg_clip_contribution(&x, &g, 90.0).unwrap()).unwrap() >= 0.9);
    }
}

#[test]
fn blur_schedule() {
    let x = common::random_tensor(&mut common::rng(3), [1, 6, 6], 1.0);
    let p = RegParams::preset(Preset::Three);
    let blurred: Vec<usize> = (0..8).filter(|&s| reg_blur(&x, &p, s).unwrap() != x).collect();
    assert_eq!(blurred, vec![0, 4]);
    let never = RegParams { theta_b_every: 0, ..p.clone() };
    assert!((0..8).all(|s| reg_blur(&x, &never, s).unwrap() == x));
    let zero_width = RegParams { theta_b_width: 0.0, ..p };
    assert!((0..8).all(|s| reg_blur(&x, &zero_width, s).unwrap() == x));
}

#[test]
fn preset_three_trace_rises_over_100_steps() {
    let net = fixtures::fixture_net();
    for class in 0..3 {
        let p = RegParams {
            steps: 100,
            ..RegParams::preset(Preset::Three)
        };
        let r = run_optimization(&net, &UnitRef::new("fc3", class), &p).unwrap();
        assert_eq!(r.activation_trace.len(), 100);
        assert!(r.final_activation > r.activation_trace[0], "class {class}: {:?}", r.activation_trace);
    }
}

#[test]
fn unregularized_linear_trace_strictly_increases() {
    let spec = NetworkSpec::parse(
        "input = [1, 2, 2]\n[[layer]]\nname = \"fc\"\nkind = \"fullyconnected\"\noutputs = 1\n",
    )
    .unwrap();
    let net = Network::from_values(spec, &[1.0, -2.0, 0.5, 3.0, 0.0]).unwrap();
    let r = run_optimization(&net, &UnitRef::new("fc", 0), &RegParams { steps: 50, ..RegParams::default() }).unwrap();
    assert!(r.activation_trace.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn nine_seeds_nine_distinct_images() {
    let net = fixtures::fixture_net();
    let unit = UnitRef::new("fc3", 1);
    let images: Vec<Tensor> = (0..9)
        .map(|seed| {
            let p = RegParams {
                seed,
                steps: 100,
                ..RegParams::preset(Preset::One)
            };
            run_optimization(&net, &unit, &p).unwrap().final_image
        })
        .collect();
    for i in 0..9 {
        for j in i + 1..9 {
            assert!(images[i].max_abs_diff(&images[j]).unwrap() > 0.0, "{i} == {j}");
        }
    }
}

#[test]
fn determinism_across_thread_pools() {
    let net = fixtures::fixture_net();
    let unit: UnitRef = "conv2:5".parse().unwrap();
    let p = RegParams {
        steps: 60,
        seed: 9,
        ..RegParams::preset(Preset::Four)
    };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let a = one.install(|| run_optimization(&net, &unit, &p).unwrap());
    let b = run_optimization(&net, &unit, &p).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_endpoints_and_monotone_clip() {
    let net = fixtures::fixture_net();
    let unit = UnitRef::new("fc3", 2);
    let base = RegParams {
        steps: 80,
        seed: 4,
        ..RegParams::default()
    };
    let decay = regularization_sweep(&net, &unit, Regularizer::Decay, 2, &base).unwrap();
    assert_eq!(decay[0].params.theta_decay, 0.0);
    assert_eq!(decay[1].params.theta_decay, 0.3);
    assert_eq!(decay[0], run_optimization(&net, &unit, &base.unregularized()).unwrap());

    let norm = regularization_sweep(&net, &unit, Regularizer::Norm, 4, &base).unwrap();
    let fractions: Vec<f64> = norm.iter().map(|r| zeroed_fraction(&r.final_image).unwrap()).collect();
    assert!(fractions.windows(2).all(|w| w[1] >= w[0]), "{fractions:?}");
    assert!(regularization_sweep(&net, &unit, Regularizer::Blur, 1, &base).is_err());
    assert!("tv".parse::<Regularizer>().is_err());
}

#[test]
fn random_search_of_300() {
    let net = fixtures::fixture_net();
    let unit = UnitRef::new("fc3", 0);
    let base = RegParams {
        steps: 20,
        ..RegParams::default()
    };
    let ranges = SearchRanges::default();
    let results = hyperparam_random_search(&net, &unit, 300, &ranges, 77, &base).unwrap();
    assert_eq!(results.len(), 300);
    assert!(results.windows(2).all(|w| w[0].final_activation >= w[1].final_activation));
    assert_eq!(sample_params(&ranges, 300, 77, &base).unwrap(), sample_params(&ranges, 300, 77, &base).unwrap());
}

#[test]
fn degenerate_search_equals_single_run() {
    let net = fixtures::fixture_net();
    let unit = UnitRef::new("fc3", 1);
    let p = RegParams {
        steps: 40,
        ..RegParams::preset(Preset::Two)
    };
    let ranges = SearchRanges::fixed(&p);
    let found = hyperparam_random_search(&net, &unit, 1, &ranges, 5, &p).unwrap();
    let sampled = &sample_params(&ranges, 1, 5, &p).unwrap()[0];
    assert_eq!(sampled.thetas(), p.thetas());
    assert_eq!(found[0], run_optimization(&net, &unit, sampled).unwrap());
    let bad = SearchRanges {
        eta: (2.0, 1.0),
        ..SearchRanges::default()
    };
    assert!(hyperparam_random_search(&net, &unit, 3, &bad, 0, &p).is_err());
}
