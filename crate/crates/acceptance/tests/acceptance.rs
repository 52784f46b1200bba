//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//!     cargo test -p convis-acceptance --test acceptance

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use convis::fixtures::{self, GABOR_HIGH, GABOR_INPUT, GABOR_LOW};
use convis::net::LayerKind;
use convis::regopt::regularizers::{pixel_norms, zeroed_fraction};
use convis::regopt::{ascent_step, reg_blur, reg_clip_contribution, reg_clip_norm, reg_l2_decay, GradNorm};
use convis::tensor::{conv2d, gaussian_blur, percentile_threshold};
use convis::vizdata::{channel_stats, receptive_field, tile_layer, DisplayNorm, GridLayout};
use convis::{
    backward, finite_diff_check, forward, run_optimization, BackwardMode, Network, NetworkSpec, Preset, RegParams,
    Tensor, UnitRef,
};
use convis_service::{JobRequest, JobState, Service, ServiceOptions};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = (&'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    let checks: [Check; 10] = [
        (
            "gradient-correctness",
            Some(Duration::from_secs(60)),
            gradient_correctness,
        ),
        ("conv-oracle", Some(Duration::from_secs(60)), conv_oracle),
        ("regularizer-algebra", None, regularizer_algebra),
        ("linear-ascent", None, linear_ascent),
        ("preferred-stimulus", Some(Duration::from_secs(300)), preferred_stimulus),
        ("presets-verbatim", None, presets_verbatim),
        ("tiling-geometry", None, tiling_geometry),
        ("deconv-receptive-field", None, deconv_property),
        ("gabor-frequency-analog", Some(Duration::from_secs(60)), gabor_analog),
        ("service-determinism", None, service_determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in checks {
        let start = Instant::now();
        let mut o = check();
        let took = start.elapsed();
        if let Some(b) = budget {
            if took > b {
                o.pass = false;
                o.detail += &format!("; over the {}s budget", b.as_secs());
            }
        }
        println!(
            "{} {name}: {} [{:.2}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn fixture_inputs(net: &Network) -> Vec<(Tensor, usize)> {
    fixtures::fixture_dataset()
        .into_iter()
        .map(|s| (s.image.sub(net.mean()).unwrap(), s.label))
        .collect()
}

fn gradient_correctness() -> Outcome {
    let net = fixtures::fixture_net();
    let data = fixture_inputs(&net);
    let mut rng = common::rng(2024);
    let layers: Vec<usize> = (0..net.layers().len())
        .filter(|&i| net.layers()[i].kind != LayerKind::Softmax)
        .collect();
    let (mut worst, mut units, mut attempts, mut kinks) = (0.0f64, 0, 0, 0);
    while units < 20 && attempts < 500 {
        attempts += 1;
        let li = layers[rng.random_range(0..layers.len())];
        let [c, h, w] = net.output_shape(li);
        let unit = UnitRef::at(
            net.layers()[li].name.clone(),
            rng.random_range(0..c),
            rng.random_range(0..h),
            rng.random_range(0..w),
        );
        let x = &data[rng.random_range(0..data.len())].0;
        let report = finite_diff_check(&net, x, &unit, 1e-2).unwrap();
        // A unit sitting in a dead ReLU has an identically zero gradient.
        if report.checked == 0 {
            continue;
        }
        units += 1;
        kinks += report.non_differentiable.len();
        worst = worst.max(report.max_rel_error);
    }
    outcome(
        units == 20 && worst < 1e-3,
        format!("max relative error {worst:.3e} over {units} units, eps 1e-2, {kinks} kink pixels excluded (tol 1e-3)"),
    )
}

fn conv_oracle() -> Outcome {
    let mut rng = common::rng(7);
    let mut worst = 0.0f32;
    for _ in 0..100 {
        let (c, oc) = (rng.random_range(1..=4), rng.random_range(1..=5));
        let k = rng.random_range(1..=5);
        let stride = rng.random_range(1..=3);
        let mut pad = rng.random_range(0..k);
        // Input extents chosen so the stride tiles the padded input exactly.
        let (oh, ow) = (rng.random_range(1..=7), rng.random_range(1..=7));
        if (oh.min(ow) - 1) * stride + k <= 2 * pad {
            pad = 0;
        }
        let (h, w) = ((oh - 1) * stride + k - 2 * pad, (ow - 1) * stride + k - 2 * pad);
        let x = common::random_tensor(&mut rng, [c, h, w], 1.0);
        let n = oc * c * k * k;
        let filters = Tensor::new([oc, c, k, k], (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()).unwrap();
        let b: Vec<f32> = (0..oc).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let got = conv2d(&x, &filters, &b, stride, pad).unwrap();
        worst = worst.max(
            got.max_abs_diff(&common::naive_conv(&x, &filters, &b, stride, pad))
                .unwrap(),
        );
    }
    outcome(
        worst <= 1e-5,
        format!("max abs diff {worst:.3e} over 100 configurations (tol 1e-5)"),
    )
}

fn regularizer_algebra() -> Outcome {
    const N: usize = 200;
    let mut rng = common::rng(11);
    let (mut decay_err, mut blur_err) = (0.0f64, 0.0f32);
    let (mut clip_ok, mut identity_ok) = (true, true);
    for _ in 0..N {
        let shape = [
            rng.random_range(1..=3),
            rng.random_range(4..=20),
            rng.random_range(4..=20),
        ];
        let x = common::random_tensor(&mut rng, shape, 1.0);

        let theta = rng.random_range(0.0..0.99);
        let lhs = reg_l2_decay(&x, theta).l2_norm();
        let rhs = (1.0 - theta) * x.l2_norm();
        decay_err = decay_err.max((lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE));

        let sigma = rng.random_range(1.0..=3.0);
        let twice = gaussian_blur(&gaussian_blur(&x, sigma).unwrap(), sigma).unwrap();
        let once = gaussian_blur(&x, sigma * 2f64.sqrt()).unwrap();
        blur_err = blur_err.max(twice.max_abs_diff(&once).unwrap());

        let pct = rng.random_range(1.0..=99.0);
        let clipped = reg_clip_norm(&x, pct).unwrap();
        let norms = pixel_norms(&x).unwrap();
        let n = norms.len() as f64;
        let threshold = percentile_threshold(&norms, pct).unwrap();
        let survivors_above = pixel_norms(&clipped)
            .unwrap()
            .iter()
            .zip(&norms)
            .all(|(&after, &before)| after == 0.0 || (after == before && before > threshold));
        clip_ok &= zeroed_fraction(&clipped).unwrap() >= pct / 100.0 - 1.0 / n && survivors_above;

        let g = common::random_tensor(&mut rng, shape, 1.0);
        let off = RegParams::default();
        identity_ok &= reg_l2_decay(&x, 0.0) == x
            && reg_blur(
                &x,
                &RegParams {
                    theta_b_every: 1,
                    ..off.clone()
                },
                0,
            )
            .unwrap()
                == x
            && reg_clip_norm(&x, 0.0).unwrap() == x
            && reg_clip_contribution(&x, &g, 0.0).unwrap() == x;
    }
    outcome(
        decay_err <= 1e-6 && blur_err <= 5e-3 && clip_ok && identity_ok,
        format!(
            "decay rel err {decay_err:.2e} (tol 1e-6), blur semigroup {blur_err:.2e} (tol 5e-3), \
             norm clip {}, identity at 0 {}, {N} inputs each",
            if clip_ok { "ok" } else { "violated" },
            if identity_ok { "ok" } else { "violated" }
        ),
    )
}

fn linear_ascent() -> Outcome {
    let mut rng = common::rng(5);
    let n = 16;
    let w: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let spec =
        NetworkSpec::parse("input = [1, 4, 4]\n[[layer]]\nname = \"fc\"\nkind = \"fullyconnected\"\noutputs = 1\n")
            .unwrap();
    let mut values = w.clone();
    values.push(0.25);
    let net = Network::from_values(spec, &values).unwrap();
    let w_sq: f64 = w.iter().map(|&v| f64::from(v).powi(2)).sum();
    let eta = 0.01;
    let params = RegParams {
        eta,
        grad_norm: GradNorm::Raw,
        ..RegParams::default()
    };
    let unit = UnitRef::new("fc", 0);
    let mut x = common::random_tensor(&mut rng, [1, 4, 4], 1.0);
    let mut prev = convis::unit_activation(&forward(&net, &x).unwrap(), &unit).unwrap();
    let mut worst = 0.0f64;
    for step in 0..50 {
        let (next, a) = ascent_step(&net, &x, &unit, &params, step).unwrap();
        assert_eq!(a, prev);
        x = next;
        let now = convis::unit_activation(&forward(&net, &x).unwrap(), &unit).unwrap();
        let expected = eta * w_sq;
        worst = worst.max((f64::from(now - prev) - expected).abs() / expected);
        prev = now;
    }
    outcome(
        worst <= 1e-4,
        format!("per-step increase vs eta*|w|^2: max rel err {worst:.2e} over 50 steps (tol 1e-4)"),
    )
}

fn preferred_stimulus() -> Outcome {
    let net = fixtures::fixture_net();
    let data = fixture_inputs(&net);
    let layer = net.layer_index(fixtures::FIXTURE_CLASS_LAYER).unwrap();
    let all: Vec<Vec<f32>> = data
        .iter()
        .map(|(x, _)| forward(&net, x).unwrap().output(layer).data().to_vec())
        .collect();
    let base = RegParams::preset(Preset::Three);
    let mut details = Vec::new();
    let mut pass = true;
    for class in 0..3 {
        let scores: Vec<f32> = all.iter().map(|v| v[class]).collect();
        let p95 = percentile_threshold(&scores, 95.0).unwrap();
        let unit = UnitRef::new(fixtures::FIXTURE_CLASS_LAYER, class);
        let wins = (0..3)
            .filter(|&seed| {
                let p = RegParams { seed, ..base.clone() };
                run_optimization(&net, &unit, &p).unwrap().final_activation > p95
            })
            .count();
        pass &= wins >= 2;
        details.push(format!("class {class}: {wins}/3 above p95 {p95:.2}"));
    }
    outcome(pass, format!("preset-3, 500 steps; {}", details.join(", ")))
}

fn presets_verbatim() -> Outcome {
    let rows = [
        (0.0, 0.5, 4, 50.0, 0.0),
        (0.3, 0.0, 0, 20.0, 0.0),
        (0.0001, 1.0, 4, 0.0, 0.0),
        (0.0, 0.5, 4, 0.0, 90.0),
    ];
    let ok = Preset::ALL
        .iter()
        .zip(rows)
        .all(|(p, row)| RegParams::preset(*p).thetas() == row && p.to_string().parse::<Preset>().unwrap() == *p);
    outcome(ok, "four presets equal the four table rows")
}

fn tiling_geometry() -> Outcome {
    let conv5 = Tensor::zeros([256, 13, 13]).unwrap();
    let (img5, l5) = tile_layer(&conv5, 0, DisplayNorm::MinMax).unwrap();
    let conv1 = Tensor::zeros([96, 55, 55]).unwrap();
    let (img1, l1) = tile_layer(&conv1, 0, DisplayNorm::MinMax).unwrap();
    let round_trip = |l: &GridLayout| {
        (0..l.count).all(|c| {
            let (y, x) = l.origin(c);
            l.cell_of(c) == (c / l.cols, c % l.cols)
                && l.item_at(y, x) == Some(c)
                && l.item_at(y + l.cell_h - 1, x + l.cell_w - 1) == Some(c)
        })
    };
    let ok = (l5.rows, l5.cols) == (16, 16)
        && img5.dimensions() == (208, 208)
        && (l1.rows, l1.cols) == (10, 10)
        && img1.dimensions() == (550, 550)
        && round_trip(&l5)
        && round_trip(&l1)
        && round_trip(&GridLayout::square(96, 55, 55, 3));
    outcome(
        ok,
        format!(
            "256x13x13 -> {}x{} grid {}x{} px; 96x55x55 -> {}x{} px; cell mapping round-trips",
            l5.rows,
            l5.cols,
            img5.width(),
            img5.height(),
            img1.width(),
            img1.height()
        ),
    )
}

fn deconv_property() -> Outcome {
    let net = fixtures::fixture_net();
    let data = fixture_inputs(&net);
    let first_relu = net.layers().iter().position(|l| l.kind == LayerKind::Relu).unwrap();
    let (mut checked, mut outside, mut nonzero) = (0usize, 0usize, 0usize);
    for (x, _) in data.iter().step_by(60) {
        let acts = forward(&net, x).unwrap();
        for li in first_relu..net.layers().len() {
            if net.layers()[li].kind == LayerKind::Softmax {
                continue;
            }
            let [c, h, w] = net.output_shape(li);
            for ch in 0..c {
                for y in 0..h {
                    for xx in 0..w {
                        let name = &net.layers()[li].name;
                        let unit = UnitRef::at(name.clone(), ch, y, xx);
                        let d = backward(&net, &acts, &unit, BackwardMode::Deconv).unwrap();
                        let rf = receptive_field(&net, name, y, xx).unwrap();
                        let [_, ih, iw] = net.input_shape();
                        checked += 1;
                        let mut any = false;
                        for ci in 0..net.input_shape()[0] {
                            for iy in 0..ih {
                                for ix in 0..iw {
                                    if d.at(ci, iy, ix) != 0.0 {
                                        any = true;
                                        outside += usize::from(!rf.contains(iy, ix));
                                    }
                                }
                            }
                        }
                        nonzero += usize::from(any);
                    }
                }
            }
        }
    }

    let stripped = net.without_kinds(&["relu", "lrn"]).unwrap();
    let mut rng = common::rng(3);
    let mut mismatches = 0;
    let mut compared = 0;
    for _ in 0..10 {
        let x = common::random_tensor(&mut rng, net.input_shape(), 100.0);
        let acts = forward(&stripped, &x).unwrap();
        for (li, layer) in stripped.layers().iter().enumerate() {
            if layer.kind == LayerKind::Softmax {
                continue;
            }
            let [c, h, w] = stripped.output_shape(li);
            let unit = UnitRef::at(
                layer.name.clone(),
                rng.random_range(0..c),
                rng.random_range(0..h),
                rng.random_range(0..w),
            );
            let g = backward(&stripped, &acts, &unit, BackwardMode::Gradient).unwrap();
            let d = backward(&stripped, &acts, &unit, BackwardMode::Deconv).unwrap();
            compared += 1;
            mismatches += usize::from(g != d);
        }
    }
    outcome(
        outside == 0 && nonzero > 0 && mismatches == 0,
        format!(
            "{checked} deconv maps ({nonzero} nonzero), {outside} nonzero pixels outside the receptive field; \
             stripped net: {mismatches}/{compared} gradient/deconv mismatches"
        ),
    )
}

fn gabor_analog() -> Outcome {
    let net = fixtures::gabor_bank_net();
    let images = (0..200).map(|i| fixtures::pink_noise(GABOR_INPUT, 50.0, i).unwrap());
    let stats = channel_stats(&net, images, "relu1").unwrap();
    let group = |r: std::ops::Range<usize>| stats.means[r.clone()].iter().sum::<f64>() / r.len() as f64;
    let (low, high) = (group(GABOR_LOW), group(GABOR_HIGH));
    outcome(
        low > high,
        format!(
            "mean rectified activation low-frequency {low:.3} vs high-frequency {high:.3} over {} images",
            stats.images
        ),
    )
}

/// Byte-level body of a GET through the router, with its frame header.
async fn get(app: &axum::Router, uri: &str) -> (u16, Option<String>, Vec<u8>) {
    use tower::ServiceExt;
    let req = axum::http::Request::get(uri).body(axum::body::Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let frame = resp
        .headers()
        .get(convis_service::http::FRAME_HEADER)
        .map(|v| v.to_str().unwrap().to_string());
    let status = resp.status().as_u16();
    let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, frame, body.to_vec())
}

async fn post(app: &axum::Router, uri: &str, body: Vec<u8>) -> (u16, serde_json::Value) {
    use tower::ServiceExt;
    let req = axum::http::Request::post(uri)
        .body(axum::body::Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null))
}

/// The layer view JSON without the fields that name the frame.
fn strip_frame(mut v: serde_json::Value) -> serde_json::Value {
    let o = v.as_object_mut().unwrap();
    o.remove("frame");
    o.remove("image");
    o.remove("newer");
    v
}

fn service_determinism() -> Outcome {
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let services: Vec<_> = dirs
            .iter()
            .map(|d| Service::new(fixtures::fixture_net(), ServiceOptions::new(d.path())).unwrap())
            .collect();
        let apps: Vec<_> = services.iter().map(|s| convis_service::http::router(s.clone())).collect();

        // Identical frames: every layer's JSON summary and PNG must match.
        let sample = &fixtures::fixture_dataset()[0];
        let rgb = convis::vizdata::to_rgb(&sample.image, &Tensor::zeros([3, 8, 8]).unwrap()).unwrap();
        let frame = convis::vizdata::png_bytes_rgb(&rgb).unwrap();
        let app = &apps[0];
        let (_, created) = post(app, "/session", Vec::new()).await;
        let id = created["session"].as_str().unwrap().to_string();
        let mut counters = Vec::new();
        let mut payloads = Vec::new();
        for _ in 0..2 {
            let (status, ack) = post(app, &format!("/session/{id}/frame"), frame.clone()).await;
            assert_eq!(status, 200, "{ack}");
            counters.push(ack["frame"].as_u64().unwrap());
            let mut views = Vec::new();
            for layer in services[0].net().layers() {
                let base = format!("/session/{id}/layer/{}", layer.name);
                let (_, _, json) = get(app, &base).await;
                let (_, f, png) = get(app, &format!("{base}?format=png")).await;
                assert_eq!(f.as_deref(), Some(counters.last().unwrap().to_string().as_str()));
                views.push((strip_frame(serde_json::from_slice(&json).unwrap()), png));
            }
            payloads.push(views);
        }
        let layers_equal = payloads[0] == payloads[1];

        // Identical jobs on two independent services, plus a cached repeat.
        let req = JobRequest {
            unit: "fc3:0".into(),
            preset: Some("preset-3".into()),
            steps: Some(100),
            seed: Some(3),
            ..JobRequest::default()
        };
        let mut files = Vec::new();
        let mut rising = true;
        for svc in [&services[0], &services[1], &services[0]] {
            let id = svc.start_job(&req).unwrap();
            let job = svc.wait_job(&id, Duration::from_secs(120)).unwrap();
            assert_eq!(job.state, JobState::Done, "{:?}", job.error);
            let key = &job.results[0].key;
            let result = svc.store().load(key).unwrap();
            rising &= result.final_activation > result.activation_trace[0];
            files.push((
                svc.result_file(key, "result.json").unwrap(),
                svc.result_file(key, "image.png").unwrap(),
            ));
        }
        let jobs_equal = files[0] == files[1] && files[0] == files[2];
        outcome(
            layers_equal && jobs_equal && counters == [1, 2] && rising,
            format!(
                "frames {counters:?}: {} layer payloads {}; preset-3 job results {} across services and cache, trace rising {rising}",
                payloads[0].len(),
                if layers_equal { "byte-identical" } else { "differ" },
                if jobs_equal { "byte-identical" } else { "differ" },
            ),
        )
    })
}
