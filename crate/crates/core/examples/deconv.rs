//! Finds the strongest activation of a unit in the fixture data and projects
//! it back to pixel space with both backward modes.
//!
//!     cargo run --release -p convis --example deconv -- [layer:channel]

use convis::fixtures;
use convis::vizdata::{enlarge, normalize_for_display, receptive_field, topk_scan, DisplayNorm};
use convis::{backward, forward, BackwardMode, Tensor, UnitRef};
use image::GrayImage;

fn to_gray(t: &Tensor) -> convis::Result<GrayImage> {
    // Channel sum, so a 3-channel diff becomes one signed map.
    let (c, h, w) = t.dims3()?;
    let sum = Tensor::from_fn((1, h, w), |_, y, x| (0..c).map(|ci| t.at(ci, y, x)).sum())?;
    let bytes = normalize_for_display(&sum, DisplayNorm::Symmetric)?;
    Ok(GrayImage::from_raw(w as u32, h as u32, bytes).expect("size matches"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let unit: UnitRef = std::env::args().nth(1).unwrap_or_else(|| "relu2:4".into()).parse()?;
    let net = fixtures::fixture_net();
    let samples = fixtures::fixture_dataset();
    let items = samples.iter().map(|s| Ok((s.id.clone(), s.image.sub(net.mean())?)));
    let items = items.collect::<convis::Result<Vec<_>>>()?;

    let top = topk_scan(&net, items.clone(), std::slice::from_ref(&unit), 3)?.remove(0);
    std::fs::create_dir_all("target/examples/deconv")?;
    for (rank, hit) in top.hits.iter().enumerate() {
        let (row, col) = hit.argmax;
        let site = UnitRef::at(&unit.layer, unit.channel, row, col);
        let x = &items.iter().find(|(id, _)| *id == hit.image_id).expect("id from scan").1;
        let acts = forward(&net, x)?;
        let rf = receptive_field(&net, &unit.layer, row, col)?;
        println!(
            "#{rank} {} act {:.3} at ({row},{col}), field rows {}..={} cols {}..={}",
            hit.image_id, hit.activation, rf.top, rf.bottom, rf.left, rf.right
        );
        for (mode, tag) in [(BackwardMode::Deconv, "deconv"), (BackwardMode::Gradient, "grad")] {
            let d = backward(&net, &acts, &site, mode)?;
            enlarge(&to_gray(&d)?, 16).save(format!("target/examples/deconv/{rank}_{tag}.png"))?;
        }
    }
    Ok(())
}
