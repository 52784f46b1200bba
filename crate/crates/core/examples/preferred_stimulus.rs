//! Synthesizes a preferred image for every class of the shape classifier and
//! lays them out next to a real example of each class.
//!
//!     cargo run --release -p convis --example preferred_stimulus -- [preset 1-4] [seed]

use convis::fixtures::{self, SHAPE_CLASSES};
use convis::vizdata::{montage_images, to_rgb};
use convis::{run_optimization, Preset, RegParams, UnitRef};
use image::imageops::{resize, FilterType};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let preset: Preset = args.next().as_deref().unwrap_or("3").parse()?;
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let net = fixtures::fixture_net();
    let samples = fixtures::fixture_dataset();
    let mut tiles = Vec::new();
    for (class, name) in SHAPE_CLASSES.iter().enumerate() {
        let params = RegParams { seed, ..RegParams::preset(preset) };
        let r = run_optimization(&net, &UnitRef::new("fc3", class), &params)?;
        println!(
            "{name:6} start {:8.3} final {:8.3}",
            r.activation_trace[0], r.final_activation
        );
        let example = samples.iter().find(|s| s.label == class).expect("every class present");
        for img in [to_rgb(&r.final_image, net.mean())?, to_rgb(&example.image, &net.mean().scale(0.0))?] {
            tiles.push(resize(&img, 64, 64, FilterType::Nearest));
        }
    }
    std::fs::create_dir_all("target/examples")?;
    let path = format!("target/examples/preferred_preset{}.png", preset.number());
    montage_images(&tiles, 2, 4).save(&path)?;
    println!("wrote {path} (left: synthesized, right: data)");
    Ok(())
}
