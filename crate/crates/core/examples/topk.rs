//! Writes the fixture images as an on-disk dataset, mines the top-9 images
//! for a few units and round-trips the lists through CSV.
//!
//!     cargo run --release -p convis --example topk -- [out_dir]

use convis::fixtures::{self, SHAPE_CLASSES};
use convis::vizdata::{read_topk, to_rgb, topk_scan, write_topk, Dataset};
use convis::{Tensor, UnitRef};
use image::DynamicImage;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/examples/topk".into());
    let net = fixtures::fixture_net();
    let zero = Tensor::zeros([3, 8, 8])?;
    let images = fixtures::fixture_dataset().into_iter().map(|s| {
        let img = to_rgb(&s.image, &zero).expect("3x8x8 image");
        (s.id, DynamicImage::ImageRgb8(img), Some(SHAPE_CLASSES[s.label].to_string()))
    });
    let ds = Dataset::create(format!("{out}/images"), images)?;

    let units: Vec<UnitRef> = ["fc3:0", "fc3:1", "fc3:2", "relu2:4"]
        .iter()
        .map(|u| u.parse())
        .collect::<Result<_, _>>()?;
    let lists = topk_scan(&net, ds.preprocessed(net.mean())?, &units, 9)?;
    let csv = format!("{out}/topk.csv");
    write_topk(&csv, &lists)?;
    assert_eq!(read_topk(&csv)?, lists);

    for list in &lists {
        let ids: Vec<&str> = list.hits.iter().map(|h| h.image_id.as_str()).collect();
        println!("{}: {}", list.unit, ids.join(" "));
    }
    println!("wrote {csv}");
    Ok(())
}
