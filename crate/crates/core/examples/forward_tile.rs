//! Runs one image through a network and writes every layer as a channel grid.
//!
//!     cargo run --release -p convis --example forward_tile -- [net.cvnet] [image.png] [out_dir]
//!
//! Without arguments it uses the bundled shape classifier and one of its
//! training images.

use std::path::PathBuf;

use convis::fixtures;
use convis::net::load_network;
use convis::vizdata::{enlarge, heat_strip, preprocess, tile_layer, DisplayNorm};
use convis::{forward, Network};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let net: Network = match args.first() {
        Some(path) => load_network(path)?,
        None => fixtures::fixture_net(),
    };
    let x = match args.get(1) {
        Some(path) => preprocess(&image::open(path)?, net.mean())?,
        None => fixtures::fixture_dataset()[0].image.sub(net.mean())?,
    };
    let out = PathBuf::from(args.get(2).map_or("target/examples/forward_tile", String::as_str));
    std::fs::create_dir_all(&out)?;

    let acts = forward(&net, &x)?;
    for (i, layer) in net.layers().iter().enumerate() {
        let t = acts.output(i);
        let [c, h, w] = net.output_shape(i);
        let img = if h == 1 && w == 1 {
            heat_strip(t, 12, 24, DisplayNorm::MinMax)?
        } else {
            let (grid, layout) = tile_layer(t, 1, DisplayNorm::MinMax)?;
            println!("{:8} {c:4} x {h:3} x {w:3}  grid {}x{}", layer.name, layout.rows, layout.cols);
            enlarge(&grid, (96 / h.max(w)).max(1) as u32)
        };
        img.save(out.join(format!("{:02}_{}.png", i, layer.name)))?;
    }
    println!("layers written to {}", out.display());
    Ok(())
}
