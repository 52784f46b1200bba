//! Runs the four regularization presets on one unit with the same seed and
//! prints how each trades activation against image statistics.
//!
//!     cargo run --release -p convis --example presets -- [layer:channel] [seed]

use convis::fixtures;
use convis::regopt::regularizers::zeroed_fraction;
use convis::vizdata::montage;
use convis::{run_optimization, Preset, RegParams, UnitRef};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let unit: UnitRef = args.next().unwrap_or_else(|| "fc3:0".into()).parse()?;
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let net = fixtures::fixture_net();

    println!("preset    decay  blur  every  norm%  contrib%   final act   |x|max  zeroed");
    let mut results = Vec::new();
    for preset in Preset::ALL {
        let p = RegParams { seed, ..RegParams::preset(preset) };
        let r = run_optimization(&net, &unit, &p)?;
        let (d, b, e, n, c) = p.thetas();
        println!(
            "{preset}  {d:6}  {b:4}  {e:5}  {n:5}  {c:8}  {:10.3}  {:7.2}  {:6.3}",
            r.final_activation,
            r.final_image.max_abs(),
            zeroed_fraction(&r.final_image)?
        );
        results.push(r);
    }
    std::fs::create_dir_all("target/examples")?;
    montage(&results, 4, net.mean(), 1)?.save("target/examples/presets.png")?;
    Ok(())
}
