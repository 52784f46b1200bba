//! Sweeps one regularizer from off to its maximum strength.
//!
//!     cargo run --release -p convis --example sweep -- [decay|blur|norm|contribution] [k]

use convis::fixtures;
use convis::regopt::regularizers::zeroed_fraction;
use convis::regopt::{regularization_sweep, Regularizer};
use convis::vizdata::montage;
use convis::{RegParams, UnitRef};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let reg: Regularizer = args.next().unwrap_or_else(|| "norm".into()).parse()?;
    let k = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let net = fixtures::fixture_net();
    let unit = UnitRef::new("fc3", 2);

    let base = RegParams { steps: 200, ..RegParams::default() };
    let results = regularization_sweep(&net, &unit, reg, k, &base)?;
    for r in &results {
        println!(
            "{:?} {:?}  act {:9.3}  zeroed {:.3}",
            reg,
            r.params.thetas(),
            r.final_activation,
            zeroed_fraction(&r.final_image)?
        );
    }
    std::fs::create_dir_all("target/examples")?;
    montage(&results, k, net.mean(), 1)?.save(format!("target/examples/sweep_{reg:?}.png"))?;
    Ok(())
}
