//! Random search over regularization settings; prints the best few.
//!
//!     cargo run --release -p convis --example random_search -- [n] [seed]

use convis::fixtures;
use convis::regopt::{hyperparam_random_search, SearchRanges};
use convis::{RegParams, UnitRef};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let net = fixtures::fixture_net();
    let base = RegParams { steps: 100, ..RegParams::default() };

    let results = hyperparam_random_search(&net, &UnitRef::new("fc3", 1), n, &SearchRanges::default(), seed, &base)?;
    println!("rank  activation  eta      (decay, blur, every, norm%, contrib%)");
    for (i, r) in results.iter().take(10).enumerate() {
        println!("{i:4}  {:10.3}  {:<7.3}  {:?}", r.final_activation, r.params.eta, r.params.thetas());
    }
    Ok(())
}
