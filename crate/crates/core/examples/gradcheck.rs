//! Compares the analytic input gradient of random units against central
//! finite differences.
//!
//!     cargo run --release -p convis --example gradcheck -- [units] [epsilon]

use convis::fixtures;
use convis::{finite_diff_check, Tensor, UnitRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    let eps: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1e-2);
    let net = fixtures::fixture_net();
    let samples = fixtures::fixture_dataset();
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut worst = 0.0f64;
    for _ in 0..n {
        let x: Tensor = samples[rng.random_range(0..samples.len())].image.sub(net.mean())?;
        let li = rng.random_range(0..net.layers().len() - 1);
        let [c, h, w] = net.output_shape(li);
        let unit = UnitRef::at(&net.layers()[li].name, rng.random_range(0..c), rng.random_range(0..h), rng.random_range(0..w));
        let r = finite_diff_check(&net, &x, &unit, eps)?;
        println!(
            "{unit:16} max rel err {:.2e}  checked {:4}  small {:4}  kinks {}",
            r.max_rel_error,
            r.checked,
            r.skipped_small,
            r.non_differentiable.len()
        );
        worst = worst.max(r.max_rel_error);
    }
    println!("worst {worst:.2e}");
    Ok(())
}
