//! Mean rectified response of a fixed Gabor filter bank to pink noise. The
//! low-frequency filters respond more strongly, since 1/f noise carries most
//! of its energy at long wavelengths.
//!
//!     cargo run --release -p convis --example gabor_stats -- [images]

use convis::fixtures::{self, GABOR_HIGH, GABOR_INPUT, GABOR_LOW};
use convis::vizdata::channel_stats;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let net = fixtures::gabor_bank_net();
    let images = (0..n).map(|seed| fixtures::pink_noise(GABOR_INPUT, 50.0, seed).expect("valid shape"));
    let stats = channel_stats(&net, images, "relu1")?;
    stats.write_table(std::io::stdout().lock())?;

    let avg = |r: std::ops::Range<usize>| stats.means[r.clone()].iter().sum::<f64>() / r.len() as f64;
    println!("low-frequency mean {:.3}, high-frequency mean {:.3}", avg(GABOR_LOW), avg(GABOR_HIGH));
    Ok(())
}
