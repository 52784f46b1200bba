//! Trains the 3-class shape classifier and writes it as a weight file.
//!
//!     cargo run --release -p convis --example train_fixture -- [out.cvnet]

use convis::fixtures::{self, TrainConfig};
use convis::net::save_network;
use convis::Network;

fn main() -> convis::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "crates/core/fixtures/shapes3.cvnet".into());
    let samples = fixtures::fixture_dataset();
    let mean = fixtures::mean_image(samples.iter().map(|s| &s.image))?;
    let data = samples
        .iter()
        .map(|s| Ok((s.image.sub(&mean)?, s.label)))
        .collect::<convis::Result<Vec<_>>>()?;

    let net = Network::random(fixtures::fixture_spec(), 11)?.with_mean(mean)?;
    let cfg = TrainConfig::default();
    let (net, report) = fixtures::train_classifier(net, &data, fixtures::FIXTURE_CLASS_LAYER, &cfg)?;
    for (e, loss) in report.epoch_loss.iter().enumerate() {
        println!("epoch {e:3}  loss {loss:.5}");
    }
    println!("train accuracy {:.4} on {} images", report.accuracy, data.len());
    save_network(&net, &out)?;
    println!("wrote {out}");
    Ok(())
}
