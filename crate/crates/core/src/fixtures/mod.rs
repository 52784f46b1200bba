//! Small deterministic networks and data for tests, examples and demos: a
//! synthetic 3-class shape dataset with the classifier trained on it, a
//! hand-built Gabor filter bank, 1/f noise images, and an AlexNet-shaped
//! spec.

mod gabor;
mod shapes;
mod train;

pub use gabor::{gabor_bank_net, gabor_kernel, pink_noise, GABOR_HIGH, GABOR_INPUT, GABOR_LOW};
pub use shapes::{mean_image, shapes_dataset, ShapeSample, SHAPE_CLASSES};
pub use train::{accuracy, train_classifier, TrainConfig, TrainReport};

use crate::error::Result;
use crate::net::{decode_network, Network, NetworkSpec};

/// Layer stack of the shape classifier; the mean image is embedded in the
/// weight file.
pub const FIXTURE_SPEC: &str = r#"name = "shapes3"
input = [3, 8, 8]
mean = "embedded"

[[layer]]
name = "conv1"
kind = "conv"
filters = 8
kernel = 3
pad = 1

[[layer]]
name = "relu1"
kind = "relu"

[[layer]]
name = "pool1"
kind = "maxpool"
kernel = 2
stride = 2

[[layer]]
name = "norm1"
kind = "lrn"
size = 5
k = 2.0
alpha = 0.0001
beta = 0.75

[[layer]]
name = "conv2"
kind = "conv"
filters = 16
kernel = 3
pad = 1

[[layer]]
name = "relu2"
kind = "relu"

[[layer]]
name = "fc3"
kind = "fullyconnected"
outputs = 3

[[layer]]
name = "prob"
kind = "softmax"
"#;

/// Seed of the training set the committed fixture was fit to.
pub const FIXTURE_DATA_SEED: u64 = 7;
/// Images per class in that training set.
pub const FIXTURE_PER_CLASS: usize = 100;
/// Train accuracy of the committed fixture, measured when it was trained.
pub const FIXTURE_TRAIN_ACCURACY: f64 = 1.0;
/// The class-score layer (pre-softmax).
pub const FIXTURE_CLASS_LAYER: &str = "fc3";

static FIXTURE_BYTES: &[u8] = include_bytes!("../../fixtures/shapes3.cvnet");

pub fn fixture_spec() -> NetworkSpec {
    NetworkSpec::parse(FIXTURE_SPEC).expect("fixture spec parses")
}

/// The trained shape classifier.
pub fn fixture_net() -> Network {
    decode_network(FIXTURE_BYTES).expect("committed fixture decodes")
}

/// The training set of [`fixture_net`].
pub fn fixture_dataset() -> Vec<ShapeSample> {
    shapes_dataset(FIXTURE_PER_CLASS, FIXTURE_DATA_SEED)
}

/// AlexNet-shaped layer stack (3x227x227 input, conv5 256x13x13, 1000-way
/// softmax) with its usual layer names.
pub const ALEXNET_SPEC: &str = r#"name = "alexnet"
input = [3, 227, 227]

[[layer]]
name = "conv1"
kind = "conv"
filters = 96
kernel = 11
stride = 4
[[layer]]
name = "relu1"
kind = "relu"
[[layer]]
name = "pool1"
kind = "maxpool"
kernel = 3
stride = 2
[[layer]]
name = "norm1"
kind = "lrn"
size = 5
k = 1.0
alpha = 0.0001
beta = 0.75

[[layer]]
name = "conv2"
kind = "conv"
filters = 256
kernel = 5
pad = 2
[[layer]]
name = "relu2"
kind = "relu"
[[layer]]
name = "pool2"
kind = "maxpool"
kernel = 3
stride = 2
[[layer]]
name = "norm2"
kind = "lrn"
size = 5
k = 1.0
alpha = 0.0001
beta = 0.75

[[layer]]
name = "conv3"
kind = "conv"
filters = 384
kernel = 3
pad = 1
[[layer]]
name = "relu3"
kind = "relu"

[[layer]]
name = "conv4"
kind = "conv"
filters = 384
kernel = 3
pad = 1
[[layer]]
name = "relu4"
kind = "relu"

[[layer]]
name = "conv5"
kind = "conv"
filters = 256
kernel = 3
pad = 1
[[layer]]
name = "relu5"
kind = "relu"
[[layer]]
name = "pool5"
kind = "maxpool"
kernel = 3
stride = 2

[[layer]]
name = "fc6"
kind = "fullyconnected"
outputs = 4096
[[layer]]
name = "relu6"
kind = "relu"
[[layer]]
name = "fc7"
kind = "fullyconnected"
outputs = 4096
[[layer]]
name = "relu7"
kind = "relu"
[[layer]]
name = "fc8"
kind = "fullyconnected"
outputs = 1000
[[layer]]
name = "prob"
kind = "softmax"
"#;

pub fn alexnet_spec() -> Result<NetworkSpec> {
    NetworkSpec::parse(ALEXNET_SPEC)
}
