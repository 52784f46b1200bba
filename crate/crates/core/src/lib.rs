pub mod backprop;
pub mod error;
pub mod fixtures;
pub mod net;
pub mod regopt;
pub mod tensor;
pub mod vizdata;

pub use backprop::{backward, finite_diff_check, BackwardMode};
pub use error::{Error, Result};
pub use net::{forward, unit_activation, ActivationMap, Network, NetworkSpec, UnitRef};
pub use regopt::{run_optimization, OptRunResult, Preset, RegParams};
pub use tensor::Tensor;
