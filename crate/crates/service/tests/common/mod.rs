#![allow(dead_code)]

use std::sync::Arc;

use convis::fixtures;
use convis::vizdata::{png_bytes_rgb, to_rgb};
use convis::Tensor;
use convis_service::{Service, ServiceOptions};

/// PNG bytes of fixture image `i`, as a client would upload it.
pub fn frame_png(i: usize) -> Vec<u8> {
    let sample = &fixtures::fixture_dataset()[i];
    png_bytes_rgb(&to_rgb(&sample.image, &Tensor::zeros([3, 8, 8]).unwrap()).unwrap()).unwrap()
}

pub fn service(dir: &tempfile::TempDir) -> Arc<Service> {
    Service::new(fixtures::fixture_net(), ServiceOptions::new(dir.path())).unwrap()
}
