//! Dataset-side tooling and rendering: preprocessing with mean
//! subtraction, top-K mining, channel statistics, receptive fields, and
//! the grid / montage renderers.

mod preprocess;
mod receptive;
pub mod render;
mod topk;

pub use preprocess::{preprocess, preprocess_bytes, Dataset, DatasetEntry, INDEX_FILE};
pub use receptive::{receptive_field, Rect};
pub use render::{
    enlarge, heat_strip, montage, montage_images, normalize_for_display, png_bytes_gray, png_bytes_rgb,
    tile_layer, to_rgb, DisplayNorm, GridLayout,
};
pub use topk::{
    channel_stats, read_topk, rectified_layer, topk_scan, write_topk, ChannelStats, TopKEntry, TopKHit,
};
