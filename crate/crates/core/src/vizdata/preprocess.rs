use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Resizes `image` (bilinear, straight to `H x W`, no aspect-preserving
/// crop), converts it to `f32` in `0..=255` and subtracts `mean`.
///
/// The channel count comes from `mean`: 3 reads RGB, 1 reads luma.
pub fn preprocess(image: &DynamicImage, mean: &Tensor) -> Result<Tensor> {
    let (c, h, w) = mean.dims3()?;
    let raw = match c {
        3 => rgb_tensor(image, h, w)?,
        1 => luma_tensor(image, h, w)?,
        _ => {
            return Err(Error::Unsupported(format!(
                "image input with {c} channels (expected 1 or 3)"
            )))
        }
    };
    raw.sub(mean)
}

/// Decodes an encoded image (PNG, JPEG) and preprocesses it.
pub fn preprocess_bytes(bytes: &[u8], mean: &Tensor) -> Result<Tensor> {
    let image = image::load_from_memory(bytes)?;
    preprocess(&image, mean)
}

fn rgb_tensor(image: &DynamicImage, h: usize, w: usize) -> Result<Tensor> {
    let rgb = image.to_rgb8();
    let src = Tensor::from_fn((3, rgb.height() as usize, rgb.width() as usize), |c, y, x| {
        f32::from(rgb.get_pixel(x as u32, y as u32).0[c])
    })?;
    resize_bilinear(&src, h, w)
}

fn luma_tensor(image: &DynamicImage, h: usize, w: usize) -> Result<Tensor> {
    let gray = image.to_luma8();
    let src = Tensor::from_fn((1, gray.height() as usize, gray.width() as usize), |_, y, x| {
        f32::from(gray.get_pixel(x as u32, y as u32).0[0])
    })?;
    resize_bilinear(&src, h, w)
}

/// Source index pair and blend weight for each output coordinate, with
/// half-pixel centres and edge clamping.
fn taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f32)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resize of every channel to `h x w`. Written as `a + (b - a) t`
/// so constant regions stay exactly constant.
pub(crate) fn resize_bilinear(src: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (c, sh, sw) = src.dims3()?;
    if sh == 0 || sw == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!("resize {sh}x{sw} -> {h}x{w}")));
    }
    if (sh, sw) == (h, w) {
        return Ok(src.clone());
    }
    let (ty, tx) = (taps(sh, h), taps(sw, w));
    let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
    Tensor::from_fn((c, h, w), |ci, y, x| {
        let (y0, y1, fy) = ty[y];
        let (x0, x1, fx) = tx[x];
        let top = lerp(src.at(ci, y0, x0), src.at(ci, y0, x1), fx);
        let bottom = lerp(src.at(ci, y1, x0), src.at(ci, y1, x1), fx);
        lerp(top, bottom, fy)
    })
}

/// One record of a dataset index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub filename: String,
    #[serde(default)]
    pub label: Option<String>,
}

/// A directory of images plus an `index.csv` with columns
/// `id,filename,label` (label may be empty).
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    entries: Vec<DatasetEntry>,
}

pub const INDEX_FILE: &str = "index.csv";

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let index = root.join(INDEX_FILE);
        let mut reader = csv::Reader::from_path(&index)?;
        let entries = reader
            .deserialize()
            .collect::<std::result::Result<Vec<DatasetEntry>, _>>()?;
        if entries.is_empty() {
            return Err(Error::Empty(format!("{} lists no images", index.display())));
        }
        Ok(Dataset { root, entries })
    }

    /// Writes images as PNG files plus the index.
    pub fn create(
        root: impl AsRef<Path>,
        images: impl IntoIterator<Item = (String, DynamicImage, Option<String>)>,
    ) -> Result<Dataset> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut entries = Vec::new();
        for (id, image, label) in images {
            let filename = format!("{id}.png");
            image.save(root.join(&filename))?;
            entries.push(DatasetEntry { id, filename, label });
        }
        let index = root.join(INDEX_FILE);
        let mut writer = csv::Writer::from_path(&index)?;
        for e in &entries {
            writer.serialize(e)?;
        }
        writer.flush().map_err(|e| Error::io(&index, e))?;
        Ok(Dataset { root, entries })
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(&self, entry: &DatasetEntry) -> Result<DynamicImage> {
        Ok(image::open(self.root.join(&entry.filename))?)
    }

    /// Loads and preprocesses every image, in index order.
    pub fn preprocessed(&self, mean: &Tensor) -> Result<Vec<(String, Tensor)>> {
        use rayon::prelude::*;
        self.entries
            .par_iter()
            .map(|e| Ok((e.id.clone(), preprocess(&self.load(e)?, mean)?)))
            .collect()
    }
}
