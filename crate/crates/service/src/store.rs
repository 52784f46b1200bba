//! Persisted optimization results, keyed by (net hash, unit, params hash, seed).
//!
//! Layout: `ROOT/NET/UNIT/PARAMS-sSEED/{result.json,meta.json,image.png}`,
//! where `NET` and `PARAMS` are 16-hex-digit SHA-256 prefixes and `UNIT` is
//! a path-safe form of the unit text.

use std::path::{Path, PathBuf};

use convis::vizdata::{png_bytes_rgb, to_rgb};
use convis::{Network, OptRunResult, RegParams, Tensor, UnitRef};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ServiceError};

pub const RESULT_FILE: &str = "result.json";
pub const META_FILE: &str = "meta.json";
pub const IMAGE_FILE: &str = "image.png";
pub const TOPK_FILE: &str = "topk.csv";

fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

/// Hash of the encoded weight file.
pub fn net_hash(net: &Network) -> String {
    short_hash(&convis::net::encode_network(net))
}

/// Hash of every parameter except the seed.
pub fn params_hash(params: &RegParams) -> String {
    let unseeded = RegParams {
        seed: 0,
        ..params.clone()
    };
    short_hash(&serde_json::to_vec(&unseeded).expect("params serialize"))
}

/// `conv5:151@6,6` -> `conv5_151_at6-6`, `fc8:3:mean` -> `fc8_3_mean`.
pub fn unit_slug(unit: &UnitRef) -> String {
    unit.to_string().replace(':', "_").replace('@', "_at").replace(',', "-")
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResultKey {
    pub net: String,
    pub unit: String,
    pub run: String,
}

impl ResultKey {
    pub fn new(net_hash: &str, unit: &UnitRef, params: &RegParams) -> Self {
        ResultKey {
            net: net_hash.to_string(),
            unit: unit_slug(unit),
            run: format!("{}-s{}", params_hash(params), params.seed),
        }
    }

    fn check(part: &str) -> Result<&str> {
        let ok = !part.is_empty()
            && part != "."
            && part != ".."
            && part.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c));
        if ok {
            Ok(part)
        } else {
            Err(ServiceError::BadRequest(format!("bad result path segment `{part}`")))
        }
    }

    /// `NET/UNIT/RUN`, also the URL suffix under `/results/`.
    pub fn path(&self) -> String {
        format!("{}/{}/{}", self.net, self.unit, self.run)
    }
}

/// Summary written next to each result, cheap to list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultMeta {
    pub key: ResultKey,
    pub unit: UnitRef,
    pub params: RegParams,
    pub seed: u64,
    pub final_activation: f32,
    pub first_activation: Option<f32>,
}

#[derive(Clone, Debug)]
pub struct ResultsStore {
    root: PathBuf,
}

impl ResultsStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResultsStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, key: &ResultKey) -> Result<PathBuf> {
        Ok(self
            .root
            .join(ResultKey::check(&key.net)?)
            .join(ResultKey::check(&key.unit)?)
            .join(ResultKey::check(&key.run)?))
    }

    pub fn topk_path(&self, net_hash: &str) -> PathBuf {
        self.root.join(net_hash).join(TOPK_FILE)
    }

    pub fn contains(&self, key: &ResultKey) -> bool {
        self.dir(key).is_ok_and(|d| d.join(META_FILE).is_file())
    }

    /// Writes result, meta and rendered image. Files are written to a
    /// temporary name and renamed, so readers never see partial files.
    pub fn save(&self, key: &ResultKey, result: &OptRunResult, mean: &Tensor) -> Result<ResultMeta> {
        let dir = self.dir(key)?;
        std::fs::create_dir_all(&dir).map_err(|e| ServiceError::io(&dir, e))?;
        let meta = ResultMeta {
            key: key.clone(),
            unit: result.unit.clone(),
            params: result.params.clone(),
            seed: result.params.seed,
            final_activation: result.final_activation,
            first_activation: result.activation_trace.first().copied(),
        };
        let png = png_bytes_rgb(&to_rgb(&result.final_image, mean)?)?;
        write_atomic(&dir.join(RESULT_FILE), &serde_json::to_vec(result)?)?;
        write_atomic(&dir.join(IMAGE_FILE), &png)?;
        // Meta last: its presence marks the entry complete.
        write_atomic(&dir.join(META_FILE), &serde_json::to_vec_pretty(&meta)?)?;
        Ok(meta)
    }

    pub fn meta(&self, key: &ResultKey) -> Result<ResultMeta> {
        Ok(serde_json::from_slice(&self.read(key, META_FILE)?)?)
    }

    pub fn load(&self, key: &ResultKey) -> Result<OptRunResult> {
        Ok(serde_json::from_slice(&self.read(key, RESULT_FILE)?)?)
    }

    /// Raw bytes of one of the stored files.
    pub fn read(&self, key: &ResultKey, file: &str) -> Result<Vec<u8>> {
        if ![RESULT_FILE, META_FILE, IMAGE_FILE].contains(&file) {
            return Err(ServiceError::NotFound(format!("result file `{file}`")));
        }
        let path = self.dir(key)?.join(file);
        std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ServiceError::NotFound(format!("result {}", key.path())),
            _ => ServiceError::io(path, e),
        })
    }

    /// Every complete result for any site of `layer:channel`, ordered by
    /// unit, params hash and seed.
    pub fn list_channel(&self, net_hash: &str, layer: &str, channel: usize) -> Result<Vec<ResultMeta>> {
        let net_dir = self.root.join(ResultKey::check(net_hash)?);
        let mut out = Vec::new();
        for unit_dir in sorted_dirs(&net_dir)? {
            for run_dir in sorted_dirs(&unit_dir)? {
                let Ok(bytes) = std::fs::read(run_dir.join(META_FILE)) else {
                    continue;
                };
                let meta: ResultMeta = serde_json::from_slice(&bytes)?;
                if meta.unit.layer == layer && meta.unit.channel == channel {
                    out.push(meta);
                }
            }
        }
        Ok(out)
    }
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(ServiceError::io(dir, e)),
    };
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| ServiceError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| ServiceError::io(path, e))
}
