//! Binary model checkpoints with a JSON sidecar.
//!
//! Layout (little endian): `b"FFCK"`, `u32` version, `u32` F, `u32` hidden,
//! `u32` layers, then every parameter as `f32` in the order of
//! [`MaskEstimator::params`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{MaskEstimator, Scalar, MASK_LIMIT, MASK_SLOPE};
use super::pipeline::FrontEnd;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::geometry::Topology;
use crate::jsonl::{read_json, write_json};

const MAGIC: &[u8; 4] = b"FFCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskBound {
    pub limit: f64,
    pub slope: f64,
}

impl Default for MaskBound {
    fn default() -> Self {
        MaskBound {
            limit: MASK_LIMIT,
            slope: MASK_SLOPE,
        }
    }
}

/// Sidecar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub num_bins: usize,
    pub hidden: usize,
    pub layers: usize,
    pub front_end: FrontEnd,
    pub topology: Option<Topology>,
    pub mask: MaskBound,
    pub train: Option<TrainConfig>,
    pub best_epoch: Option<usize>,
}

impl CheckpointMeta {
    pub fn new<T: Scalar>(model: &MaskEstimator<T>, front_end: FrontEnd) -> Self {
        CheckpointMeta {
            version: CHECKPOINT_VERSION,
            num_bins: model.num_bins,
            hidden: model.hidden(),
            layers: model.num_layers(),
            front_end,
            topology: None,
            mask: MaskBound::default(),
            train: None,
            best_epoch: None,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    model: &MaskEstimator<T>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * model.num_params());
    bytes.extend_from_slice(MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        model.num_bins as u32,
        model.hidden() as u32,
        model.num_layers() as u32,
    ] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for p in model.params() {
        for v in p {
            bytes.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::storage(path, e))?;
    write_json(&sidecar_path(path), meta)
}

/// Loads the parameters and, when present, the sidecar.
pub fn load_checkpoint<T: Scalar>(
    path: &Path,
) -> Result<(MaskEstimator<T>, Option<CheckpointMeta>)> {
    let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::parse(path, "not a model checkpoint"));
    }
    let word = |i: usize| {
        u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize
    };
    let version = word(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let (f, hidden, layers) = (word(1), word(2), word(3));
    if f == 0 || hidden == 0 || layers == 0 {
        return Err(Error::parse(path, "zero dimension in header"));
    }
    let mut model = MaskEstimator::<T>::zeros(f, hidden, layers);
    let expected = HEADER_LEN + 4 * model.num_params();
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            format!(
                "expected {expected} bytes for F={f}, hidden={hidden}, layers={layers}, found {}",
                bytes.len()
            ),
        ));
    }
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    for p in model.params_mut() {
        for v in p.iter_mut() {
            *v = T::of(values.next().expect("length checked") as f64);
        }
    }
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let meta: CheckpointMeta = read_json(&side)?;
        if (meta.num_bins, meta.hidden, meta.layers) != (f, hidden, layers) {
            return Err(Error::parse(
                &side,
                "sidecar dimensions disagree with the checkpoint",
            ));
        }
        Some(meta)
    } else {
        None
    };
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhance::model::ModelConfig;

    #[test]
    fn round_trip_is_exact_in_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = MaskEstimator::<f32>::new(
            9,
            &ModelConfig {
                hidden: 6,
                layers: 2,
                seed: 3,
            },
        )
        .unwrap();
        let mut meta = CheckpointMeta::new(&model, FrontEnd::default());
        meta.train = Some(TrainConfig::default());
        save_checkpoint(&path, &model, &meta).unwrap();
        let (back, side) = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(side.unwrap(), meta);
        let len = fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(len, HEADER_LEN + 4 * model.num_params());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = MaskEstimator::<f32>::new(
            5,
            &ModelConfig {
                hidden: 4,
                layers: 1,
                seed: 0,
            },
        )
        .unwrap();
        save_checkpoint(
            &path,
            &model,
            &CheckpointMeta::new(&model, FrontEnd::default()),
        )
        .unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&path),
            Err(Error::Parse { .. })
        ));
        fs::write(&path, b"nope").unwrap();
        assert!(load_checkpoint::<f32>(&path).is_err());
    }
}
