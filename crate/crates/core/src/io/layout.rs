//! On-disk dataset layout:
//!
//! ```text
//! root/
//!   manifest.json
//!   {train,val,test}/
//!     class_<idx>_<name>/
//!       <id>.f32   # authoritative tensor
//!       <id>.png   # 8-bit preview
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::Image;

use super::tensor::{read_tensor, write_tensor, TensorContainer};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const SPLITS: [&str; 3] = ["train", "val", "test"];

/// Dataset-level metadata persisted next to the split directories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub kind: String,
    pub class_names: Vec<String>,
    pub channels: usize,
    pub side: usize,
    /// Per-split, per-class sample counts.
    pub counts: BTreeMap<String, Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl DatasetManifest {
    pub fn total(&self, split: &str) -> usize {
        self.counts.get(split).map(|v| v.iter().sum()).unwrap_or(0)
    }
}

pub fn class_dir_name(idx: usize, name: &str) -> String {
    format!("class_{idx}_{name}")
}

fn parse_class_dir(dir: &str) -> Option<(usize, String)> {
    let rest = dir.strip_prefix("class_")?;
    let (idx, name) = rest.split_once('_')?;
    Some((idx.parse().ok()?, name.to_string()))
}

/// 8-bit preview encoding of a `[0,1]` float image.
pub fn image_to_png_bytes(img: &Image) -> Result<Vec<u8>> {
    let (h, w) = (img.height as u32, img.width as u32);
    let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut cursor = std::io::Cursor::new(Vec::new());
    match img.channels {
        1 => {
            let buf: Vec<u8> = img.channel(0).iter().map(|&v| quant(v)).collect();
            let gray = image::GrayImage::from_raw(w, h, buf).expect("preview buffer size");
            gray.write_to(&mut cursor, image::ImageFormat::Png)
        }
        3 => {
            let mut buf = Vec::with_capacity((3 * w * h) as usize);
            for px in 0..(h * w) as usize {
                for c in 0..3 {
                    buf.push(quant(img.channel(c)[px]));
                }
            }
            let rgb = image::RgbImage::from_raw(w, h, buf).expect("preview buffer size");
            rgb.write_to(&mut cursor, image::ImageFormat::Png)
        }
        n => {
            return Err(Error::InvalidConfig(format!(
                "cannot render a {n}-channel image as PNG"
            )))
        }
    }
    .map_err(|e| Error::ImageCodec {
        path: PathBuf::from("<memory>"),
        source: e,
    })?;
    Ok(cursor.into_inner())
}

fn image_to_tensor(img: &Image) -> TensorContainer {
    TensorContainer::new(
        img.channels as u32,
        img.height as u32,
        img.width as u32,
        img.to_f32(),
    )
}

/// Write one split of a dataset under `root/<split>/`.
pub fn write_split(root: &Path, ds: &LabeledDataset) -> Result<()> {
    let split_dir = root.join(&ds.split);
    for (class_idx, class_name) in ds.class_names.iter().enumerate() {
        let dir = split_dir.join(class_dir_name(class_idx, class_name));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut next_index = vec![0usize; ds.n_classes];
    for (img, &label) in ds.images.iter().zip(ds.labels.iter()) {
        let stem = format!("{:05}", next_index[label]);
        next_index[label] += 1;
        let dir = split_dir.join(class_dir_name(label, &ds.class_names[label]));
        let f32_path = dir.join(format!("{stem}.f32"));
        write_tensor(&f32_path, &image_to_tensor(img))?;
        let png_path = dir.join(format!("{stem}.png"));
        fs::write(&png_path, image_to_png_bytes(img)?).map_err(|e| Error::io(&png_path, e))?;
    }
    Ok(())
}

/// Read one split back; `.f32` tensors are authoritative.
pub fn read_split(root: &Path, split: &str) -> Result<LabeledDataset> {
    let split_dir = root.join(split);
    if !split_dir.is_dir() {
        return Err(Error::MissingSplit {
            split: split.to_string(),
        });
    }
    let mut class_dirs: Vec<(usize, String, PathBuf)> = Vec::new();
    let entries = fs::read_dir(&split_dir).map_err(|e| Error::io(&split_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&split_dir, e))?;
        if !entry.path().is_dir() {
            continue;
        }
        let dir_name = entry.file_name().to_string_lossy().to_string();
        if let Some((idx, name)) = parse_class_dir(&dir_name) {
            class_dirs.push((idx, name, entry.path()));
        }
    }
    class_dirs.sort_by_key(|(idx, _, _)| *idx);
    if class_dirs.is_empty() {
        return Err(Error::MissingSplit {
            split: split.to_string(),
        });
    }

    let class_names: Vec<String> = class_dirs.iter().map(|(_, n, _)| n.clone()).collect();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for (class_idx, _, dir) in &class_dirs {
        let mut stems: Vec<String> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                if p.extension().is_some_and(|x| x == "f32") {
                    p.file_stem().map(|s| s.to_string_lossy().to_string())
                } else {
                    None
                }
            })
            .collect();
        stems.sort();
        for stem in stems {
            let path = dir.join(format!("{stem}.f32"));
            let t = read_tensor(&path)?;
            images.push(Image::from_f32(
                t.channels as usize,
                t.height as usize,
                t.width as usize,
                &t.data,
            )?);
            labels.push(*class_idx);
            ids.push(format!(
                "{split}/{}/{stem}",
                class_dir_name(*class_idx, &class_names[*class_idx])
            ));
        }
    }
    LabeledDataset::new(images, labels, ids, class_names, split)
}

pub fn write_manifest(root: &Path, manifest: &DatasetManifest) -> Result<()> {
    let path = root.join(MANIFEST_NAME);
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join(MANIFEST_NAME);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Json { path, source: e })
}

/// Read a split and cross-check it against the manifest counts.
pub fn read_split_checked(root: &Path, split: &str) -> Result<LabeledDataset> {
    let manifest = read_manifest(root)?;
    let ds = read_split(root, split)?;
    let expected = manifest.counts.get(split).cloned().unwrap_or_default();
    let actual = ds.per_class_counts();
    if expected != actual {
        return Err(Error::BadManifest {
            path: root.join(MANIFEST_NAME),
            reason: format!(
                "split '{split}' has per-class counts {actual:?} on disk but manifest says {expected:?}"
            ),
        });
    }
    Ok(ds)
}
