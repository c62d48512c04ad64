use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{resize_into, BatchSource, ImageSample, LabeledDataset, CHANNELS};
use crate::checkpoint::{self, NamedTensor, TensorData};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// File name of the label table at a dataset root.
pub const LABELS_CSV: &str = "labels.csv";

/// One row of a `path,label` table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub path: String,
    pub label: String,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Dataset(format!("{}: {e}", path.display()))
}

pub fn read_label_csv(path: impl AsRef<Path>) -> Result<Vec<LabelEntry>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    if headers.iter().collect::<Vec<_>>() != ["path", "label"] {
        return Err(Error::Dataset(format!(
            "{}: expected header 'path,label', got '{}'",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<LabelEntry>, _>>()
        .map_err(|e| csv_error(path, e))
}

pub fn write_label_csv(path: impl AsRef<Path>, entries: &[LabelEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for e in entries {
        writer.serialize(e).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Sorted unique class names; class ids index into this list.
pub fn class_names_of(entries: &[LabelEntry]) -> Vec<String> {
    entries
        .iter()
        .map(|e| e.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Decodes a PNG or JPEG into RGB bytes, returning `(pixels, height, width)`.
pub fn decode_image(path: impl AsRef<Path>) -> Result<(Vec<u8>, usize, usize)> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok((rgb.into_raw(), h as usize, w as usize))
}

/// Decodes `entries` (paths relative to `root`) with the given class list.
pub fn load_entries(root: impl AsRef<Path>, entries: &[LabelEntry], class_names: &[String]) -> Result<LabeledDataset> {
    let root = root.as_ref();
    let ids: BTreeMap<&str, usize> = class_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let samples = entries
        .par_iter()
        .map(|e| {
            let label = *ids
                .get(e.label.as_str())
                .ok_or_else(|| Error::Dataset(format!("{}: unknown class '{}'", e.path, e.label)))?;
            let (pixels, h, w) = decode_image(root.join(&e.path))?;
            ImageSample::new(pixels, h, w, label, e.path.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(samples, class_names.to_vec())
}

/// Loads every image listed in `root/labels.csv`.
pub fn load_dir(root: impl AsRef<Path>) -> Result<LabeledDataset> {
    let root = root.as_ref();
    let entries = read_label_csv(root.join(LABELS_CSV))?;
    load_entries(root, &entries, &class_names_of(&entries))
}

/// Already-preprocessed `n×Ch×S×S` images held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedDataset {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl PackedDataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let [n, _, h, w] = *images.shape() else {
            return Err(Error::dim(format!("packed images must be rank 4, got {:?}", images.shape())));
        };
        if h != w {
            return Err(Error::dim(format!("packed images must be square, got {h}×{w}")));
        }
        if labels.len() != n {
            return Err(Error::dim(format!("{n} images but {} labels", labels.len())));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_names.len()) {
            return Err(Error::Label {
                row,
                label,
                num_classes: class_names.len(),
            });
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Dataset("packed image values must lie in [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            class_names,
        })
    }

    pub fn side(&self) -> usize {
        self.images.shape()[2]
    }

    /// Samples at `indices`, in that order. `indices` must be non-empty.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let shape = self.images.shape();
        let per: usize = shape[1..].iter().product();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
        }
        let mut new_shape = shape.to_vec();
        new_shape[0] = indices.len();
        Ok(Self {
            images: Tensor::new(new_shape, data)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        })
    }
}

impl BatchSource for PackedDataset {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn channels(&self) -> usize {
        self.images.shape()[1]
    }

    fn class_names(&self) -> &[String] {
        &self.class_names
    }

    fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    fn write_sample(&self, index: usize, side: usize, out: &mut [f32]) -> Result<()> {
        let (c, s) = (self.channels(), self.side());
        let per = c * s * s;
        resize_into(&self.images.data()[index * per..(index + 1) * per], c, s, s, side, out);
        Ok(())
    }
}

/// Writes `images` (f32) and `labels` (i64) into a checkpoint container.
pub fn save_packed(path: impl AsRef<Path>, ds: &PackedDataset) -> Result<()> {
    let labels = ds.labels.iter().map(|&l| l as i64).collect();
    let tensors = [
        NamedTensor::from_tensor("images", &ds.images),
        NamedTensor::from_i64("labels", vec![ds.labels.len()], labels),
    ];
    checkpoint::save(path, &tensors, &json!({ "class_names": ds.class_names }))?;
    Ok(())
}

/// Reads a packed fixture. Without stored class names, classes are `"0".."k"`.
pub fn load_packed(path: impl AsRef<Path>) -> Result<PackedDataset> {
    let path = path.as_ref();
    let ckpt = checkpoint::load(path)?;
    let missing = |name: &str| Error::Dataset(format!("{}: no '{name}' tensor", path.display()));
    let images = match ckpt.get("images").ok_or_else(|| missing("images"))? {
        NamedTensor {
            data: TensorData::F32(v),
            shape,
            ..
        } => Tensor::new(shape.clone(), v.clone())?,
        _ => return Err(Error::Dataset("'images' must hold 32-bit floats".into())),
    };
    let labels: Vec<usize> = match &ckpt.get("labels").ok_or_else(|| missing("labels"))?.data {
        TensorData::I64(v) => v
            .iter()
            .enumerate()
            .map(|(row, &l)| {
                usize::try_from(l).map_err(|_| Error::Dataset(format!("label {l} at row {row} is negative")))
            })
            .collect::<Result<_>>()?,
        _ => return Err(Error::Dataset("'labels' must hold 64-bit integers".into())),
    };
    let class_names = match ckpt.metadata.get("class_names") {
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| Error::Dataset(format!("{}: bad class_names: {e}", path.display())))?,
        None => {
            let k = labels.iter().max().map_or(0, |m| m + 1);
            (0..k).map(|c| c.to_string()).collect()
        }
    };
    PackedDataset::new(images, labels, class_names)
}

impl PackedDataset {
    /// Packs a decoded dataset at side `side` (normalize → permute → resize).
    pub fn from_labeled(ds: &LabeledDataset, side: usize) -> Result<Self> {
        let per = CHANNELS * side * side;
        let mut data = vec![0f32; ds.len() * per];
        data.par_chunks_mut(per)
            .enumerate()
            .try_for_each(|(i, out)| ds.write_sample(i, side, out))?;
        let images = Tensor::new([ds.len(), CHANNELS, side, side], data)?;
        Self::new(images, ds.labels(), ds.class_names.clone())
    }
}
