use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use vitforge::preprocess::{
    class_names_of, load_entries, load_packed, read_label_csv, stratified_split_indices, BatchSource, LabelEntry,
    PackedDataset, LABELS_CSV,
};

use crate::UsageError;

pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";

pub type Source = Box<dyn BatchSource>;

/// Where samples come from: an image directory or a packed `.ckpt` fixture.
#[derive(Debug, Clone)]
pub enum DataRoot {
    Dir(PathBuf),
    Packed(PathBuf),
}

impl DataRoot {
    pub fn new(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Ok(Self::Dir(path.to_path_buf()))
        } else if path.is_file() {
            Ok(Self::Packed(path.to_path_buf()))
        } else {
            Err(UsageError(format!("data path {} does not exist", path.display())).into())
        }
    }
}

/// Reads `root/labels.csv`, reporting its absence as a usage error.
pub fn read_labels(root: &Path) -> Result<Vec<LabelEntry>> {
    let path = root.join(LABELS_CSV);
    if !path.is_file() {
        return Err(UsageError(format!("{} not found", path.display())).into());
    }
    Ok(read_label_csv(path)?)
}

/// Splits `entries` per class; returns `(train, test)` in file order.
pub fn split_entries(entries: &[LabelEntry], ratio: f64, seed: u64) -> Result<(Vec<LabelEntry>, Vec<LabelEntry>)> {
    let names = class_names_of(entries);
    let labels: Vec<usize> = entries
        .iter()
        .map(|e| names.binary_search(&e.label).expect("label from the same entries"))
        .collect();
    let (train, test) = stratified_split_indices(&labels, &names, ratio, seed)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| entries[i].clone()).collect();
    Ok((pick(train), pick(test)))
}

/// Explicit train/test manifests for a directory dataset.
#[derive(Debug, Clone, Default)]
pub struct Manifests {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

pub struct TrainData {
    pub train: Source,
    pub test: Source,
    pub class_names: Vec<String>,
}

/// Resolves the training and test sets.
///
/// A directory uses explicit manifests, else its own `train.csv`/`test.csv`,
/// else a fresh split of `labels.csv`. A packed fixture is split in memory.
pub fn load_train_data(root: &DataRoot, manifests: &Manifests, ratio: f64, seed: u64) -> Result<TrainData> {
    match root {
        DataRoot::Dir(dir) => {
            let (train, test) = match (&manifests.train, &manifests.test) {
                (Some(a), Some(b)) => (read_label_csv(a)?, read_label_csv(b)?),
                (None, None) if dir.join(TRAIN_CSV).is_file() && dir.join(TEST_CSV).is_file() => {
                    (read_label_csv(dir.join(TRAIN_CSV))?, read_label_csv(dir.join(TEST_CSV))?)
                }
                (None, None) => split_entries(&read_labels(dir)?, ratio, seed)?,
                _ => bail!(UsageError(
                    "--train-manifest and --test-manifest must be given together".into()
                )),
            };
            let all: Vec<LabelEntry> = train.iter().chain(&test).cloned().collect();
            let class_names = class_names_of(&all);
            Ok(TrainData {
                train: Box::new(load_entries(dir, &train, &class_names)?),
                test: Box::new(load_entries(dir, &test, &class_names)?),
                class_names,
            })
        }
        DataRoot::Packed(path) => {
            if manifests.train.is_some() || manifests.test.is_some() {
                bail!(UsageError("manifests only apply to directory datasets".into()));
            }
            let ds = load_packed(path)?;
            let (train, test) = stratified_split_indices(&ds.labels, &ds.class_names, ratio, seed)?;
            Ok(TrainData {
                train: Box::new(ds.subset(&train)?),
                test: Box::new(ds.subset(&test)?),
                class_names: ds.class_names,
            })
        }
    }
}

/// Loads an evaluation set whose labels are interpreted with `class_names`.
///
/// A directory uses `manifest`, else `test.csv`, else `labels.csv`.
pub fn load_eval_data(root: &DataRoot, manifest: Option<&Path>, class_names: Option<&[String]>) -> Result<Source> {
    match root {
        DataRoot::Dir(dir) => {
            let entries = match manifest {
                Some(m) => read_label_csv(m)?,
                None if dir.join(TEST_CSV).is_file() => read_label_csv(dir.join(TEST_CSV))?,
                None => read_labels(dir)?,
            };
            let names = match class_names {
                Some(n) => n.to_vec(),
                None => class_names_of(&entries),
            };
            Ok(Box::new(load_entries(dir, &entries, &names)?))
        }
        DataRoot::Packed(path) => {
            if manifest.is_some() {
                bail!(UsageError("manifests only apply to directory datasets".into()));
            }
            let ds: PackedDataset = load_packed(path)?;
            if let Some(names) = class_names {
                if names != ds.class_names.as_slice() {
                    return Err(vitforge::Error::Dataset(format!(
                        "{} has classes {:?} but the checkpoint has {:?}",
                        path.display(),
                        ds.class_names,
                        names
                    ))
                    .into());
                }
            }
            Ok(Box::new(ds))
        }
    }
}
