use std::sync::mpsc::sync_channel;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{prepare_sample_into, LabeledDataset, CHANNELS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `B×Ch×S×S` images in `[0, 1]` with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Anything that can produce preprocessed samples by index.
pub trait BatchSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn channels(&self) -> usize;

    fn class_names(&self) -> &[String];

    fn num_classes(&self) -> usize {
        self.class_names().len()
    }

    fn label(&self, index: usize) -> usize;

    /// Writes sample `index` as a `Ch×S×S` array into `out`.
    fn write_sample(&self, index: usize, side: usize, out: &mut [f32]) -> Result<()>;

    fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }
}

impl BatchSource for LabeledDataset {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn channels(&self) -> usize {
        CHANNELS
    }

    fn class_names(&self) -> &[String] {
        &self.class_names
    }

    fn label(&self, index: usize) -> usize {
        self.samples[index].label
    }

    fn write_sample(&self, index: usize, side: usize, out: &mut [f32]) -> Result<()> {
        prepare_sample_into(&self.samples[index], side, out);
        Ok(())
    }
}

/// Seed and epoch selecting one permutation from an epoch-indexed stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shuffle {
    pub seed: u64,
    pub epoch: u64,
}

fn sample_order(len: usize, shuffle: Option<Shuffle>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    if let Some(Shuffle { seed, epoch }) = shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
    }
    order
}

fn assemble<D: BatchSource + ?Sized>(ds: &D, indices: &[usize], side: usize) -> Result<Batch> {
    let per = ds.channels() * side * side;
    let mut data = vec![0f32; indices.len() * per];
    data.par_chunks_mut(per)
        .zip(indices.par_iter())
        .try_for_each(|(out, &i)| ds.write_sample(i, side, out))?;
    let images = Tensor::new([indices.len(), ds.channels(), side, side], data)?;
    Ok(Batch {
        images,
        labels: indices.iter().map(|&i| ds.label(i)).collect(),
    })
}

fn check_args(batch_size: usize, side: usize) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if side == 0 {
        return Err(Error::Config("image side must be at least 1".into()));
    }
    Ok(())
}

/// All batches for one pass. The last batch may be short; an empty dataset
/// yields no batches.
pub fn make_batches<D: BatchSource + ?Sized>(
    ds: &D,
    batch_size: usize,
    side: usize,
    shuffle: Option<Shuffle>,
) -> Result<Vec<Batch>> {
    check_args(batch_size, side)?;
    sample_order(ds.len(), shuffle)
        .chunks(batch_size)
        .map(|idx| assemble(ds, idx, side))
        .collect()
}

/// Assembles batches on a background thread, at most `capacity` ahead of the consumer.
#[derive(Debug, Clone, Copy)]
pub struct Prefetcher {
    capacity: usize,
}

impl Default for Prefetcher {
    fn default() -> Self {
        Self { capacity: 2 }
    }
}

impl Prefetcher {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
        }
    }

    /// Feeds the same sequence as [`make_batches`] to `f`, in order.
    /// Stops at the first error from either side.
    pub fn for_each<D, F>(&self, ds: &D, batch_size: usize, side: usize, shuffle: Option<Shuffle>, mut f: F) -> Result<()>
    where
        D: BatchSource + ?Sized,
        F: FnMut(Batch) -> Result<()>,
    {
        check_args(batch_size, side)?;
        let order = sample_order(ds.len(), shuffle);
        let (tx, rx) = sync_channel::<Result<Batch>>(self.capacity);
        std::thread::scope(|scope| {
            scope.spawn(move || {
                for idx in order.chunks(batch_size) {
                    let batch = assemble(ds, idx, side);
                    let failed = batch.is_err();
                    if tx.send(batch).is_err() || failed {
                        break;
                    }
                }
            });
            for batch in rx {
                f(batch?)?;
            }
            Ok(())
        })
    }
}
