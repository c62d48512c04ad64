//! Raw images to normalized, channel-first, fixed-size batches.

mod batch;
mod io;
mod split;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub use batch::{make_batches, Batch, BatchSource, Prefetcher, Shuffle};
pub use io::{
    class_names_of, decode_image, load_dir, load_entries, load_packed, read_label_csv, save_packed,
    write_label_csv, LabelEntry, PackedDataset, LABELS_CSV,
};
pub use split::{split_counts, stratified_split, stratified_split_indices};

/// Number of color channels every sample carries.
pub const CHANNELS: usize = 3;

/// An 8-bit RGB image in row-major `H×W×3` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSample {
    pub pixels: Vec<u8>,
    pub height: usize,
    pub width: usize,
    pub label: usize,
    pub source_id: String,
}

impl ImageSample {
    pub fn new(pixels: Vec<u8>, height: usize, width: usize, label: usize, source_id: impl Into<String>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width * CHANNELS {
            return Err(Error::dim(format!(
                "{} bytes do not form a {height}×{width}×{CHANNELS} image",
                pixels.len()
            )));
        }
        Ok(Self {
            pixels,
            height,
            width,
            label,
            source_id: source_id.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<ImageSample>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(samples: Vec<ImageSample>, class_names: Vec<String>) -> Result<Self> {
        let num_classes = class_names.len();
        if num_classes == 0 {
            return Err(Error::Dataset("dataset needs at least one class".into()));
        }
        for (row, s) in samples.iter().enumerate() {
            if s.label >= num_classes {
                return Err(Error::Label {
                    row,
                    label: s.label,
                    num_classes,
                });
            }
        }
        Ok(Self {
            samples,
            num_classes,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Samples at `indices`, in that order, with the same class list.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        }
    }
}

/// `raw / 255` as an `H×W×3` tensor.
pub fn normalize<T: Real>(raw: &ImageSample) -> Tensor<T> {
    let scale = T::of(255.0);
    let data = raw
        .pixels
        .iter()
        .map(|&p| T::from_u8(p).expect("u8 fits every float") / scale)
        .collect();
    Tensor::from_parts(vec![raw.height, raw.width, CHANNELS], data)
}

fn rank3<T: Real>(x: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::dim(format!("{what} expects a rank-3 array, got shape {:?}", x.shape()))),
    }
}

/// `out[c][h][w] = x[h][w][c]`.
pub fn permute_hwc_to_chw<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = rank3(x, "permute_hwc_to_chw")?;
    let src = x.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        for i in 0..h * w {
            out.push(src[i * c + ch]);
        }
    }
    Ok(Tensor::from_parts(vec![c, h, w], out))
}

/// Inverse of [`permute_hwc_to_chw`].
pub fn permute_chw_to_hwc<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = rank3(x, "permute_chw_to_hwc")?;
    let src = x.data();
    let mut out = Vec::with_capacity(src.len());
    for i in 0..h * w {
        for ch in 0..c {
            out.push(src[ch * h * w + i]);
        }
    }
    Ok(Tensor::from_parts(vec![h, w, c], out))
}

/// Source coordinate and weights along one axis.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            Tap {
                lo,
                hi: (lo + 1).min(src - 1),
                frac: pos - lo as f64,
            }
        })
        .collect()
}

/// Bilinear resize of a `Ch×H×W` array to `Ch×S×S`.
///
/// Output pixel `i` samples the source at `(i + 0.5)·(H/S) − 0.5`, clamped to
/// the edge pixels.
pub fn resize<T: Real>(x: &Tensor<T>, side: usize) -> Result<Tensor<T>> {
    let (c, h, w) = rank3(x, "resize")?;
    if side == 0 {
        return Err(Error::dim("resize target side must be positive"));
    }
    let mut out = vec![T::zero(); c * side * side];
    resize_into(x.data(), c, h, w, side, &mut out);
    Ok(Tensor::from_parts(vec![c, side, side], out))
}

pub(crate) fn resize_into<T: Real>(src: &[T], c: usize, h: usize, w: usize, side: usize, out: &mut [T]) {
    if h == side && w == side {
        out.copy_from_slice(src);
        return;
    }
    let ys = taps(h, side);
    let xs = taps(w, side);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * side * side..(ch + 1) * side * side];
        for (oy, ty) in ys.iter().enumerate() {
            let wy = T::of(ty.frac);
            let r0 = &plane[ty.lo * w..(ty.lo + 1) * w];
            let r1 = &plane[ty.hi * w..(ty.hi + 1) * w];
            for (ox, tx) in xs.iter().enumerate() {
                let wx = T::of(tx.frac);
                let top = r0[tx.lo] + (r0[tx.hi] - r0[tx.lo]) * wx;
                let bottom = r1[tx.lo] + (r1[tx.hi] - r1[tx.lo]) * wx;
                dst[oy * side + ox] = top + (bottom - top) * wy;
            }
        }
    }
}

/// normalize → permute → resize for one sample, written into `out` (`3·S·S`).
pub fn prepare_sample_into(sample: &ImageSample, side: usize, out: &mut [f32]) {
    let (h, w) = (sample.height, sample.width);
    let mut chw = vec![0f32; sample.pixels.len()];
    for (i, px) in sample.pixels.chunks_exact(CHANNELS).enumerate() {
        for (ch, &v) in px.iter().enumerate() {
            chw[ch * h * w + i] = f32::from(v) / 255.0;
        }
    }
    resize_into(&chw, CHANNELS, h, w, side, out);
}
