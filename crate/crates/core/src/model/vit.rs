use super::{LayerSet, ParamSet, ViTConfig, ViTParams};
use crate::error::{Error, Result};
use crate::tensor::kernels::LAYER_NORM_EPS;
use crate::tensor::{Eager, Graph, Real, Tape, Tensor};

/// Splits a `Ch×S×S` image into `N×(P²·Ch)` patches.
///
/// Patches run row-major over the `(S/P)×(S/P)` grid; each patch is
/// flattened channel-major, then by row, then by column.
pub fn patchify<T: Real>(image: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let (ch, side) = match image.shape() {
        &[c, h, w] if h == w => (c, h),
        s => return Err(Error::dim(format!("patchify needs a square Ch×S×S image, got {s:?}"))),
    };
    if patch == 0 || side % patch != 0 {
        return Err(Error::dim(format!(
            "image side {side} is not divisible by patch size {patch}"
        )));
    }
    Ok(patchify_raw(image.data(), ch, side, patch))
}

fn patchify_raw<T: Real>(pixels: &[T], ch: usize, side: usize, patch: usize) -> Tensor<T> {
    let grid = side / patch;
    let mut out = Vec::with_capacity(pixels.len());
    for gy in 0..grid {
        for gx in 0..grid {
            for c in 0..ch {
                for py in 0..patch {
                    let row = (c * side + gy * patch + py) * side + gx * patch;
                    out.extend_from_slice(&pixels[row..row + patch]);
                }
            }
        }
    }
    Tensor::from_parts(vec![grid * grid, ch * patch * patch], out)
}

/// Patchifies every image of a `B×Ch×S×S` batch into `B×N×(P²·Ch)`.
pub fn patchify_batch<T: Real>(images: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let (batch, ch, side) = match images.shape() {
        &[b, c, h, w] if h == w => (b, c, h),
        s => return Err(Error::dim(format!("expected a B×Ch×S×S batch, got {s:?}"))),
    };
    if patch == 0 || side % patch != 0 {
        return Err(Error::dim(format!(
            "image side {side} is not divisible by patch size {patch}"
        )));
    }
    let per_image = ch * side * side;
    let mut data = Vec::with_capacity(images.len());
    for b in 0..batch {
        let patches = patchify_raw(&images.data()[b * per_image..(b + 1) * per_image], ch, side, patch);
        data.extend(patches.into_data());
    }
    let n = (side / patch) * (side / patch);
    Tensor::new([batch, n, ch * patch * patch], data)
}

/// One pre-norm encoder block:
/// `u = z + MHA(ln1(z))`, `out = u + FFN(ln2(u))`.
pub fn encoder_layer<'a, T: Real, G: Graph<'a, T>>(
    graph: &mut G,
    layer: &LayerSet<G::Node>,
    z: &G::Node,
    heads: usize,
) -> Result<G::Node> {
    let eps = T::of(LAYER_NORM_EPS);
    let h = graph.layer_norm(z, &layer.ln1_gamma, &layer.ln1_beta, eps)?;
    let qkv = graph.linear(&h, &layer.qkv_weight, &layer.qkv_bias)?;
    let attn = graph.self_attention(&qkv, heads)?;
    let attn = graph.linear(&attn, &layer.attn_out_weight, &layer.attn_out_bias)?;
    let u = graph.add(z, &attn)?;

    let h = graph.layer_norm(&u, &layer.ln2_gamma, &layer.ln2_beta, eps)?;
    let f = graph.linear(&h, &layer.fc1_weight, &layer.fc1_bias)?;
    let f = graph.gelu(&f)?;
    let f = graph.linear(&f, &layer.fc2_weight, &layer.fc2_bias)?;
    graph.add(&u, &f)
}

/// Full forward pass on any [`Graph`]; returns `(logits, cls_embedding)`.
///
/// `cls_embedding` is the final-normed class token, `[B, D]`.
pub fn forward_graph<'a, T: Real, G: Graph<'a, T>>(
    cfg: &ViTConfig,
    graph: &mut G,
    params: &ParamSet<G::Node>,
    images: &Tensor<T>,
) -> Result<(G::Node, G::Node)> {
    match images.shape() {
        &[_, c, h, w] if c == cfg.channels && h == cfg.image_size && w == cfg.image_size => {}
        s => {
            return Err(Error::dim(format!(
                "model expects B×{}×{}×{} images, got {s:?}",
                cfg.channels, cfg.image_size, cfg.image_size
            )))
        }
    }
    let patches = graph.input(patchify_batch(images, cfg.patch_size)?);
    let projected = graph.linear(&patches, &params.patch_proj_weight, &params.patch_proj_bias)?;
    let mut z = graph.embed(&projected, &params.cls_token, &params.pos_embed)?;
    for layer in &params.layers {
        z = encoder_layer(graph, layer, &z, cfg.heads)?;
    }
    let cls = graph.select_token(&z, 0)?;
    let cls = graph.layer_norm(
        &cls,
        &params.final_norm_gamma,
        &params.final_norm_beta,
        T::of(LAYER_NORM_EPS),
    )?;
    let logits = graph.linear(&cls, &params.head_weight, &params.head_bias)?;
    Ok((logits, cls))
}

/// Index of the largest logit per row; ties resolve to the lowest index.
pub fn predict<T: Real>(logits: &Tensor<T>) -> Vec<usize> {
    logits
        .data()
        .chunks(logits.last_dim())
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

/// Loss, logits and parameter gradients of one batch.
#[derive(Debug, Clone)]
pub struct LossAndGradients<T> {
    pub loss: T,
    pub logits: Tensor<T>,
    pub grads: ViTParams<T>,
}

/// A Vision Transformer of fixed geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisionTransformer {
    config: ViTConfig,
}

impl VisionTransformer {
    pub fn new(config: ViTConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &ViTConfig {
        &self.config
    }

    /// Pre-softmax logits `B×C_out`.
    pub fn forward<T: Real>(&self, params: &ViTParams<T>, images: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_with_embedding(params, images)?.0)
    }

    /// `(logits, cls_embedding)`.
    pub fn forward_with_embedding<T: Real>(
        &self,
        params: &ViTParams<T>,
        images: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut graph = Eager::new();
        let bound = params.map(|t| graph.param(t));
        let (logits, cls) = forward_graph(&self.config, &mut graph, &bound, images)?;
        Ok((logits.into_owned(), cls.into_owned()))
    }

    /// Mean cross-entropy of a labelled batch and its gradient for every parameter.
    pub fn loss_and_gradients<T: Real>(
        &self,
        params: &ViTParams<T>,
        images: &Tensor<T>,
        labels: &[usize],
    ) -> Result<LossAndGradients<T>> {
        let mut tape = Tape::new();
        let vars = params.map(|t| tape.param(t));
        let (logits, _) = forward_graph(&self.config, &mut tape, &vars, images)?;
        let loss = tape.cross_entropy(logits, labels)?;
        let mut grads = tape.backward(loss)?;
        let grads = vars.map(|&v| grads.take(v).expect("every parameter is on the tape"));
        Ok(LossAndGradients {
            loss: tape.value(loss).item()?,
            logits: tape.value(logits).clone(),
            grads,
        })
    }
}
