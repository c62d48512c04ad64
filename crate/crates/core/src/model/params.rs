use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ViTConfig;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Per-layer slots of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSet<P> {
    pub ln1_gamma: P,
    pub ln1_beta: P,
    pub qkv_weight: P,
    pub qkv_bias: P,
    pub attn_out_weight: P,
    pub attn_out_bias: P,
    pub ln2_gamma: P,
    pub ln2_beta: P,
    pub fc1_weight: P,
    pub fc1_bias: P,
    pub fc2_weight: P,
    pub fc2_bias: P,
}

/// One slot per model parameter, in canonical manifest order.
///
/// With `P = Tensor<T>` this is the parameter set itself; the same layout is
/// reused for tape handles, gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<P> {
    pub cls_token: P,
    pub pos_embed: P,
    pub patch_proj_weight: P,
    pub patch_proj_bias: P,
    pub layers: Vec<LayerSet<P>>,
    pub final_norm_gamma: P,
    pub final_norm_beta: P,
    pub head_weight: P,
    pub head_bias: P,
}

pub type ViTParams<T = f32> = ParamSet<Tensor<T>>;

const LAYER_SUFFIXES: [&str; 12] = [
    "ln1.gamma",
    "ln1.beta",
    "qkv.weight",
    "qkv.bias",
    "attn_out.weight",
    "attn_out.bias",
    "ln2.gamma",
    "ln2.beta",
    "fc1.weight",
    "fc1.bias",
    "fc2.weight",
    "fc2.bias",
];

impl<P> LayerSet<P> {
    fn slots(&self) -> [&P; 12] {
        [
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.qkv_weight,
            &self.qkv_bias,
            &self.attn_out_weight,
            &self.attn_out_bias,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.fc1_weight,
            &self.fc1_bias,
            &self.fc2_weight,
            &self.fc2_bias,
        ]
    }

    fn slots_mut(&mut self) -> [&mut P; 12] {
        [
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.qkv_weight,
            &mut self.qkv_bias,
            &mut self.attn_out_weight,
            &mut self.attn_out_bias,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
            &mut self.fc1_weight,
            &mut self.fc1_bias,
            &mut self.fc2_weight,
            &mut self.fc2_bias,
        ]
    }

    fn from_slots(mut next: impl FnMut() -> P) -> Self {
        Self {
            ln1_gamma: next(),
            ln1_beta: next(),
            qkv_weight: next(),
            qkv_bias: next(),
            attn_out_weight: next(),
            attn_out_bias: next(),
            ln2_gamma: next(),
            ln2_beta: next(),
            fc1_weight: next(),
            fc1_bias: next(),
            fc2_weight: next(),
            fc2_bias: next(),
        }
    }
}

impl<P> ParamSet<P> {
    /// Builds a set by drawing slots in canonical order.
    fn from_slots(depth: usize, mut next: impl FnMut() -> P) -> Self {
        let cls_token = next();
        let pos_embed = next();
        let patch_proj_weight = next();
        let patch_proj_bias = next();
        let layers = (0..depth).map(|_| LayerSet::from_slots(&mut next)).collect();
        Self {
            cls_token,
            pos_embed,
            patch_proj_weight,
            patch_proj_bias,
            layers,
            final_norm_gamma: next(),
            final_norm_beta: next(),
            head_weight: next(),
            head_bias: next(),
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// All slots in canonical order.
    pub fn iter(&self) -> Vec<&P> {
        let mut out = vec![
            &self.cls_token,
            &self.pos_embed,
            &self.patch_proj_weight,
            &self.patch_proj_bias,
        ];
        for layer in &self.layers {
            out.extend(layer.slots());
        }
        out.extend([
            &self.final_norm_gamma,
            &self.final_norm_beta,
            &self.head_weight,
            &self.head_bias,
        ]);
        out
    }

    pub fn iter_mut(&mut self) -> Vec<&mut P> {
        let mut out = vec![
            &mut self.cls_token,
            &mut self.pos_embed,
            &mut self.patch_proj_weight,
            &mut self.patch_proj_bias,
        ];
        for layer in &mut self.layers {
            out.extend(layer.slots_mut());
        }
        out.extend([
            &mut self.final_norm_gamma,
            &mut self.final_norm_beta,
            &mut self.head_weight,
            &mut self.head_bias,
        ]);
        out
    }

    pub fn map<'s, Q>(&'s self, mut f: impl FnMut(&'s P) -> Q) -> ParamSet<Q> {
        let mut slots = self.iter().into_iter();
        ParamSet::from_slots(self.depth(), || f(slots.next().expect("slot count")))
    }

    pub fn try_map<Q, E>(&self, mut f: impl FnMut(&P) -> Result<Q, E>) -> Result<ParamSet<Q>, E> {
        let values = self.iter().into_iter().map(&mut f).collect::<Result<Vec<Q>, E>>()?;
        let mut values = values.into_iter();
        Ok(ParamSet::from_slots(self.depth(), || {
            values.next().expect("slot count")
        }))
    }

    /// Canonical names paired with slots.
    pub fn named(&self) -> Vec<(String, &P)> {
        param_names(self.depth()).into_iter().zip(self.iter()).collect()
    }
}

/// Canonical parameter names for `depth` encoder layers.
pub fn param_names(depth: usize) -> Vec<String> {
    let mut names: Vec<String> = ["cls_token", "pos_embed", "patch_proj.weight", "patch_proj.bias"]
        .map(String::from)
        .to_vec();
    for i in 0..depth {
        names.extend(LAYER_SUFFIXES.iter().map(|s| format!("layers.{i}.{s}")));
    }
    names.extend(["final_norm.gamma", "final_norm.beta", "head.weight", "head.bias"].map(String::from));
    names
}

/// Every parameter name with the shape the configuration dictates, in canonical order.
pub fn manifest(cfg: &ViTConfig) -> Vec<(String, Vec<usize>)> {
    let (d, f, c) = (cfg.dim, cfg.mlp_dim, cfg.num_classes);
    let shapes = ParamSet::from_slots(cfg.depth, {
        let mut base = vec![
            vec![1, d],
            vec![cfg.num_patches() + 1, d],
            vec![cfg.patch_dim(), d],
            vec![d],
        ];
        for _ in 0..cfg.depth {
            base.extend([
                vec![d],
                vec![d],
                vec![d, 3 * d],
                vec![3 * d],
                vec![d, d],
                vec![d],
                vec![d],
                vec![d],
                vec![d, f],
                vec![f],
                vec![f, d],
                vec![d],
            ]);
        }
        base.extend([vec![d], vec![d], vec![d, c], vec![c]]);
        let mut it = base.into_iter();
        move || it.next().expect("manifest slot")
    });
    shapes
        .named()
        .into_iter()
        .map(|(n, s)| (n, s.clone()))
        .collect()
}

fn xavier_uniform<T: Real>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let (fan_in, fan_out) = (shape[0], shape[1]);
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| T::of(rng.random_range(-bound..bound)))
}

/// Head weights uniform in `±1/√D`, bias zero.
fn head_init<T: Real>(dim: usize, classes: usize, rng: &mut ChaCha8Rng) -> (Tensor<T>, Tensor<T>) {
    let bound = 1.0 / (dim as f64).sqrt();
    let weight = Tensor::from_fn([dim, classes], |_| T::of(rng.random_range(-bound..=bound)));
    (weight, Tensor::zeros([classes]))
}

impl<T: Real> ParamSet<Tensor<T>> {
    /// Seeded random initialization.
    ///
    /// Projection matrices are Xavier-uniform, class and position embeddings
    /// are N(0, 0.02²), norms start at identity and biases at zero.
    pub fn init(cfg: &ViTConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let mut params = manifest(cfg).into_iter().map(|(name, shape)| {
            if name.ends_with("gamma") {
                Tensor::ones(shape)
            } else if name.starts_with("head.") || name.ends_with("bias") || name.ends_with("beta") {
                Tensor::zeros(shape)
            } else if name == "cls_token" || name == "pos_embed" {
                Tensor::from_fn(shape, |_| T::of(normal.sample(&mut rng)))
            } else {
                xavier_uniform(&shape, &mut rng)
            }
        });
        let mut set = ParamSet::from_slots(cfg.depth, || params.next().expect("slot"));
        (set.head_weight, set.head_bias) = head_init(cfg.dim, cfg.num_classes, &mut rng);
        Ok(set)
    }

    /// Replaces the classification head with a fresh seeded one for `num_classes`.
    pub fn reinit_head(&mut self, num_classes: usize, seed: u64) {
        let dim = self.final_norm_gamma.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (self.head_weight, self.head_bias) = head_init(dim, num_classes, &mut rng);
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|t| Tensor::zeros(t.shape().to_vec()))
    }

    pub fn cast<U: Real>(&self) -> ParamSet<Tensor<U>> {
        self.map(Tensor::cast)
    }

    pub fn num_elements(&self) -> usize {
        self.iter().iter().map(|t| t.len()).sum()
    }

    /// Checks every tensor against the shapes `cfg` dictates.
    pub fn check_shapes(&self, cfg: &ViTConfig) -> Result<()> {
        let expected = manifest(cfg);
        if self.depth() != cfg.depth {
            return Err(Error::dim(format!(
                "parameters have {} layers, config has {}",
                self.depth(),
                cfg.depth
            )));
        }
        let bad: Vec<String> = expected
            .iter()
            .zip(self.iter())
            .filter(|((_, shape), t)| t.shape() != shape.as_slice())
            .map(|((name, shape), t)| format!("{name}: expected {shape:?}, got {:?}", t.shape()))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::dim(bad.join("; ")))
        }
    }

    /// Assembles a parameter set from named tensors; names and shapes must
    /// match the manifest exactly.
    pub fn from_named(cfg: &ViTConfig, mut tensors: BTreeMap<String, Tensor<T>>) -> Result<Self> {
        let expected = manifest(cfg);
        let mut problems = Vec::new();
        for (name, shape) in &expected {
            match tensors.get(name) {
                None => problems.push(format!("missing {name}")),
                Some(t) if t.shape() != shape.as_slice() => problems.push(format!(
                    "{name}: expected {shape:?}, got {:?}",
                    t.shape()
                )),
                Some(_) => {}
            }
        }
        let known: std::collections::HashSet<&str> =
            expected.iter().map(|(n, _)| n.as_str()).collect();
        problems.extend(
            tensors
                .keys()
                .filter(|k| !known.contains(k.as_str()))
                .map(|k| format!("unexpected {k}")),
        );
        if !problems.is_empty() {
            return Err(Error::dim(problems.join("; ")));
        }
        let mut names = expected.into_iter().map(|(n, _)| n);
        Ok(ParamSet::from_slots(cfg.depth, || {
            let name = names.next().expect("slot");
            tensors.remove(&name).expect("checked above")
        }))
    }
}
