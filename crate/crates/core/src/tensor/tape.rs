use std::borrow::Cow;
use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{self, LayerNormOutput};
use super::{Real, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Softmax(Var, usize),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor<T>,
        rstd: Vec<T>,
    },
    Gelu(Var),
    SelfAttention {
        qkv: Var,
        heads: usize,
        weights: Vec<Tensor<T>>,
    },
    Embed {
        projected: Var,
        cls: Var,
        pos: Var,
    },
    SelectToken(Var, usize),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    trainable: bool,
}

/// Linear record of executed operations for reverse-mode differentiation.
///
/// Parameters are borrowed for the tape's lifetime, so recording a forward
/// pass never copies weights. A tape is single-writer: one training step
/// owns it exclusively.
pub struct Tape<'a, T: Real> {
    id: u64,
    nodes: Vec<Node<'a, T>>,
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            trainable,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn node(&self, var: Var) -> Result<&Node<'a, T>> {
        if var.tape != self.id {
            return Err(Error::Contract("variable belongs to a different tape".into()));
        }
        Ok(&self.nodes[var.index])
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        self.node(var).expect("variable from this tape").value.as_ref()
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    /// Trainable parameter borrowed for the tape's lifetime.
    pub fn param(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    pub fn param_owned(&mut self, t: Tensor<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    fn values2(&self, a: Var, b: Var) -> Result<(&Tensor<T>, &Tensor<T>)> {
        Ok((&self.node(a)?.value, &self.node(b)?.value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = self.values2(a, b)?;
        let out = kernels::matmul(x, y)?;
        Ok(self.push(Cow::Owned(out), Op::MatMul(a, b), false))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = self.values2(x, bias)?;
        let out = kernels::add_bias(xv, bv)?;
        Ok(self.push(Cow::Owned(out), Op::AddBias(x, bias), false))
    }

    /// `x · W + b`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let h = self.matmul(x, weight)?;
        self.add_bias(h, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = self.values2(a, b)?;
        let out = x.zip_map(y, |p, q| p + q)?;
        Ok(self.push(Cow::Owned(out), Op::Add(a, b), false))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = self.values2(a, b)?;
        let out = x.zip_map(y, |p, q| p * q)?;
        Ok(self.push(Cow::Owned(out), Op::Mul(a, b), false))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.node(x)?.value.sum();
        Ok(self.push(Cow::Owned(Tensor::scalar(total)), Op::Sum(x), false))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = kernels::softmax(&self.node(x)?.value, axis)?;
        Ok(self.push(Cow::Owned(out), Op::Softmax(x, axis), false))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        if eps <= T::zero() {
            return Err(Error::Contract("layer_norm eps must be positive".into()));
        }
        let LayerNormOutput {
            out,
            normalized,
            rstd,
        } = kernels::layer_norm_full(
            &self.node(x)?.value,
            &self.node(gamma)?.value,
            &self.node(beta)?.value,
            eps,
        )?;
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            normalized,
            rstd,
        };
        Ok(self.push(Cow::Owned(out), op, false))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = kernels::gelu(&self.node(x)?.value);
        Ok(self.push(Cow::Owned(out), Op::Gelu(x), false))
    }

    /// See [`kernels::multi_head_attention`].
    pub fn self_attention(&mut self, qkv: Var, heads: usize) -> Result<Var> {
        let (out, weights) = kernels::multi_head_attention(&self.node(qkv)?.value, heads)?;
        let op = Op::SelfAttention {
            qkv,
            heads,
            weights,
        };
        Ok(self.push(Cow::Owned(out), op, false))
    }

    /// Attention weights recorded by a [`Tape::self_attention`] node, one per `(batch, head)`.
    pub fn attention_weights(&self, var: Var) -> Option<&[Tensor<T>]> {
        match &self.node(var).ok()?.op {
            Op::SelfAttention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// See [`kernels::embed_tokens`].
    pub fn embed(&mut self, projected: Var, cls: Var, pos: Var) -> Result<Var> {
        let out = kernels::embed_tokens(
            &self.node(projected)?.value,
            &self.node(cls)?.value,
            &self.node(pos)?.value,
        )?;
        let op = Op::Embed {
            projected,
            cls,
            pos,
        };
        Ok(self.push(Cow::Owned(out), op, false))
    }

    pub fn select_token(&mut self, x: Var, index: usize) -> Result<Var> {
        let out = kernels::select_token(&self.node(x)?.value, index)?;
        Ok(self.push(Cow::Owned(out), Op::SelectToken(x, index), false))
    }

    /// Mean cross-entropy loss (scalar) of `logits[B, C]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = kernels::cross_entropy(&self.node(logits)?.value, labels)?;
        let op = Op::CrossEntropy {
            logits,
            labels: labels.to_vec(),
            probs,
        };
        Ok(self.push(Cow::Owned(Tensor::scalar(loss)), op, false))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every trainable leaf recorded before `loss` receives a gradient of its
    /// own shape, zero if the loss does not depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = self.node(loss)?;
        if !root.value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.index).map(|_| None).collect();
        grads[loss.index] = Some(Tensor::full(root.value.shape().to_vec(), T::one()));

        for index in (0..=loss.index).rev() {
            let node = &self.nodes[index];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[index].take() else {
                continue;
            };
            for (var, contribution) in self.vjp(node, &g)? {
                match &mut grads[var.index] {
                    Some(acc) => acc.add_assign(&contribution)?,
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        let params = self.nodes[..=loss.index]
            .iter()
            .enumerate()
            .filter(|(_, n)| n.trainable)
            .map(|(i, n)| {
                let g = grads[i]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(n.value.shape().to_vec()));
                (i, g)
            })
            .collect();
        Ok(Gradients {
            tape: self.id,
            params,
        })
    }

    fn val(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.index].value
    }

    fn vjp(&self, node: &Node<'a, T>, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (da, db) = kernels::matmul_backward(self.val(*a), self.val(*b), g)?;
                vec![(*a, da), (*b, db)]
            }
            Op::AddBias(x, bias) => vec![(*x, g.clone()), (*bias, kernels::sum_rows(g))],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Mul(a, b) => {
                let da = g.zip_map(self.val(*b), |p, q| p * q)?;
                let db = g.zip_map(self.val(*a), |p, q| p * q)?;
                vec![(*a, da), (*b, db)]
            }
            Op::Sum(x) => {
                let up = g.item()?;
                vec![(*x, Tensor::full(self.val(*x).shape().to_vec(), up))]
            }
            Op::Softmax(x, axis) => {
                vec![(*x, kernels::softmax_backward(&node.value, g, *axis)?)]
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                rstd,
            } => {
                let (dx, dg, db) =
                    kernels::layer_norm_backward(normalized, rstd, self.val(*gamma), g)?;
                vec![(*x, dx), (*gamma, dg), (*beta, db)]
            }
            Op::Gelu(x) => vec![(*x, kernels::gelu_backward(self.val(*x), g)?)],
            Op::SelfAttention {
                qkv,
                heads,
                weights,
            } => {
                let d = kernels::multi_head_attention_backward(self.val(*qkv), *heads, weights, g)?;
                vec![(*qkv, d)]
            }
            Op::Embed {
                projected,
                cls,
                pos,
            } => {
                let (dp, dc, dpos) = kernels::embed_tokens_backward(g)?;
                vec![(*projected, dp), (*cls, dc), (*pos, dpos)]
            }
            Op::SelectToken(x, index) => {
                vec![(*x, kernels::select_token_backward(self.val(*x).shape(), *index, g))]
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let d = kernels::cross_entropy_backward(probs, labels, g.item()?);
                vec![(*logits, d)]
            }
        })
    }
}

/// Gradients of trainable leaves produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    tape: u64,
    params: Vec<(usize, Tensor<T>)>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        if var.tape != self.tape {
            return None;
        }
        self.params
            .binary_search_by_key(&var.index, |(i, _)| *i)
            .ok()
            .map(|at| &self.params[at].1)
    }

    /// Removes and returns the gradient of `var`.
    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        if var.tape != self.tape {
            return None;
        }
        let at = self
            .params
            .binary_search_by_key(&var.index, |(i, _)| *i)
            .ok()?;
        Some(std::mem::replace(&mut self.params[at].1, Tensor::scalar(T::zero())))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.5..1.5))
    }

    #[test]
    fn bilinear_form_gradients_swap_operands() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[3, 4], &mut rng);
        let mut tape = Tape::new();
        let va = tape.param(&a);
        let vb = tape.param(&b);
        let prod = tape.mul(va, vb).unwrap();
        let loss = tape.sum(prod).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(va).unwrap(), &b);
        assert_eq!(grads.get(vb).unwrap(), &a);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let x = Tensor::<f64>::ones([2, 2]);
        let unused = Tensor::<f64>::ones([5]);
        let mut tape = Tape::new();
        let vx = tape.param(&x);
        let vu = tape.param(&unused);
        let loss = tape.sum(vx).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.len(), 2);
        assert_eq!(grads.get(vu).unwrap(), &Tensor::zeros([5]));
    }

    #[test]
    fn constant_loss_gives_zero_gradient() {
        let theta = Tensor::<f64>::full([3], 2.0);
        let mut tape = Tape::new();
        let vt = tape.param(&theta);
        let c = tape.input(Tensor::full([4], 1.5));
        let loss = tape.sum(c).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(vt).unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_rejects_non_scalar_and_foreign_loss() {
        let x = Tensor::<f64>::ones([2]);
        let mut tape = Tape::new();
        let vx = tape.param(&x);
        assert!(matches!(tape.backward(vx), Err(Error::Contract(_))));

        let mut other = Tape::new();
        let vy = other.param(&x);
        let foreign = other.sum(vy).unwrap();
        assert!(matches!(tape.backward(foreign), Err(Error::Contract(_))));
    }

    #[test]
    fn shared_input_accumulates() {
        let x = Tensor::<f64>::new([2], vec![1.0, 3.0]).unwrap();
        let mut tape = Tape::new();
        let vx = tape.param(&x);
        let sq = tape.mul(vx, vx).unwrap();
        let both = tape.add(sq, vx).unwrap();
        let loss = tape.sum(both).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(vx).unwrap().data(), &[3.0, 7.0]);
    }
}
