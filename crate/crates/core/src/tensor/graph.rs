use std::borrow::Cow;
use std::marker::PhantomData;

use super::kernels;
use super::{Real, Tape, Tensor, Var};
use crate::error::Result;

/// The operations a model forward pass is written against.
///
/// [`Tape`] records them for differentiation; [`Eager`] evaluates them
/// directly and drops intermediates as soon as they go out of scope.
pub trait Graph<'a, T: Real> {
    type Node;

    fn input(&mut self, t: Tensor<T>) -> Self::Node;
    fn param(&mut self, t: &'a Tensor<T>) -> Self::Node;
    fn value<'s>(&'s self, node: &'s Self::Node) -> &'s Tensor<T>;

    fn linear(&mut self, x: &Self::Node, weight: &Self::Node, bias: &Self::Node) -> Result<Self::Node>;
    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn layer_norm(&mut self, x: &Self::Node, gamma: &Self::Node, beta: &Self::Node, eps: T) -> Result<Self::Node>;
    fn gelu(&mut self, x: &Self::Node) -> Result<Self::Node>;
    fn self_attention(&mut self, qkv: &Self::Node, heads: usize) -> Result<Self::Node>;
    fn embed(&mut self, projected: &Self::Node, cls: &Self::Node, pos: &Self::Node) -> Result<Self::Node>;
    fn select_token(&mut self, x: &Self::Node, index: usize) -> Result<Self::Node>;
}

impl<'a, T: Real> Graph<'a, T> for Tape<'a, T> {
    type Node = Var;

    fn input(&mut self, t: Tensor<T>) -> Var {
        Tape::input(self, t)
    }

    fn param(&mut self, t: &'a Tensor<T>) -> Var {
        Tape::param(self, t)
    }

    fn value<'s>(&'s self, node: &'s Var) -> &'s Tensor<T> {
        Tape::value(self, *node)
    }

    fn linear(&mut self, x: &Var, weight: &Var, bias: &Var) -> Result<Var> {
        Tape::linear(self, *x, *weight, *bias)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::add(self, *a, *b)
    }

    fn layer_norm(&mut self, x: &Var, gamma: &Var, beta: &Var, eps: T) -> Result<Var> {
        Tape::layer_norm(self, *x, *gamma, *beta, eps)
    }

    fn gelu(&mut self, x: &Var) -> Result<Var> {
        Tape::gelu(self, *x)
    }

    fn self_attention(&mut self, qkv: &Var, heads: usize) -> Result<Var> {
        Tape::self_attention(self, *qkv, heads)
    }

    fn embed(&mut self, projected: &Var, cls: &Var, pos: &Var) -> Result<Var> {
        Tape::embed(self, *projected, *cls, *pos)
    }

    fn select_token(&mut self, x: &Var, index: usize) -> Result<Var> {
        Tape::select_token(self, *x, index)
    }
}

/// Direct evaluation without recording.
#[derive(Debug, Default)]
pub struct Eager<'a, T> {
    _params: PhantomData<&'a T>,
}

impl<T> Eager<'_, T> {
    pub fn new() -> Self {
        Self {
            _params: PhantomData,
        }
    }
}

impl<'a, T: Real> Graph<'a, T> for Eager<'a, T> {
    type Node = Cow<'a, Tensor<T>>;

    fn input(&mut self, t: Tensor<T>) -> Self::Node {
        Cow::Owned(t)
    }

    fn param(&mut self, t: &'a Tensor<T>) -> Self::Node {
        Cow::Borrowed(t)
    }

    fn value<'s>(&'s self, node: &'s Self::Node) -> &'s Tensor<T> {
        node
    }

    fn linear(&mut self, x: &Self::Node, weight: &Self::Node, bias: &Self::Node) -> Result<Self::Node> {
        let h = kernels::matmul(x, weight)?;
        Ok(Cow::Owned(kernels::add_bias(&h, bias)?))
    }

    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        Ok(Cow::Owned(a.zip_map(b, |p, q| p + q)?))
    }

    fn layer_norm(&mut self, x: &Self::Node, gamma: &Self::Node, beta: &Self::Node, eps: T) -> Result<Self::Node> {
        Ok(Cow::Owned(kernels::layer_norm(x, gamma, beta, eps)?))
    }

    fn gelu(&mut self, x: &Self::Node) -> Result<Self::Node> {
        Ok(Cow::Owned(kernels::gelu(x)))
    }

    fn self_attention(&mut self, qkv: &Self::Node, heads: usize) -> Result<Self::Node> {
        Ok(Cow::Owned(kernels::multi_head_attention(qkv, heads)?.0))
    }

    fn embed(&mut self, projected: &Self::Node, cls: &Self::Node, pos: &Self::Node) -> Result<Self::Node> {
        Ok(Cow::Owned(kernels::embed_tokens(projected, cls, pos)?))
    }

    fn select_token(&mut self, x: &Self::Node, index: usize) -> Result<Self::Node> {
        Ok(Cow::Owned(kernels::select_token(x, index)?))
    }
}
