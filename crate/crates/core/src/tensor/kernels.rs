//! Forward kernels and their vector-Jacobian products.
//!
//! All kernels are pure. Row-parallel loops compute every output element in
//! a fixed order, so results do not depend on the worker count.

use rayon::prelude::*;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Work (multiply-adds) above which matmul rows are spread over threads.
const PARALLEL_WORK: usize = 1 << 16;

/// Default layer-norm epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// `c[m×n] = a[m×k] · b[k×n]`, all row-major.
fn gemm<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    let row = |(i, out): (usize, &mut [T])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (t, &a_it) in a_row.iter().enumerate() {
            if a_it == T::zero() {
                continue;
            }
            let b_row = &b[t * n..(t + 1) * n];
            for (o, &b_tj) in out.iter_mut().zip(b_row) {
                *o += a_it * b_tj;
            }
        }
    };
    if m * k * n >= PARALLEL_WORK && m > 1 {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}

/// `c[m×k] = a[m×n] · b[k×n]ᵀ`.
fn gemm_nt<T: Real>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * k];
    let row = |(i, out): (usize, &mut [T])| {
        let a_row = &a[i * n..(i + 1) * n];
        for (t, o) in out.iter_mut().enumerate() {
            let b_row = &b[t * n..(t + 1) * n];
            *o = a_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum();
        }
    };
    if m * k * n >= PARALLEL_WORK && m > 1 {
        c.par_chunks_mut(k).enumerate().for_each(row);
    } else {
        c.chunks_mut(k).enumerate().for_each(row);
    }
    c
}

/// `c[k×n] = a[m×k]ᵀ · b[m×n]`.
fn gemm_tn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    let row = |(t, out): (usize, &mut [T])| {
        for i in 0..m {
            let a_it = a[i * k + t];
            if a_it == T::zero() {
                continue;
            }
            let b_row = &b[i * n..(i + 1) * n];
            for (o, &b_ij) in out.iter_mut().zip(b_row) {
                *o += a_it * b_ij;
            }
        }
    };
    if m * k * n >= PARALLEL_WORK && k > 1 {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}

enum MatmulKind {
    /// `a[..., k] · b[k, n]`, leading axes of `a` flattened into rows.
    Shared { rows: usize, k: usize, n: usize },
    /// `a[B, m, k] · b[B, k, n]`.
    Batched {
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
}

fn matmul_kind<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<MatmulKind> {
    let mismatch = || {
        Error::dim(format!(
            "matmul cannot combine {:?} and {:?}",
            a.shape(),
            b.shape()
        ))
    };
    match (a.shape(), b.shape()) {
        (sa, &[k, n]) if !sa.is_empty() && sa[sa.len() - 1] == k => Ok(MatmulKind::Shared {
            rows: a.len() / k,
            k,
            n,
        }),
        (&[ba, m, ka], &[bb, kb, n]) if ba == bb && ka == kb => Ok(MatmulKind::Batched {
            batch: ba,
            m,
            k: ka,
            n,
        }),
        _ => Err(mismatch()),
    }
}

/// Matrix product.
///
/// With a 2-D right operand, every leading index of `a` is treated as a row
/// (`[.., k] × [k, n] → [.., n]`). With two 3-D operands the product is taken
/// independently per leading batch index.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    match matmul_kind(a, b)? {
        MatmulKind::Shared { rows, k, n } => {
            let mut shape = a.shape().to_vec();
            *shape.last_mut().expect("rank >= 1") = n;
            Ok(Tensor::from_parts(shape, gemm(a.data(), b.data(), rows, k, n)))
        }
        MatmulKind::Batched { batch, m, k, n } => {
            let mut out = Vec::with_capacity(batch * m * n);
            for i in 0..batch {
                let ai = &a.data()[i * m * k..(i + 1) * m * k];
                let bi = &b.data()[i * k * n..(i + 1) * k * n];
                out.extend(gemm(ai, bi, m, k, n));
            }
            Ok(Tensor::from_parts(vec![batch, m, n], out))
        }
    }
}

/// Gradients of `matmul(a, b)` given the output cotangent `dc`.
pub fn matmul_backward<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    dc: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    match matmul_kind(a, b)? {
        MatmulKind::Shared { rows, k, n } => {
            let da = gemm_nt(dc.data(), b.data(), rows, n, k);
            let db = gemm_tn(a.data(), dc.data(), rows, k, n);
            Ok((
                Tensor::from_parts(a.shape().to_vec(), da),
                Tensor::from_parts(b.shape().to_vec(), db),
            ))
        }
        MatmulKind::Batched { batch, m, k, n } => {
            let mut da = Vec::with_capacity(a.len());
            let mut db = Vec::with_capacity(b.len());
            for i in 0..batch {
                let ai = &a.data()[i * m * k..(i + 1) * m * k];
                let bi = &b.data()[i * k * n..(i + 1) * k * n];
                let dci = &dc.data()[i * m * n..(i + 1) * m * n];
                da.extend(gemm_nt(dci, bi, m, n, k));
                db.extend(gemm_tn(ai, dci, m, k, n));
            }
            Ok((
                Tensor::from_parts(a.shape().to_vec(), da),
                Tensor::from_parts(b.shape().to_vec(), db),
            ))
        }
    }
}

/// Splits a shape around `axis` into `(outer, extent, inner)` strides.
fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::dim(format!(
            "axis {axis} out of range for shape {shape:?}"
        )));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Numerically stable softmax along `axis` (max is subtracted per slice).
pub fn softmax<T: Real>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, extent, inner) = axis_layout(x.shape(), axis)?;
    let src = x.data();
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * extent * inner + j * inner + i;
            let max = (0..extent)
                .map(|j| src[at(j)])
                .fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for j in 0..extent {
                let e = (src[at(j)] - max).exp();
                out[at(j)] = e;
                total += e;
            }
            for j in 0..extent {
                out[at(j)] /= total;
            }
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// VJP of softmax given its output `y`: `dx = y ⊙ (dy − Σ dy⊙y)`.
pub fn softmax_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    y.expect_same_shape(dy)?;
    let (outer, extent, inner) = axis_layout(y.shape(), axis)?;
    let (ys, dys) = (y.data(), dy.data());
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * extent * inner + j * inner + i;
            let dot: T = (0..extent).map(|j| ys[at(j)] * dys[at(j)]).sum();
            for j in 0..extent {
                dx[at(j)] = ys[at(j)] * (dys[at(j)] - dot);
            }
        }
    }
    Ok(Tensor::from_parts(y.shape().to_vec(), dx))
}

/// Forward result of layer normalization with the statistics its VJP needs.
#[derive(Debug, Clone)]
pub struct LayerNormOutput<T> {
    pub out: Tensor<T>,
    /// Normalized input `(x − mean)·rstd`, same shape as `x`.
    pub normalized: Tensor<T>,
    /// `1/√(var + eps)` per last-axis slice.
    pub rstd: Vec<T>,
}

fn check_affine<T: Real>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<usize> {
    let d = x.last_dim();
    if x.rank() == 0 || gamma.len() != d || beta.len() != d || gamma.rank() != 1 || beta.rank() != 1
    {
        return Err(Error::dim(format!(
            "layer_norm: input {:?} with gamma {:?} and beta {:?}",
            x.shape(),
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok(d)
}

pub fn layer_norm_full<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<LayerNormOutput<T>> {
    let d = check_affine(x, gamma, beta)?;
    let n = T::of(d as f64);
    let mut out = vec![T::zero(); x.len()];
    let mut normalized = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(x.len() / d);
    for ((src, dst), xhat) in x
        .data()
        .chunks(d)
        .zip(out.chunks_mut(d))
        .zip(normalized.chunks_mut(d))
    {
        let mean = src.iter().copied().sum::<T>() / n;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let r = T::one() / (var + eps).sqrt();
        for j in 0..d {
            xhat[j] = (src[j] - mean) * r;
            dst[j] = gamma.data()[j] * xhat[j] + beta.data()[j];
        }
        rstd.push(r);
    }
    Ok(LayerNormOutput {
        out: Tensor::from_parts(x.shape().to_vec(), out),
        normalized: Tensor::from_parts(x.shape().to_vec(), normalized),
        rstd,
    })
}

/// Layer normalization over the last axis with population variance.
pub fn layer_norm<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    if eps <= T::zero() {
        return Err(Error::Contract("layer_norm eps must be positive".into()));
    }
    Ok(layer_norm_full(x, gamma, beta, eps)?.out)
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn layer_norm_backward<T: Real>(
    normalized: &Tensor<T>,
    rstd: &[T],
    gamma: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    normalized.expect_same_shape(dy)?;
    let d = gamma.len();
    let n = T::of(d as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgamma = vec![T::zero(); d];
    let mut dbeta = vec![T::zero(); d];
    let mut dxhat = vec![T::zero(); d];
    for (((dy_row, xhat), dx_row), &r) in dy
        .data()
        .chunks(d)
        .zip(normalized.data().chunks(d))
        .zip(dx.chunks_mut(d))
        .zip(rstd)
    {
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            dgamma[j] += dy_row[j] * xhat[j];
            dbeta[j] += dy_row[j];
            dxhat[j] = dy_row[j] * gamma.data()[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[j];
        }
        mean_dxhat /= n;
        mean_dxhat_xhat /= n;
        for j in 0..d {
            dx_row[j] = r * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
    }
    Ok((
        Tensor::from_parts(dy.shape().to_vec(), dx),
        Tensor::from_parts(vec![d], dgamma),
        Tensor::from_parts(vec![d], dbeta),
    ))
}

/// Standard normal CDF via the error function.
pub fn normal_cdf<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    half * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * normal_cdf(v))
}

/// `dx = dy ⊙ (Φ(x) + x·φ(x))`.
pub fn gelu_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    let inv_sqrt_2pi = T::of(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    x.zip_map(dy, |v, g| {
        let pdf = inv_sqrt_2pi * (-(v * v) * T::of(0.5)).exp();
        g * (normal_cdf(v) + v * pdf)
    })
}

/// Scaled dot-product attention for one head.
#[derive(Debug, Clone)]
pub struct AttentionOutput<T> {
    /// `T×d_k` output.
    pub out: Tensor<T>,
    /// `T×T` attention weights; each row sums to one.
    pub weights: Tensor<T>,
}

fn check_qkv<T: Real>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>) -> Result<(usize, usize)> {
    match (q.shape(), k.shape(), v.shape()) {
        (&[tq, dq], &[tk, dk], &[tv, dv]) if tq == tk && tk == tv && dq == dk && dk == dv => {
            Ok((tq, dq))
        }
        _ => Err(Error::dim(format!(
            "attention needs matching T×d_k operands, got Q {:?}, K {:?}, V {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        ))),
    }
}

/// `softmax(QKᵀ/√d_k)·V`, softmax taken over keys.
pub fn attention<T: Real>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>) -> Result<AttentionOutput<T>> {
    let (tokens, dk) = check_qkv(q, k, v)?;
    let scale = T::one() / T::of(dk as f64).sqrt();
    let mut logits = gemm_nt(q.data(), k.data(), tokens, dk, tokens);
    logits.iter_mut().for_each(|s| *s *= scale);
    let weights = softmax(&Tensor::from_parts(vec![tokens, tokens], logits), 1)?;
    let out = gemm(weights.data(), v.data(), tokens, tokens, dk);
    Ok(AttentionOutput {
        out: Tensor::from_parts(vec![tokens, dk], out),
        weights,
    })
}

/// Returns `(dq, dk, dv)` for one head.
pub fn attention_backward<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    weights: &Tensor<T>,
    dout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (tokens, dk) = check_qkv(q, k, v)?;
    let scale = T::one() / T::of(dk as f64).sqrt();
    let dv = gemm_tn(weights.data(), dout.data(), tokens, tokens, dk);
    let dweights = gemm_nt(dout.data(), v.data(), tokens, dk, tokens);
    let dlogits = softmax_backward(
        weights,
        &Tensor::from_parts(vec![tokens, tokens], dweights),
        1,
    )?;
    let mut dq = gemm(dlogits.data(), k.data(), tokens, tokens, dk);
    let mut dkk = gemm_tn(dlogits.data(), q.data(), tokens, tokens, dk);
    dq.iter_mut().for_each(|x| *x *= scale);
    dkk.iter_mut().for_each(|x| *x *= scale);
    let shape = vec![tokens, dk];
    Ok((
        Tensor::from_parts(shape.clone(), dq),
        Tensor::from_parts(shape.clone(), dkk),
        Tensor::from_parts(shape, dv),
    ))
}

/// Adds `bias[d]` to every last-axis slice of `x[.., d]`.
pub fn add_bias<T: Real>(x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let d = x.last_dim();
    if x.rank() == 0 || bias.rank() != 1 || bias.len() != d {
        return Err(Error::dim(format!(
            "bias {:?} does not match last axis of {:?}",
            bias.shape(),
            x.shape()
        )));
    }
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(d) {
        for (o, &b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// Sums `dy[.., d]` over all leading axes.
pub fn sum_rows<T: Real>(dy: &Tensor<T>) -> Tensor<T> {
    let d = dy.last_dim();
    let mut acc = vec![T::zero(); d];
    for row in dy.data().chunks(d) {
        for (a, &g) in acc.iter_mut().zip(row) {
            *a += g;
        }
    }
    Tensor::from_parts(vec![d], acc)
}

fn check_fused_qkv<T: Real>(qkv: &Tensor<T>, heads: usize) -> Result<(usize, usize, usize)> {
    match qkv.shape() {
        &[batch, tokens, three_d] if three_d % 3 == 0 && heads > 0 && (three_d / 3) % heads == 0 => {
            Ok((batch, tokens, three_d / 3))
        }
        s => Err(Error::dim(format!(
            "fused qkv {s:?} is not [B, T, 3·D] with D divisible by {heads} heads"
        ))),
    }
}

/// Copies the `(q, k, v)` slices of one head out of a fused `[T, 3D]` block.
fn head_slices<T: Real>(block: &[T], tokens: usize, dim: usize, head: usize, dk: usize) -> [Tensor<T>; 3] {
    std::array::from_fn(|part| {
        let start = part * dim + head * dk;
        let mut buf = Vec::with_capacity(tokens * dk);
        for t in 0..tokens {
            let row = &block[t * 3 * dim..(t + 1) * 3 * dim];
            buf.extend_from_slice(&row[start..start + dk]);
        }
        Tensor::from_parts(vec![tokens, dk], buf)
    })
}

/// Multi-head self-attention core over a fused projection `qkv[B, T, 3D]`.
///
/// Head `h` reads columns `h·d_k..(h+1)·d_k` of each of the q, k and v
/// blocks (in that order). Heads are concatenated into `[B, T, D]`. The
/// per-`(batch, head)` attention weights are returned alongside.
pub fn multi_head_attention<T: Real>(
    qkv: &Tensor<T>,
    heads: usize,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let (batch, tokens, dim) = check_fused_qkv(qkv, heads)?;
    let dk = dim / heads;
    let per_head: Vec<AttentionOutput<T>> = (0..batch * heads)
        .into_par_iter()
        .map(|bh| {
            let (b, h) = (bh / heads, bh % heads);
            let block = &qkv.data()[b * tokens * 3 * dim..(b + 1) * tokens * 3 * dim];
            let [q, k, v] = head_slices(block, tokens, dim, h, dk);
            attention(&q, &k, &v)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![T::zero(); batch * tokens * dim];
    let mut weights = Vec::with_capacity(batch * heads);
    for (bh, head) in per_head.into_iter().enumerate() {
        let (b, h) = (bh / heads, bh % heads);
        for t in 0..tokens {
            let dst = (b * tokens + t) * dim + h * dk;
            out[dst..dst + dk].copy_from_slice(&head.out.data()[t * dk..(t + 1) * dk]);
        }
        weights.push(head.weights);
    }
    Ok((Tensor::from_parts(vec![batch, tokens, dim], out), weights))
}

pub fn multi_head_attention_backward<T: Real>(
    qkv: &Tensor<T>,
    heads: usize,
    weights: &[Tensor<T>],
    dout: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (batch, tokens, dim) = check_fused_qkv(qkv, heads)?;
    let dk = dim / heads;
    let per_head: Vec<(Tensor<T>, Tensor<T>, Tensor<T>)> = (0..batch * heads)
        .into_par_iter()
        .map(|bh| {
            let (b, h) = (bh / heads, bh % heads);
            let block = &qkv.data()[b * tokens * 3 * dim..(b + 1) * tokens * 3 * dim];
            let [q, k, v] = head_slices(block, tokens, dim, h, dk);
            let mut d = Vec::with_capacity(tokens * dk);
            for t in 0..tokens {
                let src = (b * tokens + t) * dim + h * dk;
                d.extend_from_slice(&dout.data()[src..src + dk]);
            }
            attention_backward(&q, &k, &v, &weights[bh], &Tensor::from_parts(vec![tokens, dk], d))
        })
        .collect::<Result<_>>()?;
    let mut dqkv = vec![T::zero(); qkv.len()];
    for (bh, (dq, dkk, dv)) in per_head.into_iter().enumerate() {
        let (b, h) = (bh / heads, bh % heads);
        for (part, grad) in [dq, dkk, dv].iter().enumerate() {
            for t in 0..tokens {
                let dst = (b * tokens + t) * 3 * dim + part * dim + h * dk;
                dqkv[dst..dst + dk].copy_from_slice(&grad.data()[t * dk..(t + 1) * dk]);
            }
        }
    }
    Ok(Tensor::from_parts(qkv.shape().to_vec(), dqkv))
}

/// Builds the token sequence `[cls + pos₀, proj₁ + pos₁, …]` of shape `[B, N+1, D]`
/// from projected patches `[B, N, D]`, a class token `[1, D]` and positions `[N+1, D]`.
pub fn embed_tokens<T: Real>(
    projected: &Tensor<T>,
    cls: &Tensor<T>,
    pos: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (batch, n, d) = match projected.shape() {
        &[b, n, d] => (b, n, d),
        s => return Err(Error::dim(format!("projected patches must be [B, N, D], got {s:?}"))),
    };
    if cls.shape() != [1, d] || pos.shape() != [n + 1, d] {
        return Err(Error::dim(format!(
            "embed: patches {:?}, cls {:?}, positions {:?}",
            projected.shape(),
            cls.shape(),
            pos.shape()
        )));
    }
    let mut out = Vec::with_capacity(batch * (n + 1) * d);
    for b in 0..batch {
        out.extend(cls.data().iter().zip(&pos.data()[..d]).map(|(&c, &p)| c + p));
        let patches = &projected.data()[b * n * d..(b + 1) * n * d];
        out.extend(patches.iter().zip(&pos.data()[d..]).map(|(&e, &p)| e + p));
    }
    Ok(Tensor::from_parts(vec![batch, n + 1, d], out))
}

/// Returns `(d_projected, d_cls, d_pos)`.
pub fn embed_tokens_backward<T: Real>(dy: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (batch, tokens, d) = match dy.shape() {
        &[b, t, d] if t >= 2 => (b, t, d),
        s => return Err(Error::dim(format!("embed cotangent must be [B, N+1, D], got {s:?}"))),
    };
    let mut dproj = Vec::with_capacity(batch * (tokens - 1) * d);
    let mut dpos = vec![T::zero(); tokens * d];
    for b in 0..batch {
        let seq = &dy.data()[b * tokens * d..(b + 1) * tokens * d];
        dproj.extend_from_slice(&seq[d..]);
        for (acc, &g) in dpos.iter_mut().zip(seq) {
            *acc += g;
        }
    }
    let dcls = dpos[..d].to_vec();
    Ok((
        Tensor::from_parts(vec![batch, tokens - 1, d], dproj),
        Tensor::from_parts(vec![1, d], dcls),
        Tensor::from_parts(vec![tokens, d], dpos),
    ))
}

/// Picks token `index` from every sequence of `x[B, T, D]`, giving `[B, D]`.
pub fn select_token<T: Real>(x: &Tensor<T>, index: usize) -> Result<Tensor<T>> {
    let (batch, tokens, d) = match x.shape() {
        &[b, t, d] if index < t => (b, t, d),
        s => return Err(Error::dim(format!("cannot select token {index} from {s:?}"))),
    };
    let mut out = Vec::with_capacity(batch * d);
    for b in 0..batch {
        let at = (b * tokens + index) * d;
        out.extend_from_slice(&x.data()[at..at + d]);
    }
    Ok(Tensor::from_parts(vec![batch, d], out))
}

pub fn select_token_backward<T: Real>(shape: &[usize], index: usize, dy: &Tensor<T>) -> Tensor<T> {
    let (tokens, d) = (shape[1], shape[2]);
    let mut dx = Tensor::zeros(shape.to_vec());
    for (b, row) in dy.data().chunks(d).enumerate() {
        let at = (b * tokens + index) * d;
        dx.data_mut()[at..at + d].copy_from_slice(row);
    }
    dx
}

/// Mean cross-entropy of `logits[B, C]` against integer labels, via
/// `logsumexp(row) − row[label]`. Returns the loss and the softmax rows.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (batch, classes) = match logits.shape() {
        &[b, c] if b == labels.len() => (b, c),
        s => {
            return Err(Error::dim(format!(
                "logits {s:?} do not match {} labels",
                labels.len()
            )))
        }
    };
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::Label {
            row,
            label,
            num_classes: classes,
        });
    }
    let mut total = T::zero();
    for (row, &label) in logits.data().chunks(classes).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
        total += lse - row[label];
    }
    let probs = softmax(logits, 1)?;
    Ok((total / T::of(batch as f64), probs))
}

/// `d logits = upstream · (softmax − onehot) / B`.
pub fn cross_entropy_backward<T: Real>(probs: &Tensor<T>, labels: &[usize], upstream: T) -> Tensor<T> {
    let classes = probs.last_dim();
    let scale = upstream / T::of(labels.len() as f64);
    let mut d = probs.data().to_vec();
    for (row, &label) in d.chunks_mut(classes).zip(labels) {
        row[label] -= T::one();
        row.iter_mut().for_each(|g| *g *= scale);
    }
    Tensor::from_parts(probs.shape().to_vec(), d)
}
