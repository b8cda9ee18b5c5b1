//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node holding its output value and the inputs it
//! read. [`Tape::backward`] walks the nodes in reverse execution order and applies
//! each node's backward rule, accumulating (`+=`) into input gradients. Leaves
//! created from tensors with `requires_grad` receive their gradient both on the
//! tape and in the leaf tensor's own `grad` buffer.

use std::sync::Arc;

use crate::element::{gemm, Element, Layout};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::transforms::{Transform2d, TransformKind};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T: Element> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        rows: usize,
        inner: usize,
        cols: usize,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        alpha: T,
    },
    Sum {
        x: Var,
    },
    Concat {
        a: Var,
        b: Var,
        width_a: usize,
        width_b: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<T>,
        inv_std: Vec<T>,
    },
    Gelu {
        x: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        target: Vec<T>,
        probs: Vec<T>,
        batch: usize,
    },
    MeanTokens {
        x: Var,
        tokens: usize,
        channels: usize,
    },
    Transform {
        x: Var,
        transform: Arc<Transform2d<T>>,
    },
    Patchify {
        x: Var,
        geometry: PatchGeometry,
    },
}

impl<T: Element> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::AddBias { .. } => "add_bias",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::Sum { .. } => "sum",
            Op::Concat { .. } => "concat_last",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gelu { .. } => "gelu",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::MeanTokens { .. } => "mean_tokens",
            Op::Transform { .. } => "transform2d",
            Op::Patchify { .. } => "patchify",
        }
    }
}

/// Image-to-token layout for [`Tape::patchify`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub patch: usize,
}

impl PatchGeometry {
    pub fn grid_h(&self) -> usize {
        self.height / self.patch
    }

    pub fn grid_w(&self) -> usize {
        self.width / self.patch
    }

    pub fn tokens(&self) -> usize {
        self.grid_h() * self.grid_w()
    }

    pub fn features(&self) -> usize {
        self.channels * self.patch * self.patch
    }

    /// Calls `f(image_index, token_index)` for every pixel: the flat offset in the
    /// `[B, C, H, W]` image buffer and the flat offset in the `[B, N, C·P²]` token buffer.
    fn for_each_pixel(&self, mut f: impl FnMut(usize, usize)) {
        let (p, gw, feat, tokens) = (self.patch, self.grid_w(), self.features(), self.tokens());
        for b in 0..self.batch {
            for ch in 0..self.channels {
                for y in 0..self.height {
                    for x in 0..self.width {
                        let img = ((b * self.channels + ch) * self.height + y) * self.width + x;
                        let token = (y / p) * gw + x / p;
                        let feature = ch * p * p + (y % p) * p + x % p;
                        f(img, (b * tokens + token) * feat + feature);
                    }
                }
            }
        }
    }
}

struct Node<T: Element> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Record of executed operations. One tape per forward/backward step.
pub struct Tape<T: Element> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input. Gradients flow to it iff `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs_grad = tensor.requires_grad;
        self.push_unchecked(tensor, Op::Leaf, needs_grad)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, mut tensor: Tensor<T>) -> Var {
        tensor.requires_grad = false;
        self.leaf(tensor)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` call with respect to `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn push_unchecked(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, shape: &[usize], data: Vec<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{} produced {} at flat index {pos}",
                op.name(),
                data[pos]
            )));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        let value = Tensor::new(shape, data)?;
        Ok(self.push_unchecked(value, op, needs_grad))
    }

    /// `A [.., m, k] × B [k, n] → [.., m, n]`, broadcasting `B` over the leading axes of `A`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(Error::shape(format!(
                "matmul: cannot multiply {sa:?} by {sb:?}"
            )));
        }
        let inner = sb[0];
        let cols = sb[1];
        let rows = self.data(a).len() / inner;
        let mut out = vec![T::ZERO; rows * cols];
        gemm(
            rows,
            inner,
            cols,
            self.data(a),
            Layout::Normal,
            self.data(b),
            Layout::Normal,
            T::ZERO,
            &mut out,
        );
        let mut shape = sa;
        *shape.last_mut().unwrap() = cols;
        self.push(
            &shape,
            out,
            Op::MatMul {
                a,
                b,
                rows,
                inner,
                cols,
            },
            &[a, b],
        )
    }

    /// `x [.., C] + bias [C]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = self.value(x).last_dim();
        if self.shape(bias) != [c] {
            return Err(Error::shape(format!(
                "add_bias: bias {:?} does not match last axis of {:?}",
                self.shape(bias),
                self.shape(x)
            )));
        }
        let b = self.data(bias);
        let out: Vec<T> = self
            .data(x)
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &w)| v + w))
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(&shape, out, Op::AddBias { x, bias }, &[x, bias])
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(&shape, out, Op::Add { a, b }, &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(&shape, out, Op::Mul { a, b }, &[a, b])
    }

    pub fn scale(&mut self, x: Var, alpha: T) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| v * alpha).collect();
        let shape = self.shape(x).to_vec();
        self.push(&shape, out, Op::Scale { x, alpha }, &[x])
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: T = self.data(x).iter().copied().sum();
        self.push(&[1], vec![s], Op::Sum { x }, &[x])
    }

    /// Concatenates along the last axis: `A`'s slots, then `B`'s.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::shape(format!(
                "concat_last: leading axes of {sa:?} and {sb:?} differ"
            )));
        }
        let width_a = *sa.last().unwrap();
        let width_b = *sb.last().unwrap();
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = width_a + width_b;
        let mut out = Vec::with_capacity(self.data(a).len() + self.data(b).len());
        for (ra, rb) in self
            .data(a)
            .chunks_exact(width_a)
            .zip(self.data(b).chunks_exact(width_b))
        {
            out.extend_from_slice(ra);
            out.extend_from_slice(rb);
        }
        self.push(
            &shape,
            out,
            Op::Concat {
                a,
                b,
                width_a,
                width_b,
            },
            &[a, b],
        )
    }

    /// Layer normalisation over the last axis with population variance.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let c = self.value(x).last_dim();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape(format!(
                "layer_norm: gamma {:?} / beta {:?} must both be [{c}] for input {:?}",
                self.shape(gamma),
                self.shape(beta),
                self.shape(x)
            )));
        }
        let cf = T::from_usize(c);
        let (g, bt) = (self.data(gamma), self.data(beta));
        let xs = self.data(x);
        let rows = xs.len() / c;
        let mut normalized = Vec::with_capacity(xs.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xs.len());
        for row in xs.chunks_exact(c) {
            let mean = row.iter().copied().sum::<T>() / cf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cf;
            let r = T::ONE / (var + eps).sqrt();
            inv_std.push(r);
            for ((&v, &gi), &bi) in row.iter().zip(g).zip(bt) {
                let n = (v - mean) * r;
                normalized.push(n);
                out.push(n * gi + bi);
            }
        }
        let shape = self.shape(x).to_vec();
        self.push(
            &shape,
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// Exact (erf-based) GELU: `x · Φ(x)`.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        if let Some(v) = self.data(x).iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gelu input contains {v}")));
        }
        let out = self.data(x).iter().map(|&v| gelu(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(&shape, out, Op::Gelu { x }, &[x])
    }

    /// Mean over the batch of `-Σ target · log_softmax(logits)`.
    ///
    /// `target` rows must be probability vectors (sum to 1 within 1e-6).
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &Tensor<T>) -> Result<Var> {
        let shape = self.shape(logits);
        if shape.len() != 2 || shape[1] < 2 || target.shape() != shape {
            return Err(Error::shape(format!(
                "softmax_cross_entropy: logits {shape:?} and targets {:?} must both be [B, K] with K >= 2",
                target.shape()
            )));
        }
        let (batch, k) = (shape[0], shape[1]);
        for (i, row) in target.data().chunks_exact(k).enumerate() {
            let s: f64 = row.iter().map(|v| v.to_f64()).sum();
            if (s - 1.0).abs() > 1e-6 || row.iter().any(|v| v.to_f64() < 0.0) {
                return Err(Error::validation(format!(
                    "target row {i} is not a probability vector (sum {s})"
                )));
            }
        }
        let mut probs = Vec::with_capacity(batch * k);
        let mut total = T::ZERO;
        for (z, t) in self
            .data(logits)
            .chunks_exact(k)
            .zip(target.data().chunks_exact(k))
        {
            let max = z.iter().copied().fold(z[0], T::max);
            let denom: T = z.iter().map(|&v| (v - max).exp()).sum();
            let log_denom = denom.ln();
            for (&zi, &ti) in z.iter().zip(t) {
                let log_p = zi - max - log_denom;
                probs.push(log_p.exp());
                total -= ti * log_p;
            }
        }
        let loss = total / T::from_usize(batch);
        self.push(
            &[1],
            vec![loss],
            Op::SoftmaxCrossEntropy {
                logits,
                target: target.data().to_vec(),
                probs,
                batch,
            },
            &[logits],
        )
    }

    /// `[B, N, C] → [B, C]`, averaging over tokens.
    pub fn mean_tokens(&mut self, x: Var) -> Result<Var> {
        let &[b, n, c] = self.shape(x) else {
            return Err(Error::shape(format!(
                "mean_tokens expects [B, N, C], got {:?}",
                self.shape(x)
            )));
        };
        let inv = T::ONE / T::from_usize(n);
        let mut out = vec![T::ZERO; b * c];
        for (sample, acc) in self
            .data(x)
            .chunks_exact(n * c)
            .zip(out.chunks_exact_mut(c))
        {
            for token in sample.chunks_exact(c) {
                acc.iter_mut().zip(token).for_each(|(a, &v)| *a += v);
            }
            acc.iter_mut().for_each(|a| *a *= inv);
        }
        self.push(
            &[b, c],
            out,
            Op::MeanTokens {
                x,
                tokens: n,
                channels: c,
            },
            &[x],
        )
    }

    /// Applies a prepared 2D transform to each `[N, C]` slab of `x`.
    pub fn transform2d(&mut self, x: Var, transform: &Arc<Transform2d<T>>) -> Result<Var> {
        let shape = self.shape(x);
        let slab = match shape {
            [n, c] | [_, n, c] => n * c,
            _ => 0,
        };
        if slab != transform.slab_len() {
            return Err(Error::shape(format!(
                "transform2d: input {shape:?} does not match a {}-element slab",
                transform.slab_len()
            )));
        }
        let mut out = self.data(x).to_vec();
        transform.forward(&mut out);
        let shape = shape.to_vec();
        self.push(
            &shape,
            out,
            Op::Transform {
                x,
                transform: Arc::clone(transform),
            },
            &[x],
        )
    }

    fn transform_of_kind(&mut self, x: Var, kind: TransformKind) -> Result<Var> {
        let (n, c) = match self.shape(x) {
            [n, c] | [_, n, c] => (*n, *c),
            other => {
                return Err(Error::shape(format!(
                    "2D transform expects [N, C] or [B, N, C], got {other:?}"
                )))
            }
        };
        let t = Arc::new(Transform2d::new(kind, n, c)?);
        self.transform2d(x, &t)
    }

    pub fn dct2d(&mut self, x: Var) -> Result<Var> {
        self.transform_of_kind(x, TransformKind::Dct)
    }

    pub fn hadamard2d(&mut self, x: Var) -> Result<Var> {
        self.transform_of_kind(x, TransformKind::Hadamard)
    }

    /// `[B, C, H, W]` images → `[B, N, C·P²]` flattened non-overlapping patches in
    /// raster order; features are channel-major within a patch.
    pub fn patchify(&mut self, images: Var, patch: usize) -> Result<Var> {
        let &[batch, channels, height, width] = self.shape(images) else {
            return Err(Error::shape(format!(
                "patchify expects [B, C, H, W], got {:?}",
                self.shape(images)
            )));
        };
        if patch == 0 || height % patch != 0 || width % patch != 0 {
            return Err(Error::shape(format!(
                "patchify: {height}x{width} image is not divisible into {patch}x{patch} patches"
            )));
        }
        let geometry = PatchGeometry {
            batch,
            channels,
            height,
            width,
            patch,
        };
        let src = self.data(images);
        let mut out = vec![T::ZERO; src.len()];
        geometry.for_each_pixel(|img, tok| out[tok] = src[img]);
        self.push(
            &[batch, geometry.tokens(), geometry.features()],
            out,
            Op::Patchify {
                x: images,
                geometry,
            },
            &[images],
        )
    }

    /// Back-propagates from a one-element `loss`.
    ///
    /// Gradients from earlier calls on this tape are discarded; leaf tensors
    /// accumulate into their own `grad` buffers across calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::ONE]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dout) = grads[idx].take() else {
                continue;
            };
            self.apply_rule(idx, &dout, &mut grads);
            grads[idx] = Some(dout);
        }

        for (node, g) in self.nodes.iter_mut().zip(&grads) {
            if let (Op::Leaf, true, Some(g)) = (&node.op, node.needs_grad, g) {
                node.value.accumulate_grad(g);
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn apply_rule(&self, idx: usize, dout: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        match &nodes[idx].op {
            Op::Leaf => {}
            &Op::MatMul {
                a,
                b,
                rows,
                inner,
                cols,
            } => {
                if let Some(ga) = slot(nodes, grads, a) {
                    // dA = dOut · Bᵀ
                    gemm(
                        rows,
                        cols,
                        inner,
                        dout,
                        Layout::Normal,
                        nodes[b.0].value.data(),
                        Layout::Transposed,
                        T::ONE,
                        ga,
                    );
                }
                if let Some(gb) = slot(nodes, grads, b) {
                    // dB = Aᵀ · dOut, summed over all leading rows.
                    gemm(
                        inner,
                        rows,
                        cols,
                        nodes[a.0].value.data(),
                        Layout::Transposed,
                        dout,
                        Layout::Normal,
                        T::ONE,
                        gb,
                    );
                }
            }
            &Op::AddBias { x, bias } => {
                if let Some(gx) = slot(nodes, grads, x) {
                    add_into(gx, dout);
                }
                if let Some(gb) = slot(nodes, grads, bias) {
                    let c = gb.len();
                    for row in dout.chunks_exact(c) {
                        add_into(gb, row);
                    }
                }
            }
            &Op::Add { a, b } => {
                if let Some(ga) = slot(nodes, grads, a) {
                    add_into(ga, dout);
                }
                if let Some(gb) = slot(nodes, grads, b) {
                    add_into(gb, dout);
                }
            }
            &Op::Mul { a, b } => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                if let Some(ga) = slot(nodes, grads, a) {
                    for ((g, &d), &y) in ga.iter_mut().zip(dout).zip(vb) {
                        *g += d * y;
                    }
                }
                if let Some(gb) = slot(nodes, grads, b) {
                    for ((g, &d), &x) in gb.iter_mut().zip(dout).zip(va) {
                        *g += d * x;
                    }
                }
            }
            &Op::Scale { x, alpha } => {
                if let Some(gx) = slot(nodes, grads, x) {
                    gx.iter_mut().zip(dout).for_each(|(g, &d)| *g += alpha * d);
                }
            }
            &Op::Sum { x } => {
                if let Some(gx) = slot(nodes, grads, x) {
                    let d = dout[0];
                    gx.iter_mut().for_each(|g| *g += d);
                }
            }
            &Op::Concat {
                a,
                b,
                width_a,
                width_b,
            } => {
                let rows = dout.chunks_exact(width_a + width_b);
                if let Some(ga) = slot(nodes, grads, a) {
                    for (g, d) in ga.chunks_exact_mut(width_a).zip(rows.clone()) {
                        add_into(g, &d[..width_a]);
                    }
                }
                if let Some(gb) = slot(nodes, grads, b) {
                    for (g, d) in gb.chunks_exact_mut(width_b).zip(rows) {
                        add_into(g, &d[width_a..]);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let c = nodes[gamma.0].value.len();
                let cf = T::from_usize(c);
                let gv = nodes[gamma.0].value.data();
                if let Some(gg) = slot(nodes, grads, *gamma) {
                    for (d, n) in dout.chunks_exact(c).zip(normalized.chunks_exact(c)) {
                        for ((g, &di), &ni) in gg.iter_mut().zip(d).zip(n) {
                            *g += di * ni;
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, *beta) {
                    for d in dout.chunks_exact(c) {
                        add_into(gb, d);
                    }
                }
                if let Some(gx) = slot(nodes, grads, *x) {
                    let mut dn = vec![T::ZERO; c];
                    for (((gxr, d), n), &r) in gx
                        .chunks_exact_mut(c)
                        .zip(dout.chunks_exact(c))
                        .zip(normalized.chunks_exact(c))
                        .zip(inv_std)
                    {
                        let mut mean_dn = T::ZERO;
                        let mut mean_dn_n = T::ZERO;
                        for j in 0..c {
                            dn[j] = d[j] * gv[j];
                            mean_dn += dn[j];
                            mean_dn_n += dn[j] * n[j];
                        }
                        mean_dn /= cf;
                        mean_dn_n /= cf;
                        for j in 0..c {
                            gxr[j] += r * (dn[j] - mean_dn - n[j] * mean_dn_n);
                        }
                    }
                }
            }
            &Op::Gelu { x } => {
                if let Some(gx) = slot(nodes, grads, x) {
                    let xs = nodes[x.0].value.data();
                    for ((g, &d), &v) in gx.iter_mut().zip(dout).zip(xs) {
                        *g += d * gelu_derivative(v);
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
                batch,
            } => {
                if let Some(gl) = slot(nodes, grads, *logits) {
                    let s = dout[0] / T::from_usize(*batch);
                    for ((g, &p), &t) in gl.iter_mut().zip(probs).zip(target) {
                        *g += s * (p - t);
                    }
                }
            }
            &Op::MeanTokens {
                x,
                tokens,
                channels,
            } => {
                if let Some(gx) = slot(nodes, grads, x) {
                    let inv = T::ONE / T::from_usize(tokens);
                    for (gs, d) in gx
                        .chunks_exact_mut(tokens * channels)
                        .zip(dout.chunks_exact(channels))
                    {
                        for gt in gs.chunks_exact_mut(channels) {
                            gt.iter_mut().zip(d).for_each(|(g, &v)| *g += v * inv);
                        }
                    }
                }
            }
            Op::Transform { x, transform } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    let mut back = dout.to_vec();
                    transform.transpose(&mut back);
                    add_into(gx, &back);
                }
            }
            &Op::Patchify { x, geometry } => {
                if let Some(gx) = slot(nodes, grads, x) {
                    geometry.for_each_pixel(|img, tok| gx[img] += dout[tok]);
                }
            }
        }
    }
}

/// Lazily zeroed gradient buffer of `v`, or `None` if `v` is not differentiable.
fn slot<'g, T: Element>(
    nodes: &[Node<T>],
    grads: &'g mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'g mut Vec<T>> {
    let node = &nodes[v.0];
    if !node.needs_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::ZERO; node.value.len()]))
}

fn add_into<T: Element>(acc: &mut [T], src: &[T]) {
    acc.iter_mut().zip(src).for_each(|(a, &s)| *a += s);
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
// 1/sqrt(2π)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `x · Φ(x)` with Φ the standard normal CDF.
pub fn gelu<T: Element>(x: T) -> T {
    let half = T::from_f64(0.5);
    x * half * (T::ONE + (x * T::from_f64(FRAC_1_SQRT_2)).erf())
}

/// `Φ(x) + x · φ(x)`.
pub fn gelu_derivative<T: Element>(x: T) -> T {
    let half = T::from_f64(0.5);
    let cdf = half * (T::ONE + (x * T::from_f64(FRAC_1_SQRT_2)).erf());
    let pdf = T::from_f64(INV_SQRT_2PI) * (-(x * x) * half).exp();
    cdf + x * pdf
}

/// Central-difference gradient of a scalar function:
/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate `i`.
pub fn finite_diff_grad<T, F>(mut f: F, x: &Tensor<T>, h: T) -> Tensor<T>
where
    T: Element,
    F: FnMut(&Tensor<T>) -> T,
{
    let mut probe = x.clone();
    probe.grad = None;
    let two_h = h + h;
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.push((plus - minus) / two_h);
    }
    Tensor::new(x.shape(), grad).expect("gradient has the input's shape")
}
