//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the tape in reverse and accumulates gradients into the leaves
//! that were created with `requires_grad`.

use std::sync::Arc;

use super::ops::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use super::ops::sample::{build_taps, SampleMode, SampleTaps};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Marker for gathered positions that read as zero.
pub const GATHER_ZERO: u32 = u32::MAX;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias {
        x: Var,
        bias: Var,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Sum(Var),
    Mean(Var),
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        shared_b: bool,
    },
    Gather {
        x: Var,
        index: Arc<Vec<u32>>,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Softmax {
        x: Var,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    GridSample {
        features: Var,
        taps: Arc<SampleTaps>,
        channels: usize,
    },
    Charbonnier {
        pred: Var,
        target: Var,
        eps: f64,
    },
}

struct Node<T> {
    op: Op,
    shape: Vec<usize>,
    value: Vec<T>,
    requires_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, op: Op, inputs: &[Var], shape: Vec<usize>, value: Vec<T>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        if cfg!(debug_assertions)
            && !value.iter().all(|x| x.is_finite())
            && inputs
                .iter()
                .all(|v| self.nodes[v.0].value.iter().all(|x| x.is_finite()))
        {
            log::warn!("non-finite forward value from finite inputs in {op:?}");
        }
        self.push(op, shape, value, requires_grad)
    }

    /// Adds a tensor as a leaf; it receives gradients iff `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: &Tensor<T>) -> Var {
        self.push(
            Op::Leaf,
            tensor.shape().to_vec(),
            tensor.data().to_vec(),
            tensor.requires_grad,
        )
    }

    /// Adds constant data that never receives gradients.
    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        if numel(shape) != data.len() {
            return Err(Error::dim("constant", "numel", numel(shape), data.len()));
        }
        Ok(self.push(Op::Leaf, shape.to_vec(), data, false))
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.shape(v), self.value(v).to_vec()).expect("graph node shapes are valid")
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != sb.len() {
            return Err(Error::dim(op, "rank", sa.len(), sb.len()));
        }
        for (axis, (&x, &y)) in sa.iter().zip(sb).enumerate() {
            if x != y {
                return Err(Error::dim(op, format!("axis {axis}"), x, y));
            }
        }
        Ok(())
    }

    fn zip_with(
        &mut self,
        op: Op,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_op(op, &[a, b], shape, value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Add(a, b), "add", a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Sub(a, b), "sub", a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(Op::Mul(a, b), "mul", a, b, |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self
            .value(x)
            .iter()
            .map(|&v| T::from_f64(v.as_f64() * factor))
            .collect();
        let shape = self.shape(x).to_vec();
        self.push_op(Op::Scale(x, factor), &[x], shape, value)
    }

    /// Adds `bias` (length = last dimension of `x`) to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let d = *self.shape(x).last().expect("non-empty shape");
        let nb = numel(self.shape(bias));
        if nb != d {
            return Err(Error::dim("add_bias", "last axis", d, nb));
        }
        let b = self.value(bias);
        let value = self
            .value(x)
            .chunks(d)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &bb)| v + bb))
            .collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push_op(Op::AddBias { x, bias }, &[x, bias], shape, value))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::from_f64(slope);
        let value = self
            .value(x)
            .iter()
            .map(|&v| if v > T::zero() { v } else { v * s })
            .collect();
        let shape = self.shape(x).to_vec();
        self.push_op(Op::LeakyRelu { x, slope }, &[x], shape, value)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).iter().map(|v| v.as_f64()).sum();
        self.push_op(Op::Sum(x), &[x], vec![1], vec![T::from_f64(s)])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s: f64 = self.value(x).iter().map(|v| v.as_f64()).sum();
        self.push_op(Op::Mean(x), &[x], vec![1], vec![T::from_f64(s / n)])
    }

    /// Batched matrix product. `a` is `[.., M, K]`; `b` is either `[.., K, N]`
    /// with the same leading batch dimensions or a shared `[K, N]` matrix.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::Usage("matmul needs operands of rank >= 2".into()));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != kb {
            return Err(Error::dim("matmul", "inner", k, kb));
        }
        let batch = numel(&sa[..sa.len() - 2]);
        let shared_b = sb.len() == 2 && sa.len() > 2;
        if !shared_b {
            if sa.len() != sb.len() {
                return Err(Error::dim("matmul", "rank", sa.len(), sb.len()));
            }
            for (axis, (&x, &y)) in sa[..sa.len() - 2]
                .iter()
                .zip(&sb[..sb.len() - 2])
                .enumerate()
            {
                if x != y {
                    return Err(Error::dim("matmul", format!("batch axis {axis}"), x, y));
                }
            }
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![T::zero(); batch * m * n];
        let mut acc = vec![0.0f64; n];
        for bi in 0..batch {
            let a_mat = &av[bi * m * k..(bi + 1) * m * k];
            let b_mat = if shared_b {
                bv
            } else {
                &bv[bi * k * n..(bi + 1) * k * n]
            };
            for i in 0..m {
                acc.iter_mut().for_each(|x| *x = 0.0);
                for kk in 0..k {
                    let aik = a_mat[i * k + kk].as_f64();
                    for (x, bkn) in acc.iter_mut().zip(&b_mat[kk * n..(kk + 1) * n]) {
                        *x += aik * bkn.as_f64();
                    }
                }
                for (o, x) in out[(bi * m + i) * n..(bi * m + i + 1) * n]
                    .iter_mut()
                    .zip(&acc)
                {
                    *o = T::from_f64(*x);
                }
            }
        }
        let mut shape = sa[..sa.len() - 2].to_vec();
        shape.extend([m, n]);
        Ok(self.push_op(
            Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                shared_b,
            },
            &[a, b],
            shape,
            out,
        ))
    }

    /// `out[i] = x[index[i]]`, or zero where `index[i] == GATHER_ZERO`.
    pub fn gather(&mut self, x: Var, index: Arc<Vec<u32>>, shape: &[usize]) -> Result<Var> {
        if numel(shape) != index.len() {
            return Err(Error::dim("gather", "numel", numel(shape), index.len()));
        }
        let src = self.value(x);
        let mut value = Vec::with_capacity(index.len());
        for &i in index.iter() {
            if i == GATHER_ZERO {
                value.push(T::zero());
            } else {
                let v = *src.get(i as usize).ok_or_else(|| {
                    Error::Usage(format!("gather index {i} out of range {}", src.len()))
                })?;
                value.push(v);
            }
        }
        Ok(self.push_op(Op::Gather { x, index }, &[x], shape.to_vec(), value))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n = numel(self.shape(x));
        if numel(shape) != n {
            return Err(Error::dim("reshape", "numel", n, numel(shape)));
        }
        let index = Arc::new((0..n as u32).collect());
        self.gather(x, index, shape)
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank
            || perm
                .iter()
                .any(|&p| p >= rank || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Usage(format!(
                "invalid permutation {perm:?} for rank {rank}"
            )));
        }
        let mut in_strides = vec![1usize; rank];
        for i in (0..rank.saturating_sub(1)).rev() {
            in_strides[i] = in_strides[i + 1] * shape[i + 1];
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let total = numel(&shape);
        let mut index = Vec::with_capacity(total);
        let mut counter = vec![0usize; rank];
        for _ in 0..total {
            index.push(
                counter
                    .iter()
                    .zip(&strides)
                    .map(|(c, s)| c * s)
                    .sum::<usize>() as u32,
            );
            for ax in (0..rank).rev() {
                counter[ax] += 1;
                if counter[ax] < out_shape[ax] {
                    break;
                }
                counter[ax] = 0;
            }
        }
        self.gather(x, Arc::new(index), &out_shape)
    }

    /// Contiguous range `[start, start + len)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Usage(format!(
                "slice axis {axis} out of rank {}",
                shape.len()
            )));
        }
        if len == 0 || start + len > shape[axis] {
            return Err(Error::dim(
                "slice",
                format!("axis {axis}"),
                shape[axis],
                start + len,
            ));
        }
        let outer = numel(&shape[..axis]);
        let inner = numel(&shape[axis + 1..]);
        let mut index = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            for a in start..start + len {
                let base = (o * shape[axis] + a) * inner;
                index.extend((base..base + inner).map(|i| i as u32));
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.gather(x, Arc::new(index), &out_shape)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(
                *inputs
                    .first()
                    .ok_or_else(|| Error::Usage("concat of nothing".into()))?,
            )
            .to_vec();
        if axis >= first.len() {
            return Err(Error::Usage(format!(
                "concat axis {axis} out of rank {}",
                first.len()
            )));
        }
        let mut total_axis = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != first.len() {
                return Err(Error::dim("concat", "rank", first.len(), s.len()));
            }
            for (ax, (&x, &y)) in first.iter().zip(s).enumerate() {
                if ax != axis && x != y {
                    return Err(Error::dim("concat", format!("axis {ax}"), x, y));
                }
            }
            total_axis += s[axis];
        }
        let outer = numel(&first[..axis]);
        let inner = numel(&first[axis + 1..]);
        let mut value = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for &v in inputs {
                let block = self.shape(v)[axis] * inner;
                value.extend_from_slice(&self.value(v)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first;
        shape[axis] = total_axis;
        Ok(self.push_op(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
            shape,
            value,
        ))
    }

    /// Softmax over the last axis. Entries whose input is `-inf` get weight 0.
    pub fn softmax(&mut self, x: Var) -> Var {
        let d = *self.shape(x).last().expect("non-empty shape");
        let mut value = Vec::with_capacity(self.value(x).len());
        let mut row64 = vec![0.0f64; d];
        for row in self.value(x).chunks(d) {
            let max = row
                .iter()
                .map(|v| v.as_f64())
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (r, v) in row64.iter_mut().zip(row) {
                *r = if v.as_f64() == f64::NEG_INFINITY {
                    0.0
                } else {
                    (v.as_f64() - max).exp()
                };
                z += *r;
            }
            value.extend(row64.iter().map(|r| T::from_f64(r / z)));
        }
        let shape = self.shape(x).to_vec();
        self.push_op(Op::Softmax { x }, &[x], shape, value)
    }

    /// Cross-correlation of a `C_in×H×W` input with a `C_out×C_in×k×k` kernel.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 3 {
            return Err(Error::dim("conv2d", "input rank", 3, sx.len()));
        }
        if sw.len() != 4 {
            return Err(Error::dim("conv2d", "kernel rank", 4, sw.len()));
        }
        if sw[1] != sx[0] {
            return Err(Error::dim("conv2d", "input channels", sw[1], sx[0]));
        }
        if sw[2] != sw[3] {
            return Err(Error::dim("conv2d", "kernel width", sw[2], sw[3]));
        }
        let k = sw[2];
        if k.is_multiple_of(2) {
            return Err(Error::Config(format!("conv2d kernel size {k} must be odd")));
        }
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be >= 1".into()));
        }
        if let Some(b) = b {
            let nb = numel(self.shape(b));
            if nb != sw[0] {
                return Err(Error::dim("conv2d", "bias", sw[0], nb));
            }
        }
        let out_dim = |n: usize, axis: &str| -> Result<usize> {
            let padded = n + 2 * padding;
            if padded < k || !(padded - k).is_multiple_of(stride) {
                return Err(Error::Config(format!(
                    "conv2d {axis}: ({n} + 2*{padding} - {k}) is not a non-negative multiple of stride {stride}"
                )));
            }
            Ok((padded - k) / stride + 1)
        };
        let geom = ConvGeometry {
            c_in: sx[0],
            h: sx[1],
            w: sx[2],
            c_out: sw[0],
            k,
            stride,
            pad: padding,
            h_out: out_dim(sx[1], "height")?,
            w_out: out_dim(sx[2], "width")?,
        };
        let value = conv2d_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            &geom,
        );
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push_op(
            Op::Conv2d { x, w, b, geom },
            &inputs,
            vec![geom.c_out, geom.h_out, geom.w_out],
            value,
        ))
    }

    /// Samples an `H×W×T×C` volume at normalized `(x, y, t)` queries, giving `N×C`.
    /// Gradients reach the features only.
    pub fn grid_sample_3d(
        &mut self,
        features: Var,
        coords: &[[f64; 3]],
        mode: SampleMode,
    ) -> Result<Var> {
        let s = self.shape(features).to_vec();
        if s.len() != 4 {
            return Err(Error::dim("grid_sample_3d", "feature rank", 4, s.len()));
        }
        let taps = build_taps([s[0], s[1], s[2]], coords, mode)?;
        self.grid_sample_with_taps(features, Arc::new(taps))
    }

    pub(crate) fn grid_sample_with_taps(
        &mut self,
        features: Var,
        taps: Arc<SampleTaps>,
    ) -> Result<Var> {
        let s = self.shape(features).to_vec();
        if s.len() != 4 {
            return Err(Error::dim("grid_sample_3d", "feature rank", 4, s.len()));
        }
        let c = s[3];
        let nq = taps.num_queries();
        let src = self.value(features);
        let mut value = Vec::with_capacity(nq * c);
        let mut acc = vec![0.0f64; c];
        if taps.taps_per_query > 0 {
            for q in taps.taps.chunks(taps.taps_per_query) {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for &(node, wgt) in q {
                    if wgt == 0.0 {
                        continue;
                    }
                    let base = node as usize * c;
                    for (a, v) in acc.iter_mut().zip(&src[base..base + c]) {
                        *a += wgt * v.as_f64();
                    }
                }
                value.extend(acc.iter().map(|&a| T::from_f64(a)));
            }
        }
        // An empty query list yields a 0×C result; keep the node rank-2.
        let shape = vec![nq, c];
        Ok(self.push_op(
            Op::GridSample {
                features,
                taps,
                channels: c,
            },
            &[features],
            shape,
            value,
        ))
    }

    /// Mean of `sqrt(d² + eps²)` over all elements, `d = pred - target`.
    ///
    /// Evaluated as `eps + mean(d² / (sqrt(d² + eps²) + eps))` so that
    /// identical inputs yield `eps` exactly.
    pub fn charbonnier(&mut self, pred: Var, target: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::Input(format!(
                "charbonnier eps must be > 0, got {eps}"
            )));
        }
        self.same_shape("charbonnier", pred, target)?;
        let n = self.value(pred).len() as f64;
        let excess: f64 = self
            .value(pred)
            .iter()
            .zip(self.value(target))
            .map(|(p, t)| {
                let d = p.as_f64() - t.as_f64();
                let d2 = d * d;
                d2 / ((d2 + eps * eps).sqrt() + eps)
            })
            .sum();
        let value = vec![T::from_f64(eps + excess / n)];
        Ok(self.push_op(
            Op::Charbonnier { pred, target, eps },
            &[pred, target],
            vec![1],
            value,
        ))
    }

    /// Reverse pass from a scalar node. Leaf gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if numel(self.shape(loss)) != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let slot = self.leaf_grads[i].get_or_insert_with(|| vec![T::zero(); g.len()]);
                for (s, v) in slot.iter_mut().zip(&g) {
                    *s = *s + *v;
                }
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    self.send(&mut grads, *a, || g.clone());
                    self.send(&mut grads, *b, || g.clone());
                }
                Op::Sub(a, b) => {
                    self.send(&mut grads, *a, || g.clone());
                    self.send(&mut grads, *b, || g.iter().map(|&v| -v).collect());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    self.send(&mut grads, *a, || {
                        g.iter().zip(bv).map(|(&x, &y)| x * y).collect()
                    });
                    self.send(&mut grads, *b, || {
                        g.iter().zip(av).map(|(&x, &y)| x * y).collect()
                    });
                }
                Op::Scale(x, f) => {
                    let f = *f;
                    self.send(&mut grads, *x, || {
                        g.iter().map(|&v| T::from_f64(v.as_f64() * f)).collect()
                    });
                }
                Op::AddBias { x, bias } => {
                    let d = numel(self.shape(*bias));
                    self.send(&mut grads, *x, || g.clone());
                    self.send(&mut grads, *bias, || {
                        let mut acc = vec![0.0f64; d];
                        for row in g.chunks(d) {
                            for (a, v) in acc.iter_mut().zip(row) {
                                *a += v.as_f64();
                            }
                        }
                        acc.into_iter().map(T::from_f64).collect()
                    });
                }
                Op::LeakyRelu { x, slope } => {
                    let s = T::from_f64(*slope);
                    let xv = self.value(*x);
                    self.send(&mut grads, *x, || {
                        g.iter()
                            .zip(xv)
                            .map(|(&gv, &v)| if v > T::zero() { gv } else { gv * s })
                            .collect()
                    });
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    self.send(&mut grads, *x, || vec![g[0]; n]);
                }
                Op::Mean(x) => {
                    let n = self.value(*x).len();
                    let v = T::from_f64(g[0].as_f64() / n as f64);
                    self.send(&mut grads, *x, || vec![v; n]);
                }
                Op::MatMul {
                    a,
                    b,
                    batch,
                    m,
                    k,
                    n,
                    shared_b,
                } => {
                    let (batch, m, k, n, shared_b) = (*batch, *m, *k, *n, *shared_b);
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let b_mat = |bi: usize| {
                        if shared_b {
                            bv
                        } else {
                            &bv[bi * k * n..(bi + 1) * k * n]
                        }
                    };
                    self.send(&mut grads, *a, || {
                        let mut da = vec![T::zero(); batch * m * k];
                        for bi in 0..batch {
                            let bm = b_mat(bi);
                            for i in 0..m {
                                let grow = &g[(bi * m + i) * n..(bi * m + i + 1) * n];
                                for kk in 0..k {
                                    let s: f64 = grow
                                        .iter()
                                        .zip(&bm[kk * n..(kk + 1) * n])
                                        .map(|(x, y)| x.as_f64() * y.as_f64())
                                        .sum();
                                    da[(bi * m + i) * k + kk] = T::from_f64(s);
                                }
                            }
                        }
                        da
                    });
                    self.send(&mut grads, *b, || {
                        let out_batches = if shared_b { 1 } else { batch };
                        let mut db = vec![0.0f64; out_batches * k * n];
                        for bi in 0..batch {
                            let ob = if shared_b { 0 } else { bi };
                            let dbm = &mut db[ob * k * n..(ob + 1) * k * n];
                            for i in 0..m {
                                let grow = &g[(bi * m + i) * n..(bi * m + i + 1) * n];
                                for kk in 0..k {
                                    let aik = av[(bi * m + i) * k + kk].as_f64();
                                    if aik == 0.0 {
                                        continue;
                                    }
                                    for (d, gv) in dbm[kk * n..(kk + 1) * n].iter_mut().zip(grow) {
                                        *d += aik * gv.as_f64();
                                    }
                                }
                            }
                        }
                        db.into_iter().map(T::from_f64).collect()
                    });
                }
                Op::Gather { x, index } => {
                    let n = self.value(*x).len();
                    self.send(&mut grads, *x, || {
                        let mut dx = vec![0.0f64; n];
                        for (&i, gv) in index.iter().zip(&g) {
                            if i != GATHER_ZERO {
                                dx[i as usize] += gv.as_f64();
                            }
                        }
                        dx.into_iter().map(T::from_f64).collect()
                    });
                }
                Op::Concat { inputs, axis } => {
                    let axis = *axis;
                    let shape = &node.shape;
                    let outer = numel(&shape[..axis]);
                    let inner = numel(&shape[axis + 1..]);
                    let total = shape[axis] * inner;
                    let mut offset = 0;
                    for &v in inputs {
                        let block = self.shape(v)[axis] * inner;
                        self.send(&mut grads, v, || {
                            let mut dv = Vec::with_capacity(outer * block);
                            for o in 0..outer {
                                dv.extend_from_slice(
                                    &g[o * total + offset..o * total + offset + block],
                                );
                            }
                            dv
                        });
                        offset += block;
                    }
                }
                Op::Softmax { x } => {
                    let d = *node.shape.last().expect("non-empty shape");
                    let y = &node.value;
                    self.send(&mut grads, *x, || {
                        let mut dx = Vec::with_capacity(y.len());
                        for (yr, gr) in y.chunks(d).zip(g.chunks(d)) {
                            let dot: f64 = yr
                                .iter()
                                .zip(gr)
                                .map(|(a, b)| a.as_f64() * b.as_f64())
                                .sum();
                            dx.extend(
                                yr.iter()
                                    .zip(gr)
                                    .map(|(a, b)| T::from_f64(a.as_f64() * (b.as_f64() - dot))),
                            );
                        }
                        dx
                    });
                }
                Op::Conv2d { x, w, b, geom } => {
                    let need = (
                        self.requires_grad(*x),
                        self.requires_grad(*w),
                        b.is_some_and(|b| self.requires_grad(b)),
                    );
                    let cg = conv2d_backward(self.value(*x), self.value(*w), &g, geom, need);
                    let (x, w, b) = (*x, *w, *b);
                    if let Some(dx) = cg.dx {
                        self.send(&mut grads, x, || dx);
                    }
                    if let Some(dw) = cg.dw {
                        self.send(&mut grads, w, || dw);
                    }
                    if let (Some(b), Some(db)) = (b, cg.db) {
                        self.send(&mut grads, b, || db);
                    }
                }
                Op::GridSample {
                    features,
                    taps,
                    channels,
                } => {
                    let c = *channels;
                    let n = self.value(*features).len();
                    self.send(&mut grads, *features, || {
                        let mut df = vec![0.0f64; n];
                        if taps.taps_per_query > 0 {
                            for (q, gq) in taps.taps.chunks(taps.taps_per_query).zip(g.chunks(c)) {
                                for &(node, wgt) in q {
                                    let base = node as usize * c;
                                    for (d, gv) in df[base..base + c].iter_mut().zip(gq) {
                                        *d += wgt * gv.as_f64();
                                    }
                                }
                            }
                        }
                        df.into_iter().map(T::from_f64).collect()
                    });
                }
                Op::Charbonnier { pred, target, eps } => {
                    let (pv, tv) = (self.value(*pred), self.value(*target));
                    let scale = g[0].as_f64() / pv.len() as f64;
                    let eps2 = eps * eps;
                    let dpred: Vec<T> = pv
                        .iter()
                        .zip(tv)
                        .map(|(p, t)| {
                            let d = p.as_f64() - t.as_f64();
                            T::from_f64(scale * d / (d * d + eps2).sqrt())
                        })
                        .collect();
                    if self.requires_grad(*target) {
                        let dt: Vec<T> = dpred.iter().map(|&v| -v).collect();
                        self.send(&mut grads, *target, || dt);
                    }
                    self.send(&mut grads, *pred, || dpred);
                }
            }
        }
        Ok(())
    }

    /// Routes a gradient contribution to `target` if it participates in differentiation.
    fn send(&self, grads: &mut [Option<Vec<T>>], target: Var, make: impl FnOnce() -> Vec<T>) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        let contribution = make();
        match &mut grads[target.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(&contribution) {
                    *e = *e + *c;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }
}
