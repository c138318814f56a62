//! Reverse-mode tape over dense 2-D tensors.
//!
//! Every primitive evaluates eagerly, appends a node holding its value and
//! whatever the backward rule needs, and returns a [`Var`] handle. Nodes are
//! appended in evaluation order, so the node list is already topologically
//! sorted and [`Tape::backward`] is a single reverse sweep.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Reduce or operate down each column.
    Rows,
    /// Reduce or operate along each row.
    Cols,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    Softmax { x: Var, axis: Axis },
    MaskedSoftmax { x: Var },
    LayerNorm { x: Var, axis: Axis, inv_std: Vec<f64> },
    Transpose(Var),
    Concat { inputs: Vec<Var>, axis: Axis },
    Slice { x: Var, axis: Axis, start: usize },
    Sum { x: Var, axis: Axis },
    Mean { x: Var, axis: Axis },
    SumAll(Var),
    Broadcast(Var),
    GatherRows { table: Var, index: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    checked: bool,
    first_non_finite: Option<String>,
    kink_distance: f64,
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            checked: false,
            first_non_finite: None,
            kink_distance: f64::INFINITY,
        }
    }

    /// A tape that panics as soon as any primitive produces NaN or Inf.
    pub fn checked() -> Self {
        Self {
            checked: true,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Name of the first primitive whose output was not finite.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.first_non_finite.as_deref()
    }

    /// Smallest |input| seen by any relu or leaky_relu on this tape.
    pub fn kink_distance(&self) -> f64 {
        self.kink_distance
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true, "leaf")
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false, "constant")
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Var {
        if self.first_non_finite.is_none() && !value.is_finite() {
            if self.checked {
                panic!("non-finite output from {name} at node {}", self.nodes.len());
            }
            self.first_non_finite = Some(format!("{name} (node {})", self.nodes.len()));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims2().expect("tape tensors are at most rank 2")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg, "matmul"))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(Error::shape(op, format!("{da:?} vs {db:?}")));
        }
        Ok(da)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (r, c) = self.dims(a);
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::matrix(r, c, data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg, "add"))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg, "sub"))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg, "mul"))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).map(|a| a * s);
        let rg = self.rg(x);
        self.push(v, Op::Scale(x, s), rg, "scale")
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).map(|a| a + s);
        let rg = self.rg(x);
        self.push(v, Op::AddScalar(x), rg, "add_scalar")
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        let rg = self.rg(x);
        self.push(v, Op::Sigmoid(x), rg, "sigmoid")
    }

    fn note_kinks(&mut self, x: Var) {
        let d = self.value(x).data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        self.kink_distance = self.kink_distance.min(d);
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.note_kinks(x);
        let v = self.value(x).map(|a| if a > 0.0 { a } else { slope * a });
        let rg = self.rg(x);
        self.push(v, Op::LeakyRelu(x, slope), rg, "leaky_relu")
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.note_kinks(x);
        let v = self.value(x).map(|a| a.max(0.0));
        let rg = self.rg(x);
        self.push(v, Op::Relu(x), rg, "relu")
    }

    pub fn softmax(&mut self, x: Var, axis: Axis) -> Var {
        let (r, c) = self.dims(x);
        let mut out = self.value(x).clone();
        for lane in lanes(r, c, axis) {
            let max = lane.iter(out.data()).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in lane.indices() {
                let e = (out.data()[k] - max).exp();
                out.data_mut()[k] = e;
                total += e;
            }
            for k in lane.indices() {
                out.data_mut()[k] /= total;
            }
        }
        let rg = self.rg(x);
        self.push(out, Op::Softmax { x, axis }, rg, "softmax")
    }

    /// Row-wise softmax restricted to entries where `mask` is nonzero. Masked
    /// entries, and rows with no unmasked entry, come out as exact zeros.
    pub fn masked_softmax(&mut self, x: Var, mask: &Tensor) -> Result<Var> {
        let (r, c) = self.dims(x);
        if mask.dims2()? != (r, c) {
            return Err(Error::shape("masked_softmax", format!("{:?} vs mask {:?}", (r, c), mask.shape())));
        }
        let xv = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = i * c..(i + 1) * c;
            let max = row
                .clone()
                .filter(|&k| mask.data()[k] != 0.0)
                .fold(f64::NEG_INFINITY, |m, k| m.max(xv[k]));
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for k in row.clone() {
                if mask.data()[k] != 0.0 {
                    out[k] = (xv[k] - max).exp();
                    total += out[k];
                }
            }
            for k in row {
                out[k] /= total;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::MaskedSoftmax { x }, rg, "masked_softmax"))
    }

    /// Normalizes each lane to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, x: Var, axis: Axis, eps: f64) -> Var {
        let (r, c) = self.dims(x);
        let mut out = self.value(x).clone();
        let mut inv_std = Vec::new();
        for lane in lanes(r, c, axis) {
            let n = lane.len as f64;
            let mean = lane.iter(out.data()).sum::<f64>() / n;
            let var = lane.iter(out.data()).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let s = 1.0 / (var + eps).sqrt();
            for k in lane.indices() {
                out.data_mut()[k] = (out.data()[k] - mean) * s;
            }
            inv_std.push(s);
        }
        let rg = self.rg(x);
        self.push(out, Op::LayerNorm { x, axis, inv_std }, rg, "layer_norm")
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let v = self.value(x).transpose();
        let rg = self.rg(x);
        self.push(v, Op::Transpose(x), rg, "transpose")
    }

    pub fn concat(&mut self, inputs: &[Var], axis: Axis) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let dims: Vec<_> = inputs.iter().map(|&v| self.dims(v)).collect();
        let out = match axis {
            Axis::Rows => {
                let c = dims[0].1;
                if dims.iter().any(|d| d.1 != c) {
                    return Err(Error::shape("concat", format!("column counts differ: {dims:?}")));
                }
                let r: usize = dims.iter().map(|d| d.0).sum();
                let mut data = Vec::with_capacity(r * c);
                for &v in inputs {
                    data.extend_from_slice(self.value(v).data());
                }
                Tensor::matrix(r, c, data)?
            }
            Axis::Cols => {
                let r = dims[0].0;
                if dims.iter().any(|d| d.0 != r) {
                    return Err(Error::shape("concat", format!("row counts differ: {dims:?}")));
                }
                let c: usize = dims.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(r * c);
                for i in 0..r {
                    for &v in inputs {
                        data.extend_from_slice(self.value(v).row_slice(i));
                    }
                }
                Tensor::matrix(r, c, data)?
            }
        };
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(out, Op::Concat { inputs: inputs.to_vec(), axis }, rg, "concat"))
    }

    /// Takes `len` rows (`Axis::Rows`) or columns (`Axis::Cols`) from `start`.
    pub fn slice(&mut self, x: Var, axis: Axis, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        let extent = if axis == Axis::Rows { r } else { c };
        if start + len > extent {
            return Err(Error::shape("slice", format!("[{start}, {}) of {extent}", start + len)));
        }
        let src = self.value(x);
        let out = match axis {
            Axis::Rows => Tensor::matrix(len, c, src.data()[start * c..(start + len) * c].to_vec())?,
            Axis::Cols => {
                let mut data = Vec::with_capacity(r * len);
                for i in 0..r {
                    data.extend_from_slice(&src.row_slice(i)[start..start + len]);
                }
                Tensor::matrix(r, len, data)?
            }
        };
        let rg = self.rg(x);
        Ok(self.push(out, Op::Slice { x, axis, start }, rg, "slice"))
    }

    fn reduce(&self, x: Var, axis: Axis, scale_by_len: bool) -> Tensor {
        let (r, c) = self.dims(x);
        let data = self.value(x).data();
        let lanes: Vec<f64> = lanes(r, c, axis)
            .map(|lane| {
                let s: f64 = lane.iter(data).sum();
                if scale_by_len {
                    s / lane.len as f64
                } else {
                    s
                }
            })
            .collect();
        match axis {
            Axis::Rows => Tensor::row(lanes),
            Axis::Cols => Tensor::column(lanes),
        }
    }

    pub fn sum(&mut self, x: Var, axis: Axis) -> Var {
        let v = self.reduce(x, axis, false);
        let rg = self.rg(x);
        self.push(v, Op::Sum { x, axis }, rg, "sum")
    }

    pub fn mean(&mut self, x: Var, axis: Axis) -> Var {
        let v = self.reduce(x, axis, true);
        let rg = self.rg(x);
        self.push(v, Op::Mean { x, axis }, rg, "mean")
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg, "sum_all")
    }

    /// Expands a `1 x c`, `r x 1` or `1 x 1` tensor to `rows x cols`.
    pub fn broadcast(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        if !((r == 1 || r == rows) && (c == 1 || c == cols)) {
            return Err(Error::shape("broadcast", format!("[{r}, {c}] to [{rows}, {cols}]")));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let si = if r == 1 { 0 } else { i };
                let sj = if c == 1 { 0 } else { j };
                data.push(src[si * c + sj]);
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(rows, cols, data)?, Op::Broadcast(x), rg, "broadcast"))
    }

    /// `x + bias` with a `1 x c` bias replicated over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        let b = self.broadcast(bias, r, c)?;
        self.add(x, b)
    }

    /// Selects rows of `table`; the backward pass scatter-adds.
    pub fn gather_rows(&mut self, table: Var, index: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(table);
        let src = self.value(table);
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= r {
                return Err(Error::shape("gather_rows", format!("row {i} of {r}")));
            }
            data.extend_from_slice(src.row_slice(i));
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::matrix(index.len(), c, data)?,
            Op::GatherRows { table, index: index.to_vec() },
            rg,
            "gather_rows",
        ))
    }

    /// Back-propagates from a single-element output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("output must be scalar, got {:?}", self.value(output).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let (r, c) = self.dims(output);
        grads[output.0] = Some(Tensor::filled(r, c, 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        let mut acc = |v: Var, contrib: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if self.rg(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, self.value(*b).data(), true, 0.0, &mut da);
                    acc(*a, Tensor::matrix(m, k, da).unwrap());
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, self.value(*a).data(), true, g.data(), false, 0.0, &mut db);
                    acc(*b, Tensor::matrix(k, n, db).unwrap());
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, elementwise(g, self.value(*b), |gv, bv| gv * bv));
                }
                if self.rg(*b) {
                    acc(*b, elementwise(g, self.value(*a), |gv, av| gv * av));
                }
            }
            Op::Scale(x, s) => acc(*x, g.map(|v| v * s)),
            Op::AddScalar(x) => acc(*x, g.clone()),
            Op::Sigmoid(x) => acc(*x, elementwise(g, y, |gv, yv| gv * yv * (1.0 - yv))),
            Op::LeakyRelu(x, slope) => {
                let s = *slope;
                acc(*x, elementwise(g, self.value(*x), |gv, xv| if xv > 0.0 { gv } else { s * gv }))
            }
            Op::Relu(x) => acc(*x, elementwise(g, self.value(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 })),
            Op::Softmax { x, axis } => {
                let (r, c) = y.dims2().unwrap();
                let mut dx = vec![0.0; r * c];
                for lane in lanes(r, c, *axis) {
                    let dot: f64 = lane.indices().map(|k| g.data()[k] * y.data()[k]).sum();
                    for k in lane.indices() {
                        dx[k] = y.data()[k] * (g.data()[k] - dot);
                    }
                }
                acc(*x, Tensor::matrix(r, c, dx).unwrap());
            }
            Op::MaskedSoftmax { x } => {
                let (r, c) = y.dims2().unwrap();
                let mut dx = vec![0.0; r * c];
                for lane in lanes(r, c, Axis::Cols) {
                    let dot: f64 = lane.indices().map(|k| g.data()[k] * y.data()[k]).sum();
                    for k in lane.indices() {
                        dx[k] = y.data()[k] * (g.data()[k] - dot);
                    }
                }
                acc(*x, Tensor::matrix(r, c, dx).unwrap());
            }
            Op::LayerNorm { x, axis, inv_std } => {
                let (r, c) = y.dims2().unwrap();
                let mut dx = vec![0.0; r * c];
                for (lane, &s) in lanes(r, c, *axis).zip(inv_std) {
                    let n = lane.len as f64;
                    let mean_g: f64 = lane.indices().map(|k| g.data()[k]).sum::<f64>() / n;
                    let mean_gy: f64 = lane.indices().map(|k| g.data()[k] * y.data()[k]).sum::<f64>() / n;
                    for k in lane.indices() {
                        dx[k] = s * (g.data()[k] - mean_g - y.data()[k] * mean_gy);
                    }
                }
                acc(*x, Tensor::matrix(r, c, dx).unwrap());
            }
            Op::Transpose(x) => acc(*x, g.transpose()),
            Op::Concat { inputs, axis } => {
                let mut offset = 0;
                for &v in inputs {
                    let (vr, vc) = self.dims(v);
                    let part = match axis {
                        Axis::Rows => {
                            let c = vc;
                            Tensor::matrix(vr, vc, g.data()[offset * c..(offset + vr) * c].to_vec()).unwrap()
                        }
                        Axis::Cols => {
                            let mut data = Vec::with_capacity(vr * vc);
                            for i in 0..vr {
                                data.extend_from_slice(&g.row_slice(i)[offset..offset + vc]);
                            }
                            Tensor::matrix(vr, vc, data).unwrap()
                        }
                    };
                    offset += if *axis == Axis::Rows { vr } else { vc };
                    acc(v, part);
                }
            }
            Op::Slice { x, axis, start } => {
                let (r, c) = self.dims(*x);
                let mut dx = Tensor::zeros(r, c);
                let (gr, gc) = g.dims2().unwrap();
                for i in 0..gr {
                    for j in 0..gc {
                        let (si, sj) = match axis {
                            Axis::Rows => (i + start, j),
                            Axis::Cols => (i, j + start),
                        };
                        dx.set(si, sj, g.get(i, j));
                    }
                }
                acc(*x, dx);
            }
            Op::Sum { x, axis } | Op::Mean { x, axis } => {
                let (r, c) = self.dims(*x);
                let is_mean = matches!(node.op, Op::Mean { .. });
                let len = if *axis == Axis::Rows { r } else { c } as f64;
                let mut dx = Tensor::zeros(r, c);
                for i in 0..r {
                    for j in 0..c {
                        let gv = match axis {
                            Axis::Rows => g.data()[j],
                            Axis::Cols => g.data()[i],
                        };
                        dx.set(i, j, if is_mean { gv / len } else { gv });
                    }
                }
                acc(*x, dx);
            }
            Op::SumAll(x) => {
                let (r, c) = self.dims(*x);
                acc(*x, Tensor::filled(r, c, g.item()));
            }
            Op::Broadcast(x) => {
                let (r, c) = self.dims(*x);
                let (gr, gc) = g.dims2().unwrap();
                let mut dx = Tensor::zeros(r, c);
                for i in 0..gr {
                    for j in 0..gc {
                        let si = if r == 1 { 0 } else { i };
                        let sj = if c == 1 { 0 } else { j };
                        let cur = dx.get(si, sj);
                        dx.set(si, sj, cur + g.get(i, j));
                    }
                }
                acc(*x, dx);
            }
            Op::GatherRows { table, index } => {
                let (r, c) = self.dims(*table);
                let mut dx = Tensor::zeros(r, c);
                for (row, &i) in index.iter().enumerate() {
                    let dst = &mut dx.data_mut()[i * c..(i + 1) * c];
                    for (d, s) in dst.iter_mut().zip(g.row_slice(row)) {
                        *d += s;
                    }
                }
                acc(*table, dx);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (r, c) = a.dims2().unwrap();
    Tensor::matrix(r, c, a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()).unwrap()
}

#[derive(Clone, Copy)]
struct Lane {
    start: usize,
    stride: usize,
    len: usize,
}

impl Lane {
    fn indices(self) -> impl Iterator<Item = usize> {
        (0..self.len).map(move |t| self.start + t * self.stride)
    }

    fn iter(self, data: &[f64]) -> impl Iterator<Item = f64> + '_ {
        self.indices().map(move |k| data[k])
    }
}

fn lanes(r: usize, c: usize, axis: Axis) -> impl Iterator<Item = Lane> {
    let (count, start_step, stride, len) = match axis {
        Axis::Cols => (r, c, 1, c),
        Axis::Rows => (c, 1, c, r),
    };
    (0..count).map(move |i| Lane {
        start: i * start_step,
        stride,
        len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn sigmoid_of_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(0.0));
        let y = tape.sigmoid(x);
        assert_eq!(tape.value(y).item(), 0.5);
    }

    #[test]
    fn layer_norm_of_constant_is_zero() {
        for eps in [1e-5, 1e-3, 0.5] {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::row(vec![3.5; 6]));
            let y = tape.layer_norm(x, Axis::Cols, eps);
            assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn grad_of_sum_of_squares() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum_all(sq);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn shape_errors_name_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 3));
        let b = tape.leaf(Tensor::zeros(2, 3));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3] x [2, 3]"), "{err}");
        let c = tape.leaf(Tensor::zeros(3, 2));
        assert!(tape.add(a, c).is_err());
        assert!(tape.broadcast(a, 4, 3).is_err());
    }

    #[test]
    fn masked_softmax_rows() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[&[1.0, 5.0, 2.0], &[0.0, 0.0, 0.0]]));
        let mask = t(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 0.0]]);
        let y = tape.masked_softmax(x, &mask).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn non_finite_is_recorded() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![f64::MAX, 1.0]));
        let y = tape.scale(x, 10.0);
        let _ = y;
        assert!(tape.first_non_finite().unwrap().contains("scale"));
    }

    #[test]
    #[should_panic(expected = "non-finite")]
    fn checked_tape_panics() {
        let mut tape = Tape::checked();
        let x = tape.constant(Tensor::row(vec![f64::MAX]));
        tape.scale(x, 10.0);
    }

    #[test]
    fn gather_scatter() {
        let mut tape = Tape::new();
        let table = tape.leaf(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let g = tape.gather_rows(table, &[1, 1, 0]).unwrap();
        assert_eq!(tape.value(g).data(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        let s = tape.sum_all(g);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(table).unwrap().data(), &[1.0, 1.0, 2.0, 2.0]);
    }
}
